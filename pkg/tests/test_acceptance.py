"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the verdict lines are printed
even when output capture is on.
"""
import math
import time

import numpy as np
import pytest

from nwl import comparison as C
from nwl import kernels as K
from nwl import solver as S
from nwl.grid import PeriodicGrid

CFG = S.SimConfig()
DATA = S.DEFAULT_DATA


@pytest.fixture
def verdict(capsys):
    def report(number, passed, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if passed else 'FAIL'}: {detail}")
        return passed
    return report


def timed_sweep(k1, k2):
    start = time.perf_counter()
    table = C.delta_sweep(k1, k2, DATA, CFG)
    return table, time.perf_counter() - start


@pytest.fixture(scope="module")
def rate_one():
    return timed_sweep(K.exponential(), K.dirac())


@pytest.fixture(scope="module")
def rate_two():
    return timed_sweep(K.gaussian(), K.boussinesq_approximant(K.gaussian(), 2))


@pytest.fixture(scope="module")
def hierarchy():
    base, phi = K.exponential(), K.gaussian()
    cases = {"mix": (K.perturb(base, phi, "mix", nu=0.1), (1.6, 2.4)),
             "mollify": (K.perturb(base, phi, "mollify", nu=0.1), (1.6, 2.4)),
             "high_deriv": (K.perturb(base, phi, "high_deriv", a=0.05, k=2), (3.5, 4.5))}
    return {name: (C.delta_sweep(base, kernel, DATA, CFG), bounds) for name, (kernel, bounds) in cases.items()}


@pytest.fixture(scope="module")
def degenerate():
    bq = K.boussinesq_approximant(K.exponential(), 2)
    return bq, C.run_pair(K.exponential(), bq, DATA, CFG)


SCALING_CASES = ((0.25, 1), (0.5, 2))


@pytest.fixture(scope="module")
def scaling_runs():
    out = []
    for eps, p in SCALING_CASES:
        cfg = CFG.with_(epsilon=eps, p=p)
        dt = S.auto_dt([K.exponential()], cfg.grid, [cfg.delta], cfg.dt_safety)
        out.append((eps, p, C.scaling_equivalence_check(DATA, K.exponential(), cfg),
                    [S.run(DATA, K.exponential(), cfg, dt=dt),
                     S.run(DATA.scaled(eps), K.exponential(), cfg.with_(epsilon=1.0), dt=dt)]))
    return out


ROTATION_GRID = PeriodicGrid(256, 8 * math.pi)
ROTATION_MODES = (1.0, 2.0, 3.0)


@pytest.fixture(scope="module")
def linear_runs():
    gauss = S.InitialData(lambda x: np.exp(-x ** 2), lambda x: 0 * x)
    dalembert = S.run(gauss, K.dirac(), CFG.with_(epsilon=0.0, t_final=5.0), dt=0.005)
    cfg = S.SimConfig(grid=ROTATION_GRID, epsilon=0.0, delta=0.5, boundary_check=False)
    modes = S.InitialData(lambda x: sum(np.cos(m * x) for m in ROTATION_MODES), lambda x: 0 * x)
    rotation = S.run(modes, K.exponential(), cfg, dt=0.005)
    return dalembert, rotation


@pytest.fixture(scope="module")
def order_runs():
    dt = S.auto_dt([K.exponential()], CFG.grid, [CFG.delta], CFG.dt_safety)
    return {h: S.run(DATA, K.exponential(), CFG, dt=h) for h in (dt, dt / 2, dt / 8)}


def sweep_runs(table):
    return [traj for d in table.deltas for traj in table.series[d].runs]


def slope_check(table, lo, hi):
    return table.fitted_slope is not None and lo <= table.fitted_slope <= hi


def test_criterion_1_rate_k1(rate_one, verdict):
    table, seconds = rate_one
    ok = slope_check(table, 1.6, 2.4) and seconds < 120
    assert verdict(1, ok, f"exponential vs dirac slope {table.fitted_slope:.4f} in [1.6, 2.4], "
                          f"sweep took {seconds:.2f} s (< 120 s)")


def test_criterion_2_rate_k2(rate_two, verdict):
    table, seconds = rate_two
    ok = slope_check(table, 3.5, 4.5) and seconds < 120
    assert verdict(2, ok, f"gaussian vs approximant(gaussian, 2) slope {table.fitted_slope:.4f} in [3.5, 4.5], "
                          f"sweep took {seconds:.2f} s")


def test_criterion_3_degenerate_approximant(degenerate, verdict):
    bq, series = degenerate
    xi = np.linspace(0, 50, 5001)
    same_symbol = np.array_equal(bq(xi), K.exponential()(xi))
    worst = float(np.max(series.diff_norm))
    ok = same_symbol and series.complete and worst <= 1e-12
    assert verdict(3, ok, f"approximant(exponential, 2) symbol identical: {same_symbol}, "
                          f"max diff_norm {worst:.3g} <= 1e-12")


def test_criterion_4_hierarchy(hierarchy, verdict):
    parts, ok = [], True
    for name, (table, (lo, hi)) in hierarchy.items():
        ok &= slope_check(table, lo, hi)
        parts.append(f"{name} {table.fitted_slope:.4f} in [{lo}, {hi}]")
    assert verdict(4, ok, ", ".join(parts))


def test_criterion_5_scaling(scaling_runs, verdict):
    ok = all(gap <= 1e-10 for _, _, gap, _ in scaling_runs)
    detail = ", ".join(f"(eps {eps}, p {p}) discrepancy {gap:.3g}" for eps, p, gap, _ in scaling_runs)
    assert verdict(5, ok, detail + " <= 1e-10")


def test_criterion_6_conservation(rate_one, rate_two, hierarchy, degenerate, scaling_runs,
                                  linear_runs, order_runs, verdict):
    runs = sweep_runs(rate_one[0]) + sweep_runs(rate_two[0])
    for table, _ in hierarchy.values():
        runs += sweep_runs(table)
    runs += list(degenerate[1].runs)
    for *_, pair in scaling_runs:
        runs += pair
    runs += list(linear_runs) + list(order_runs.values())
    h_drift = max(traj.hamiltonian_drift for traj in runs)
    m_drift = max(traj.mean_drift for traj in runs)
    # dt halving on each kernel of the rate sweeps at the largest delta
    reductions = []
    for kernel in (K.exponential(), K.dirac(), K.gaussian(), K.boussinesq_approximant(K.gaussian(), 2)):
        cfg = CFG.with_(delta=0.4)
        dt = S.auto_dt([kernel], cfg.grid, [cfg.delta], cfg.dt_safety)
        coarse = S.run(DATA, kernel, cfg, dt=dt).hamiltonian_drift
        fine = S.run(DATA, kernel, cfg, dt=dt / 2).hamiltonian_drift
        reductions.append(coarse / fine)
    ok = h_drift <= 1e-6 and m_drift <= 1e-12 and min(reductions) >= 10
    assert verdict(6, ok, f"{len(runs)} runs: max H drift {h_drift:.3g} <= 1e-6, max mean drift {m_drift:.3g} "
                          f"<= 1e-12, dt halving reduces H drift by >= {min(reductions):.1f}x (>= 10x)")


def test_criterion_7_linear_oracles(linear_runs, verdict):
    dalembert, rotation = linear_runs
    x = CFG.grid.x
    exact = 0.5 * (np.exp(-(x - 5) ** 2) + np.exp(-(x + 5) ** 2))
    e1 = float(np.max(np.abs(dalembert.final.u.values - exact)))
    x, t = ROTATION_GRID.x, rotation.final.t
    exact = sum(np.cos(m * x) * math.cos(m / math.sqrt(1 + (0.5 * m) ** 2) * t) for m in ROTATION_MODES)
    e2 = float(np.max(np.abs(rotation.final.u.values - exact)))
    ok = dalembert.final.t == 5.0 and e1 <= 1e-8 and e2 <= 1e-8
    assert verdict(7, ok, f"d'Alembert max error {e1:.3g} at t = 5, 3-mode rotation max error {e2:.3g} (both <= 1e-8)")


def test_criterion_8_growth_envelope(rate_one, rate_two, verdict):
    factors = {}
    for label, (table, _) in (("exp/dirac", rate_one), ("gauss/bq2", rate_two)):
        for d in table.deltas:
            factors[f"{label} delta {d}"] = C.growth_check(table.series[d], threshold=3.0)
    worst = max(factors, key=lambda key: factors[key].max_factor)
    ok = all(check.passed for check in factors.values())
    assert verdict(8, ok, f"growth factor <= 3 for all {len(factors)} runs; worst {factors[worst].max_factor:.2f} "
                          f"({worst})")


def test_criterion_9_global_order(order_runs, verdict):
    (dt, coarse), (_, half), (_, ref) = sorted(order_runs.items(), reverse=True)
    e1 = float(np.max(np.abs(coarse.final.u.values - ref.final.u.values)))
    e2 = float(np.max(np.abs(half.final.u.values - ref.final.u.values)))
    ratio = e1 / e2
    assert verdict(9, 12 <= ratio <= 20, f"global error ratio {ratio:.3f} in [12, 20] (dt {dt:.4g}, errors {e1:.3g}, "
                                         f"{e2:.3g} vs dt/8 reference)")
