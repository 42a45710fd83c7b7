import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nwl import comparison as C
from nwl import kernels as K
from nwl import solver as S
from nwl.errors import DegenerateTable, InsufficientPoints, MismatchedRuns
from nwl.grid import GridField, sobolev_norm

DELTAS = np.array(C.DEFAULT_DELTAS)
CFG = S.SimConfig()


def table(errors, deltas=DELTAS):
    return C.RateTable(deltas, errors)


# --- fit_rate ----------------------------------------------------------------------

def test_fit_exact_power_laws():
    slope, residual = C.fit_rate(table(DELTAS ** 2))
    assert slope == pytest.approx(2.0, abs=1e-12) and residual <= 1e-12
    slope, _ = C.fit_rate(table(3 * DELTAS ** 4))
    assert slope == pytest.approx(4.0, abs=1e-12)


@pytest.mark.parametrize("deltas", [DELTAS, DELTAS[:4]], ids=["five", "four"])
def test_fit_with_correction_term(deltas):
    slope, _ = C.fit_rate(table(deltas ** 2 * (1 + 0.1 * deltas), deltas))
    assert 2.0 < slope < 2.1


@settings(max_examples=40)
@given(st.floats(0.5, 6.0), st.floats(1e-3, 1e3))  # keeps every error above the noise floor
def test_fit_recovers_any_power(rate, constant):
    slope, residual = C.fit_rate(table(constant * DELTAS ** rate))
    assert slope == pytest.approx(rate, abs=1e-9) and residual <= 1e-9


def test_fit_refuses_noise_floor_and_short_tables():
    with pytest.raises(DegenerateTable):
        C.fit_rate(table(np.full(5, 1e-13)))
    with pytest.raises(DegenerateTable):
        C.fit_rate(table(np.array([1e-3, 1e-4, 0.0, 1e-5, 1e-6])))
    with pytest.raises(InsufficientPoints):
        C.fit_rate(table(DELTAS[:3] ** 2, DELTAS[:3]))


def test_rate_table_rows_sorted_and_distinct(tmp_path):
    t = C.RateTable([0.1, 0.4, 0.2, 0.3], [1.0, 16.0, 4.0, 9.0])
    assert t.rows == [(0.4, 16.0), (0.3, 9.0), (0.2, 4.0), (0.1, 1.0)]
    with pytest.raises(ValueError):
        C.RateTable([0.1, 0.1, 0.2, 0.3], [1.0, 1.0, 4.0, 9.0])
    t.fitted_slope, t.fit_residual = C.fit_rate(t)
    path = tmp_path / "rates.csv"
    t.write_csv(path, {"note": "x", "passed": True})
    lines = path.read_text().splitlines()
    assert lines[0] == "delta,error" and lines[1] == "0.40000000000000002,16"
    footer = dict(line[2:].split(" = ") for line in lines if line.startswith("# "))
    assert float(footer["fitted_slope"]) == pytest.approx(2.0) and footer["passed"] == "true"


# --- growth_check ------------------------------------------------------------------

def synthetic(diff):
    t = np.linspace(0, 10, 101)
    return C.DiffSeries(t, diff(t), None)


def test_growth_check_examples():
    assert C.growth_check(synthetic(lambda t: 0 * t)).passed
    linear = C.growth_check(synthetic(lambda t: 0.01 * (1 + t)))
    assert linear.passed and linear.max_ratio == pytest.approx(0.01)
    exp = C.growth_check(synthetic(lambda t: 0.01 * np.exp(t)))
    assert not exp.passed
    assert C.growth_check(synthetic(lambda t: 0.01 * np.exp(t)), threshold=1e4).passed


def test_growth_check_quadratic_transient_fails():
    # the start-up shape of every pair run: r ~ t^2 until the dominant mode has turned
    check = C.growth_check(synthetic(lambda t: np.minimum(t, 3.0) ** 2))
    assert not check.passed and check.ratio_at_one == pytest.approx(0.5)
    assert check.max_factor == pytest.approx(9 / 4 / 0.5)


# --- run_pair ----------------------------------------------------------------------

def test_identical_kernels_give_zero_difference():
    series = C.run_pair(K.gaussian(), K.gaussian(), S.DEFAULT_DATA, CFG)
    assert series.complete and np.max(series.diff_norm) <= 1e-12
    assert series.diff_norm[0] == 0.0


def test_run_pair_regression_baseline():
    series = C.run_pair(K.exponential(), K.dirac(), S.DEFAULT_DATA, CFG)
    assert len(series.times) == 19 and series.times[-1] == 10.0
    assert series.diff_norm[-1] == pytest.approx(0.007606648407878749, abs=1e-10)
    assert series.error == pytest.approx(0.0006915134916253407, abs=1e-10)


def test_run_pair_is_deterministic():
    a = C.run_pair(K.exponential(), K.gaussian(), S.DEFAULT_DATA, CFG)
    b = C.run_pair(K.exponential(), K.gaussian(), S.DEFAULT_DATA, CFG)
    np.testing.assert_array_equal(a.diff_norm, b.diff_norm)
    np.testing.assert_array_equal(a.energy, b.energy)


def test_linear_difference_follows_phase_drift():
    # ε = 0: each mode of u_i is phi_hat cos(omega_i t), so the difference is known mode by mode
    cfg = CFG.with_(epsilon=0.0)
    data = S.windowed_cosine(0.25, width=10.0)
    series = C.run_pair(K.exponential(), K.dirac(), data, cfg)
    grid = cfg.grid
    phi = grid.sample(data.phi)
    w1 = K.sqrt_symbol(K.exponential(), cfg.delta * grid.xi) * grid.xi
    w2 = grid.xi
    predicted = np.array([sobolev_norm(GridField(grid, spectrum=phi.spectrum * (np.cos(w1 * t) - np.cos(w2 * t))), 2)
                          for t in series.times])
    np.testing.assert_allclose(series.diff_norm[1:], predicted[1:], rtol=1e-6)


def test_energy_consistency_in_linear_case():
    cfg = CFG.with_(epsilon=0.0)
    series = C.run_pair(K.exponential(), K.dirac(), S.DEFAULT_DATA, cfg)
    first, second = series.runs
    for a, b, diff, energy in zip(first, second, series.diff_norm, series.energy):
        rho = sobolev_norm(a.v - b.v, 2.0)
        assert energy == pytest.approx(math.sqrt(0.5 * (diff ** 2 + rho ** 2)), rel=1e-12, abs=1e-300)


def test_mismatched_runs_carry_partial_series():
    # eps = 1 with u < -1/2 is ill-posed: the Dirac run blows up
    data = S.InitialData(lambda x: -2.0 * np.exp(-x ** 2), lambda x: 0 * x)
    cfg = CFG.with_(epsilon=1.0, snapshot_stride=1, boundary_check=False)
    with pytest.raises(MismatchedRuns) as info:
        C.run_pair(K.exponential(), K.dirac(), data, cfg)
    partial = info.value.partial
    assert not partial.complete and "dirac" in partial.abort_reason
    assert info.value.exit_status == 3
    series = C.run_pair(K.exponential(), K.dirac(), data, cfg, allow_partial=True)
    assert not series.complete and len(series.times) == len(partial.times)


# --- delta_sweep -------------------------------------------------------------------

def test_sweep_needs_four_deltas():
    with pytest.raises(InsufficientPoints):
        C.delta_sweep(K.exponential(), K.dirac(), S.DEFAULT_DATA, CFG, deltas=[0.4, 0.3, 0.2])


def test_identical_kernel_sweep_is_degenerate():
    t = C.delta_sweep(K.gaussian(), K.gaussian(), S.DEFAULT_DATA, CFG)
    assert np.all(t.errors <= 1e-12)
    assert t.fitted_slope is None and "noise floor" in t.fit_error
    with pytest.raises(DegenerateTable):
        C.fit_rate(t)


def test_sweep_error_ordering_and_parallel_determinism():
    serial = C.delta_sweep(K.exponential(), K.dirac(), S.DEFAULT_DATA, CFG)
    parallel = C.delta_sweep(K.exponential(), K.dirac(), S.DEFAULT_DATA, CFG, jobs=3)
    np.testing.assert_array_equal(serial.errors, parallel.errors)
    assert list(serial.deltas) == sorted(C.DEFAULT_DELTAS, reverse=True)
    curves = np.array([serial.series[d].diff_norm for d in serial.deltas])
    # at every sampled time the difference shrinks with delta (5% slack for phase effects)
    assert np.all(curves[1:, 1:] <= 1.05 * curves[:-1, 1:])
    assert np.all(np.diff(serial.errors) < 0)


def test_rescore_reuses_runs():
    t = C.delta_sweep(K.exponential(), K.dirac(), S.DEFAULT_DATA, CFG)
    same = C.rescore(t, 2.0)
    np.testing.assert_array_equal(same.errors, t.errors)
    l2 = C.rescore(t, 0.0)
    assert np.all(l2.errors < t.errors) and 1.6 < l2.fitted_slope < 2.4


def test_unit_width_pulse_is_not_long_wave():
    # a unit-width pulse at eps = 0.25 steepens under the Dirac kernel long before t = 10,
    # so the difference is O(1) for every delta and the rate collapses
    narrow = S.gaussian_pulse(width=1.0)
    t = C.delta_sweep(K.exponential(), K.dirac(), narrow, CFG.with_(boundary_check=False))
    assert abs(t.fitted_slope) < 0.1
    assert np.all(t.errors > 1.0)
    with pytest.raises(MismatchedRuns):
        C.run_pair(K.exponential(), K.dirac(), narrow, CFG)


# --- scaling -----------------------------------------------------------------------

def test_scaling_equivalence_trivial():
    cfg = CFG.with_(epsilon=0.0, t_final=2.0)
    assert C.scaling_equivalence_check(S.DEFAULT_DATA, K.exponential(), cfg) == 0.0


def test_scaling_equivalence_rejects_eps_one():
    with pytest.raises(ValueError):
        C.scaling_equivalence_check(S.DEFAULT_DATA, K.exponential(), CFG.with_(epsilon=1.0))


def test_scaling_equivalence_round_off():
    # powers of two scale exactly, so 0.25 gives 0; other amplitudes sit at round-off
    cfg = CFG.with_(t_final=5.0)
    assert C.scaling_equivalence_check(S.DEFAULT_DATA, K.exponential(), cfg) == 0.0
    assert 0 < C.scaling_equivalence_check(S.DEFAULT_DATA, K.exponential(), cfg.with_(epsilon=0.3)) <= 1e-13
