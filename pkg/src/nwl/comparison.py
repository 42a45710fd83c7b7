"""Kernel-pair comparisons, delta sweeps and log-log rate fits.

For kernels whose even moments agree through order ``2k - 2`` the
solutions started from the same data should stay within
``C delta^{2k} (1 + t)`` of each other, so the error functional used here
is ``max_t ||u1 - u2||_{H^s} / (1 + t)`` and its slope against ``delta``
on log-log axes estimates ``2k``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import math
from typing import Optional

import numpy as np

from .errors import DegenerateTable, IndefiniteEnergy, InsufficientPoints, MismatchedRuns, NumericalAbort
from .grid import sobolev_norm, write_columns
from .solver import auto_dt, comparison_energy, run

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-11
MIN_ROWS = 4
DEFAULT_DELTAS = (0.4, 0.3, 0.2, 0.15, 0.1)


@dataclass
class DiffSeries:
    times: np.ndarray
    diff_norm: np.ndarray
    energy: np.ndarray
    complete: bool = True
    abort_reason: Optional[str] = None
    runs: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.diff_norm = np.asarray(self.diff_norm, dtype=float)
        self.energy = np.asarray(self.energy, dtype=float) if self.energy is not None \
            else np.full_like(self.times, np.nan)

    @property
    def growth_ratio(self):
        return self.diff_norm / (1.0 + self.times)

    @property
    def error(self):
        """``max_t diff_norm / (1 + t)``."""
        return float(np.max(self.growth_ratio))

    def write_csv(self, path):
        write_columns(path, ("t", "diff_norm", "energy", "ratio"),
                      (self.times, self.diff_norm, self.energy, self.growth_ratio))


@dataclass
class RateTable:
    """``(delta, error)`` rows, largest delta first, with an optional fit."""
    deltas: np.ndarray
    errors: np.ndarray
    s_meas: float = 2.0
    fitted_slope: Optional[float] = None
    fit_residual: Optional[float] = None
    intercept: Optional[float] = None
    fit_error: Optional[str] = None
    series: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        order = np.argsort(-np.asarray(self.deltas, dtype=float), kind="stable")
        self.deltas = np.asarray(self.deltas, dtype=float)[order]
        self.errors = np.asarray(self.errors, dtype=float)[order]
        if np.any(np.diff(self.deltas) >= 0):
            raise ValueError("deltas must be distinct")

    @property
    def rows(self):
        return list(zip(self.deltas.tolist(), self.errors.tolist()))

    def write_csv(self, path, extra=None):
        """Rows as CSV; the fit goes in trailing ``# key = value`` comment lines."""
        write_columns(path, ("delta", "error"), (self.deltas, self.errors))
        footer = {"s_meas": self.s_meas, "fitted_slope": self.fitted_slope,
                  "fit_residual": self.fit_residual, "intercept": self.intercept}
        footer.update(extra or {})
        with open(path, "a", newline="\n") as fh:
            for key, value in footer.items():
                fh.write(f"# {key} = {_fmt(value)}\n")
            if self.fit_error:
                fh.write(f"# fit_error = {self.fit_error}\n")


def _fmt(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _series_from_runs(traj1, traj2, epsilon, p, s_meas):
    n = min(len(traj1), len(traj2))
    times, diff, energy = [], [], []
    for a, b in zip(traj1.states[:n], traj2.states[:n]):
        times.append(a.t)
        diff.append(sobolev_norm(a.u - b.u, s_meas))
        try:
            energy.append(comparison_energy(a.u, a.v, b.u, b.v, epsilon, p, s_meas))
        except IndefiniteEnergy:
            # E(t) is only a diagnostic; the difference series stays valid
            energy.append(math.nan)
    if np.isnan(energy).any():
        log.warning("comparison energy indefinite at %d of %d snapshots (epsilon=%g)",
                    int(np.isnan(energy).sum()), n, epsilon)
    return times, diff, energy


def run_pair(k1, k2, data, config, s_meas=2.0, dt=None, allow_partial=False):
    """Run both kernels from the same data with one shared step and difference them.

    If either run aborts, the series over the common snapshots is attached
    to the raised MismatchedRuns as ``partial`` (or returned with
    ``complete=False`` when ``allow_partial`` is set).
    """
    if dt is None:
        dt = config.dt if config.dt is not None else \
            auto_dt([k1, k2], config.grid, [config.delta], config.dt_safety)
    trajectories, reason = [], None
    for kernel in (k1, k2):
        try:
            trajectories.append(run(data, kernel, config, dt=dt))
        except NumericalAbort as exc:
            reason = f"{kernel.name}: {exc.message}"
            trajectories.append(exc.partial)
            if exc.partial is None:
                raise
    series = DiffSeries(*_series_from_runs(*trajectories, config.epsilon, config.p, s_meas),
                        complete=reason is None, abort_reason=reason, runs=tuple(trajectories))
    if reason is not None and not allow_partial:
        raise MismatchedRuns(f"pair run aborted: {reason}", partial=series, delta=config.delta)
    return series


def sweep_dt(k1, k2, base_config, deltas):
    """Step used by every run of a sweep: the strictest over kernels and deltas."""
    if base_config.dt is not None:
        return base_config.dt
    return auto_dt([k1, k2], base_config.grid, deltas, base_config.dt_safety)


def delta_sweep(k1, k2, data, base_config, deltas=DEFAULT_DELTAS, s_meas=2.0, jobs=1):
    """Error ``max_t diff/(1+t)`` for each delta, all runs sharing grid, data and dt.

    The returned table carries a fit when one is possible; otherwise
    ``fitted_slope`` is None and ``fit_error`` says why.
    """
    deltas = [float(d) for d in deltas]
    if len(deltas) < MIN_ROWS:
        raise InsufficientPoints(f"a rate fit needs at least {MIN_ROWS} deltas, got {len(deltas)}",
                                 deltas=deltas)
    if len(set(deltas)) != len(deltas):
        raise ValueError("deltas must be distinct")
    dt = sweep_dt(k1, k2, base_config, deltas)

    def one(delta):
        return run_pair(k1, k2, data, base_config.with_(delta=delta), s_meas=s_meas, dt=dt)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, deltas))
    else:
        results = [one(d) for d in deltas]
    table = RateTable(deltas, [s.error for s in results], s_meas=s_meas,
                      series=dict(zip(deltas, results)))
    return _attach_fit(table)


def rescore(table, s_meas):
    """The same sweep measured in another Sobolev index, reusing the stored runs."""
    errors = []
    for delta in table.deltas:
        first, second = table.series[float(delta)].runs
        errors.append(max(sobolev_norm(a.u - b.u, s_meas) / (1.0 + a.t)
                          for a, b in zip(first, second)))
    return _attach_fit(RateTable(table.deltas, errors, s_meas=s_meas, series=table.series))


def _attach_fit(table):
    try:
        table.fitted_slope, table.fit_residual, table.intercept = _fit(table)
    except DegenerateTable as exc:
        table.fit_error = exc.message
    return table


def _fit(table):
    if len(table.errors) < MIN_ROWS:
        raise InsufficientPoints(f"need at least {MIN_ROWS} rows, got {len(table.errors)}")
    if np.any(~np.isfinite(table.errors)) or np.any(table.errors <= NOISE_FLOOR):
        raise DegenerateTable(f"errors at or below the noise floor {NOISE_FLOOR:g}",
                              errors=table.errors.tolist())
    x, y = np.log(table.deltas), np.log(table.errors)
    slope, intercept = np.polyfit(x, y, 1)
    residual = math.sqrt(float(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), residual, float(intercept)


def fit_rate(table):
    """Least-squares slope of ``ln(error)`` against ``ln(delta)`` and the RMS residual."""
    slope, residual, _ = _fit(table)
    return slope, residual


@dataclass(frozen=True)
class GrowthCheck:
    passed: bool
    max_ratio: float
    ratio_at_one: float
    max_factor: float  # largest later ratio over the t = 1 ratio


def growth_check(series, threshold=3.0, floor=1e-12):
    """Is ``diff/(1+t)`` after ``t = 1`` within ``threshold`` times its value at ``t = 1``?"""
    ratio = series.growth_ratio
    max_ratio = float(np.max(ratio))
    at_one = float(np.interp(1.0, series.times, ratio))
    later = ratio[series.times > 1.0]
    if max_ratio <= floor:
        return GrowthCheck(True, max_ratio, at_one, 0.0)
    factor = float(np.max(later, initial=0.0)) / max(at_one, floor)
    return GrowthCheck(bool(factor <= threshold), max_ratio, at_one, factor)


def scaling_equivalence_check(data, kernel, config):
    """``max_t ||u~ - eps u||_{L2}`` where ``u~`` solves the ``eps = 1`` problem from ``eps * data``."""
    eps = config.epsilon
    if not eps < 1:
        raise ValueError(f"scaling check needs epsilon < 1, got {eps}")
    dt = config.dt if config.dt is not None else \
        auto_dt([kernel], config.grid, [config.delta], config.dt_safety)
    original = run(data, kernel, config, dt=dt)
    scaled = run(data.scaled(eps), kernel, config.with_(epsilon=1.0), dt=dt)
    return max(sobolev_norm(b.u - eps * a.u, 0.0) for a, b in zip(original, scaled))
