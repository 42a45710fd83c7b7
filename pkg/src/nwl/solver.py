"""Pseudospectral RK4 integration of the first-order nonlocal wave system.

The second-order equation ``u_tt = beta_delta * (u + eps^p u^{p+1})_xx`` is
written as

    u_t = K_delta v_x,    v_t = K_delta (u + eps^p u^{p+1})_x,

where ``K_delta`` has symbol ``sqrt(beta_hat(delta xi))``.  Both right-hand
sides are x-derivatives, so the mean modes of ``u`` and ``v`` are exact
invariants, and

    H = 1/2 int (u^2 + v^2) dx + eps^p/(p+2) int u^{p+2} dx

is conserved because ``K_delta d/dx`` is skew-adjoint.
"""
from dataclasses import dataclass, field, replace
import logging
import math
import time
from typing import Callable, Optional

import numpy as np

from .errors import BoundaryLeak, IndefiniteEnergy, NonElliptic, SolutionOverflow
from .grid import GridField, PeriodicGrid, derivative_symbol, sobolev_inner, sobolev_norm, write_columns
from .kernels import eval_symbol

log = logging.getLogger(__name__)

#: Half-width of the imaginary-axis stability interval of classical RK4 (rounded down from 2*sqrt(2)).
RK4_STABILITY = 2.8
OVERFLOW_LIMIT = 1e12
#: Initial data must be below this beyond ``0.8 L``.
DECAY_TOL = 1e-10
#: A running solution above this beyond ``0.9 L`` is flagged as leaking.
LEAK_TOL = 1e-6
#: Relative size below which coefficients of psi are not amplified by K^{-1}.
INVERSE_NOISE_FLOOR = 1e-13


@dataclass(frozen=True)
class InitialData:
    """``u(x, 0) = phi(x)`` and ``u_t(x, 0) = psi'(x)``."""
    phi: Callable = field(repr=False)
    psi: Callable = field(repr=False)
    name: str = "custom"
    params: dict = field(default_factory=dict, compare=False)

    def scaled(self, factor):
        return InitialData(lambda x: factor * self.phi(x), lambda x: factor * self.psi(x),
                           name=f"{factor:g}*{self.name}", params=dict(self.params, scale=factor))


def gaussian_pulse(amplitude=1.0, width=8.0, center=0.0, direction="right"):
    """Gaussian strain pulse ``amplitude * exp(-((x - center)/width)^2)``.

    ``direction`` picks ``psi``: ``"right"`` (``psi = -phi``, a purely
    right-moving wave for the unit symbol), ``"left"`` (``psi = phi``) or
    ``"standing"`` (``psi = 0``).
    """
    def phi(x):
        return amplitude * np.exp(-((x - center) / width) ** 2)

    sign = {"right": -1.0, "left": 1.0, "standing": 0.0}
    if direction not in sign:
        raise ValueError(f"direction must be one of {sorted(sign)}, got {direction!r}")
    s = sign[direction]
    params = dict(amplitude=amplitude, width=width, center=center, direction=direction)
    return InitialData(phi, lambda x: s * phi(x), name="gaussian_pulse", params=params)


def windowed_cosine(wavenumber, amplitude=1.0, width=16.0):
    """``amplitude * cos(wavenumber x) * exp(-(x/width)^2)`` at rest (``psi = 0``)."""
    def phi(x):
        return amplitude * np.cos(wavenumber * x) * np.exp(-(x / width) ** 2)

    return InitialData(phi, lambda x: np.zeros_like(x), name="windowed_cosine",
                       params=dict(wavenumber=wavenumber, amplitude=amplitude, width=width))


DEFAULT_DATA = gaussian_pulse()


@dataclass(frozen=True)
class SimConfig:
    """Numerical and physical parameters of one run.

    ``dt=None`` selects ``dt_safety * 2.8 / (c2 * xi_max)``; the step is then
    shrunk slightly so that ``t_final`` is hit exactly.
    """
    grid: PeriodicGrid = field(default_factory=lambda: PeriodicGrid(1024, 64.0))
    epsilon: float = 0.25
    delta: float = 0.2
    p: int = 1
    dt: Optional[float] = None
    t_final: float = 10.0
    dealias: bool = True
    snapshot_stride: int = 10
    dt_safety: float = 0.5
    epsilon_cap: float = 1.0
    boundary_check: bool = True

    def __post_init__(self):
        if self.epsilon < 0 or self.epsilon > self.epsilon_cap:
            raise ValueError(f"epsilon must lie in [0, {self.epsilon_cap}], got {self.epsilon}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError(f"p must be a positive integer, got {self.p}")
        if self.dt is not None and not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.t_final > 0:
            raise ValueError(f"t_final must be positive, got {self.t_final}")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")

    def with_(self, **changes):
        return replace(self, **changes)


@dataclass
class SimState:
    u: GridField
    v: GridField
    t: float

    @property
    def grid(self):
        return self.u.grid

    def mean_modes(self):
        """``(u_hat(0), v_hat(0))``: the integrals of ``u`` and ``v`` over the period."""
        return self.u.integral(), self.v.integral()


@dataclass
class Trajectory:
    """Snapshots of a run together with its conservation record."""
    states: list
    hamiltonians: list
    mean_modes: list
    dt: float
    kernel_name: str
    wall_time: float = 0.0

    def __len__(self):
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i):
        return self.states[i]

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    @property
    def final(self):
        return self.states[-1]

    @property
    def hamiltonian_drift(self):
        """``max_t |H(t) - H(0)| / |H(0)|`` (absolute when ``H(0) = 0``)."""
        h = np.asarray(self.hamiltonians)
        scale = abs(h[0]) if h[0] != 0 else 1.0
        return float(np.max(np.abs(h - h[0])) / scale)

    @property
    def mean_drift(self):
        m = np.asarray(self.mean_modes)
        return float(np.max(np.abs(m - m[0])))

    def diagnostics(self):
        return {"steps": int(round(self.final.t / self.dt)), "dt": self.dt,
                "hamiltonian_initial": self.hamiltonians[0],
                "hamiltonian_drift": self.hamiltonian_drift,
                "mean_mode_drift": self.mean_drift}

    def write_csv(self, directory):
        """``snapshot_NNNN.csv`` (x, u, v) per snapshot plus ``diagnostics.csv``."""
        paths = []
        for i, state in enumerate(self.states):
            path = f"{directory}/snapshot_{i:04d}.csv"
            write_columns(path, ("x", "u", "v"), (state.grid.x, state.u.values, state.v.values))
            paths.append(path)
        m = np.asarray(self.mean_modes)
        write_columns(f"{directory}/diagnostics.csv", ("t", "hamiltonian", "mean_u", "mean_v"),
                      (self.times, self.hamiltonians, m[:, 0], m[:, 1]))
        return paths


# --- linear operators ----------------------------------------------------------

def k_delta(kernel, grid, delta):
    """``k(delta xi)`` on the grid's wavenumbers; NonElliptic if the symbol is not positive."""
    symbol = eval_symbol(kernel, delta * grid.xi)
    if not np.all(np.isfinite(symbol)) or np.any(symbol <= 0):
        raise NonElliptic(f"symbol of {kernel.name!r} is not positive on the grid at delta={delta}",
                          kernel=kernel.name, delta=delta, min_value=float(np.min(symbol)))
    return np.sqrt(symbol)


def stability_limit(kernel, grid, delta):
    """Largest RK4 step for the linear part: ``2.8 / (c2 xi_max)``, ``c2 = sqrt(max symbol)``."""
    c2 = float(np.max(k_delta(kernel, grid, delta)))
    return RK4_STABILITY / (c2 * grid.xi_max)


def auto_dt(kernels, grid, deltas, safety=0.5):
    """Default step shared by every (kernel, delta) combination."""
    return safety * min(stability_limit(k, grid, d) for k in kernels for d in deltas)


def resolve_dt(config, kernels):
    if config.dt is None:
        return auto_dt(kernels, config.grid, [config.delta], config.dt_safety)
    limit = min(stability_limit(k, config.grid, config.delta) for k in kernels)
    if config.dt > limit:
        log.warning("dt=%g exceeds the RK4 stability bound %g", config.dt, limit)
    return config.dt


def time_steps(t_final, dt):
    """Number of steps and the adjusted step landing exactly on ``t_final``."""
    n = max(1, math.ceil(t_final / dt - 1e-9))
    return n, t_final / n


class _System:
    """Precomputed multipliers for the right-hand side on raw arrays."""

    def __init__(self, kernel, config):
        grid = config.grid
        self.n = grid.n_points
        self.kd = k_delta(kernel, grid, config.delta) * derivative_symbol(grid)
        self.mask = grid.dealias_mask if config.dealias else None
        self.eps_p = config.epsilon ** config.p
        self.p = int(config.p)

    def __call__(self, u, v):
        n = self.n
        du = np.fft.irfft(self.kd * np.fft.rfft(v), n)
        flux = np.fft.rfft(u)
        if self.eps_p != 0.0:
            power = u * u
            for _ in range(self.p - 1):
                power = power * u
            nonlinear = np.fft.rfft(power)
            if self.mask is not None:
                nonlinear = np.where(self.mask, nonlinear, 0.0)
            flux = flux + self.eps_p * nonlinear
        dv = np.fft.irfft(self.kd * flux, n)
        _check_overflow(du, dv)
        return du, dv

    def step(self, u, v, dt):
        k1u, k1v = self(u, v)
        k2u, k2v = self(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v)
        k3u, k3v = self(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v)
        k4u, k4v = self(u + dt * k3u, v + dt * k3v)
        u = u + (dt / 6.0) * (k1u + 2.0 * k2u + 2.0 * k3u + k4u)
        v = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        return u, v


def _check_overflow(*arrays):
    for a in arrays:
        peak = np.max(np.abs(a))
        if not np.isfinite(peak) or peak > OVERFLOW_LIMIT:
            raise SolutionOverflow(f"right-hand side reached {peak:.3g}; solution is blowing up",
                                   peak=float(peak))


# --- operations ----------------------------------------------------------------

def init_state(data, kernel, config):
    """``u = phi`` and ``v = K_delta^{-1} psi`` on the grid, at ``t = 0``."""
    grid = config.grid
    phi = np.asarray(data.phi(grid.x), dtype=float)
    psi = np.asarray(data.psi(grid.x), dtype=float)
    if config.boundary_check:
        outer = np.abs(grid.x) >= 0.8 * grid.half_length
        worst = max(np.max(np.abs(phi[outer]), initial=0.0), np.max(np.abs(psi[outer]), initial=0.0))
        if worst >= DECAY_TOL:
            raise BoundaryLeak(f"initial data is {worst:.3g} beyond 0.8 L", peak=float(worst))
    k = k_delta(kernel, grid, config.delta)
    psi_field = GridField(grid, psi)
    if np.all(k == 1.0):
        v = psi_field
    else:
        spectrum = psi_field.spectrum
        # Coefficients at round-off level carry no information; dividing them by a
        # tiny k (Gaussian-type symbols reach 1e-22 on the grid) would only amplify noise.
        noise = np.abs(spectrum) <= INVERSE_NOISE_FLOOR * np.max(np.abs(spectrum), initial=0.0)
        v = GridField(grid, spectrum=np.where(noise & (k < 1.0), 0.0, spectrum / k))
    return SimState(GridField(grid, phi), v, 0.0)


def rhs(state, kernel, config):
    """``(K_delta v_x, K_delta (u + eps^p u^{p+1})_x)`` as fields."""
    du, dv = _System(kernel, config)(state.u.values, state.v.values)
    return GridField(state.grid, du), GridField(state.grid, dv)


def step_rk4(state, kernel, config, dt=None):
    """One classical Runge-Kutta step of size ``dt`` (default: the resolved config step)."""
    if dt is None:
        dt = resolve_dt(config, [kernel])
    u, v = _System(kernel, config).step(state.u.values, state.v.values, dt)
    return SimState(GridField(state.grid, u), GridField(state.grid, v), state.t + dt)


def hamiltonian(state, config):
    u, v = state.u.values, state.v.values
    eps_p = config.epsilon ** config.p
    density = 0.5 * (u * u + v * v)
    if eps_p != 0.0:
        density = density + eps_p / (config.p + 2) * u ** (config.p + 2)
    return state.grid.spacing * float(np.sum(density))


def run(data, kernel, config, dt=None):
    """Integrate to ``config.t_final``; snapshots every ``snapshot_stride`` steps and at the end.

    Raises SolutionOverflow on blow-up and BoundaryLeak when the solution
    reaches the edge of the periodic box; either exception carries the
    partial :class:`Trajectory` as ``partial``.
    """
    started = time.perf_counter()
    grid = config.grid
    if dt is None:
        dt = resolve_dt(config, [kernel])
    n_steps, dt = time_steps(config.t_final, dt)
    system = _System(kernel, config)
    state = init_state(data, kernel, config)
    traj = Trajectory([], [], [], dt, kernel.name)
    edge = np.abs(grid.x) >= 0.9 * grid.half_length

    def record(state):
        traj.states.append(state)
        traj.hamiltonians.append(hamiltonian(state, config))
        traj.mean_modes.append(state.mean_modes())

    record(state)
    u, v = state.u.values, state.v.values
    for i in range(1, n_steps + 1):
        try:
            u, v = system.step(u, v, dt)
        except SolutionOverflow as exc:
            exc.partial = traj
            exc.context.update(t=(i - 1) * dt, kernel=kernel.name)
            raise
        if i % config.snapshot_stride == 0 or i == n_steps:
            record(SimState(GridField(grid, u), GridField(grid, v), i * dt))
            if config.boundary_check:
                leak = max(np.max(np.abs(u[edge])), np.max(np.abs(v[edge])))
                if leak > LEAK_TOL:
                    traj.wall_time = time.perf_counter() - started
                    raise BoundaryLeak(f"solution reached the boundary ({leak:.3g}) at t={i * dt:g}",
                                       partial=traj, t=i * dt, kernel=kernel.name)
    traj.wall_time = time.perf_counter() - started
    return traj


def comparison_energy(u1, v1, u2, v2, epsilon, p, s_meas):
    """``E(t)`` for the differences ``r = u1 - u2``, ``rho = v1 - v2``.

    E^2 = 1/2 (|r|^2 + |rho|^2 + eps^p <r, w r>) in ``H^{s_meas}``, with
    ``w = u1^p + u1^{p-1} u2 + ... + u2^p``.
    """
    r = u1 - u2
    rho = v1 - v2
    e_sq = sobolev_norm(r, s_meas) ** 2 + sobolev_norm(rho, s_meas) ** 2
    eps_p = epsilon ** p
    if eps_p != 0.0:
        a, b = u1.values, u2.values
        w = sum(a ** (p - i) * b ** i for i in range(p + 1))
        e_sq += eps_p * sobolev_inner(r, r * w, s_meas)
    e_sq *= 0.5
    if e_sq < 0:
        raise IndefiniteEnergy(f"comparison energy squared is negative ({e_sq:.3g}); "
                               f"epsilon={epsilon} is too large for this diagnostic",
                               energy_sq=e_sq, epsilon=epsilon)
    return math.sqrt(e_sq)
