"""Kernels represented by their Fourier symbols.

A kernel ``beta`` enters the dynamics only through its symbol
``beta_hat(xi)`` evaluated at ``delta * xi``, so that is what a
:class:`KernelSpec` stores.  Even moments come from the Taylor expansion
of the symbol at the origin,

.. math::

   m_{2j} = \\int x^{2j} \\beta(x)\\,dx = (-1)^j \\hat\\beta^{(2j)}(0)
          = (-1)^j (2j)!\\, a_j ,\\qquad
   \\hat\\beta(\\xi) = \\sum_j a_j \\xi^{2j},

and two kernels whose even moments agree through order ``2k - 2`` have
symbols differing by ``O(xi^{2k})``.  Catalog kernels register their
Taylor coefficients in closed form; anything else falls back to
Richardson-extrapolated central differences.
"""
from dataclasses import dataclass, field
import math
from typing import Callable, Optional

import numpy as np

from .errors import (InsufficientSmoothness, KernelError, NegativeSymbol,
                     NoMatch, NonElliptic, UnknownKernel)
from .expr import parse_symbol

#: Smoothness order assigned to symbols analytic at the origin.
ANALYTIC = 64
#: Absolute tolerance separating equal from distinct moments.
DEFAULT_MOMENT_TOL = 1e-9
#: Default number of even moments probed by :func:`matching_order` (m_0 .. m_8).
DEFAULT_PROBE_ORDER = 8
#: Wavenumber range on which constructed kernels are checked for ellipticity.
WORKING_XI_MAX = 20.0
WORKING_SAMPLES = 2001

FD_STEP = 1e-2
FD_LEVELS = 4

_VALIDATION_XI = np.linspace(0.0, WORKING_XI_MAX, 201)


@dataclass(frozen=True)
class KernelSpec:
    """An even, normalized kernel given by its Fourier symbol.

    Parameters
    ----------
    name : str
    symbol : callable
        Vectorized real function of the wavenumber.  Only ``xi >= 0`` is
        ever sampled; evenness is imposed by evaluating at ``|xi|``.
    smoothness_order : int
        Number of derivatives of the symbol available at the origin.
    declared_bounds : (float, float), optional
        ``(c1_sq, c2_sq)`` with ``c1_sq <= symbol <= c2_sq`` everywhere.
    series : callable, optional
        ``series(J)`` returns the closed-form Taylor coefficients
        ``a_0 .. a_J`` of the symbol in powers of ``xi**2``.
    expression : str, optional
        Source text for kernels built from a symbol expression.
    density : callable, optional
        The kernel in physical space, kept only for quadrature checks.
    """
    name: str
    symbol: Callable = field(repr=False)
    smoothness_order: int = ANALYTIC
    declared_bounds: Optional[tuple] = None
    series: Optional[Callable] = field(default=None, repr=False)
    expression: Optional[str] = None
    density: Optional[Callable] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.smoothness_order < 0:
            raise KernelError(f"kernel {self.name!r}: negative smoothness order")
        with np.errstate(all="ignore"):
            values = np.asarray(self.symbol(_VALIDATION_XI), dtype=float)
            mirrored = np.asarray(self.symbol(-_VALIDATION_XI), dtype=float)
        if values.shape != _VALIDATION_XI.shape:
            raise KernelError(f"kernel {self.name!r}: symbol is not vectorized",
                              kernel=self.name)
        if abs(values[0] - 1.0) > 1e-12:
            raise KernelError(f"kernel {self.name!r} is not normalized: symbol(0) = {values[0]!r}",
                              kernel=self.name)
        gap = np.abs(values - mirrored)
        if not np.all(gap <= 1e-14 * np.maximum(1.0, np.abs(values))):
            raise KernelError(f"kernel {self.name!r}: symbol is not even", kernel=self.name)
        if self.declared_bounds is not None:
            c1_sq, c2_sq = self.declared_bounds
            if not (0 < c1_sq <= c2_sq):
                raise KernelError(f"kernel {self.name!r}: bad declared bounds {self.declared_bounds}")
            if np.any(values < c1_sq - 1e-14) or np.any(values > c2_sq + 1e-14):
                raise KernelError(f"kernel {self.name!r} violates its declared bounds",
                                  kernel=self.name)

    def __call__(self, xi):
        return eval_symbol(self, xi)

    def describe(self):
        """One-line description used in manifests."""
        return self.expression if self.expression is not None else self.name


@dataclass(frozen=True)
class MomentVector:
    """Even moments ``m_0, m_2, ..., m_{2J}``; odd moments vanish by evenness."""
    even_moments: tuple

    def __getitem__(self, order):
        if order % 2:
            return 0.0
        return self.even_moments[order // 2]

    def __len__(self):
        return len(self.even_moments)

    @property
    def max_order(self):
        return 2 * (len(self.even_moments) - 1)


@dataclass(frozen=True)
class MatchingOrder:
    """Largest ``k`` with equal even moments through order ``2k - 2``.

    ``k is None`` means every probed moment agreed.
    """
    k: Optional[int]

    @property
    def identical(self):
        return self.k is None

    @property
    def predicted_rate(self):
        return None if self.k is None else 2 * self.k

    def at_least(self, k):
        return self.identical or self.k >= k

    def __str__(self):
        return "identical-to-tolerance" if self.identical else str(self.k)


# --- evaluation --------------------------------------------------------------

def eval_symbol(kernel, xi):
    """Evaluate the symbol; returns a float for scalar input."""
    arr = np.abs(np.asarray(xi, dtype=float))
    value = np.asarray(kernel.symbol(arr), dtype=float)
    return float(value) if value.ndim == 0 else value


def sqrt_symbol(kernel, xi):
    """The multiplier ``k(xi) = sqrt(beta_hat(xi))`` of the operator K."""
    value = np.asarray(eval_symbol(kernel, xi))
    if np.any(value < 0):
        raise NegativeSymbol(f"symbol of {kernel.name!r} is negative", kernel=kernel.name,
                             min_value=float(np.min(value)))
    root = np.sqrt(value)
    return float(root) if root.ndim == 0 else root


# --- Taylor coefficients and moments -----------------------------------------

def taylor_coefficients(kernel, n_terms, step=FD_STEP):
    """Coefficients ``a_0 .. a_{n_terms-1}`` of the symbol in powers of ``xi**2``."""
    if kernel.series is not None:
        return np.asarray(kernel.series(n_terms - 1), dtype=float)[:n_terms]
    return _fd_taylor(lambda x: eval_symbol(kernel, x), n_terms, step)


def _fd_taylor(func, n_terms, step):
    coeffs = np.empty(n_terms)
    coeffs[0] = func(0.0)
    for j in range(1, n_terms):
        coeffs[j] = _fd_even_derivative(func, 2 * j, step) / math.factorial(2 * j)
    return coeffs


def _fd_even_derivative(func, order, step):
    # Central differences at steps h, 2h, 4h, ... combined by Richardson
    # extrapolation in h^2; stepping up rather than down keeps round-off at
    # the base-step level.
    offsets = order / 2 - np.arange(order + 1)
    weights = np.array([(-1) ** i * math.comb(order, i) for i in range(order + 1)], dtype=float)
    table = []
    for level in range(FD_LEVELS):
        h = step * 2 ** level
        table.append(np.dot(weights, func(offsets * h)) / h ** order)
    for col in range(1, FD_LEVELS):
        factor = 4.0 ** col
        table = [(factor * table[i] - table[i + 1]) / (factor - 1) for i in range(len(table) - 1)]
    return float(table[0])


def compute_moments(kernel, max_even_order):
    """Even moments of ``kernel`` through ``max_even_order``."""
    if max_even_order < 0 or max_even_order % 2:
        raise ValueError(f"max_even_order must be a non-negative even integer, got {max_even_order}")
    if max_even_order > kernel.smoothness_order:
        raise InsufficientSmoothness(
            f"kernel {kernel.name!r} supports moments up to order {kernel.smoothness_order}, "
            f"requested {max_even_order}", kernel=kernel.name)
    n = max_even_order // 2 + 1
    a = taylor_coefficients(kernel, n)
    moments = [(-1) ** j * math.factorial(2 * j) * a[j] for j in range(n)]
    return MomentVector(tuple(float(m) for m in moments))


def matching_order(a, b, tol=DEFAULT_MOMENT_TOL, probe_order=DEFAULT_PROBE_ORDER):
    ma = compute_moments(a, probe_order)
    mb = compute_moments(b, probe_order)
    if abs(ma[0] - mb[0]) > tol:
        raise NoMatch(f"zeroth moments of {a.name!r} and {b.name!r} differ",
                      m0=(ma[0], mb[0]))
    for j in range(1, len(ma)):
        if abs(ma.even_moments[j] - mb.even_moments[j]) > tol:
            return MatchingOrder(j)
    return MatchingOrder(None)


# --- series arithmetic ---------------------------------------------------------

def _series_inverse(a, n_terms):
    a = np.asarray(a, dtype=float)
    out = np.zeros(n_terms)
    out[0] = 1.0 / a[0]
    for n in range(1, n_terms):
        upto = min(n, len(a) - 1)
        out[n] = -np.dot(a[1:upto + 1], out[n - 1::-1][:upto]) / a[0]
    return out


def _series_scaled(series, scale):
    """Series of ``f(scale * xi)`` from the series of ``f``."""
    def scaled(J):
        return np.asarray(series(J), dtype=float) * scale ** (2.0 * np.arange(J + 1))
    return scaled


# --- catalog -----------------------------------------------------------------

def dirac():
    """The Dirac measure: symbol 1 (classical elasticity)."""
    def series(J):
        out = np.zeros(J + 1)
        out[0] = 1.0
        return out
    return KernelSpec("dirac", lambda xi: np.ones_like(np.asarray(xi, dtype=float)),
                      declared_bounds=(1.0, 1.0), series=series)


def exponential():
    """``beta(x) = exp(-|x|)/2`` with symbol ``1/(1 + xi^2)`` (improved Boussinesq)."""
    return KernelSpec("exponential", lambda xi: 1.0 / (1.0 + xi ** 2),
                      series=lambda J: (-1.0) ** np.arange(J + 1),
                      density=lambda x: 0.5 * np.exp(-np.abs(x)))


def gaussian():
    """Unit-variance Gaussian, symbol ``exp(-xi^2/2)``."""
    def series(J):
        return np.array([(-0.5) ** j / math.factorial(j) for j in range(J + 1)])
    return KernelSpec("gaussian", lambda xi: np.exp(-0.5 * xi ** 2), series=series,
                      density=lambda x: np.exp(-0.5 * x ** 2) / math.sqrt(2 * math.pi))


def rational(gammas, name=None):
    """Symbol ``1 / (1 + gamma_1 xi^2 + ... + gamma_m xi^{2m})``."""
    gammas = tuple(float(g) for g in gammas)
    poly = (1.0,) + gammas

    def symbol(xi):
        s = xi ** 2
        acc = np.zeros_like(s) + poly[-1]
        for c in poly[-2::-1]:
            acc = c + acc * s
        return 1.0 / acc

    if name is None:
        name = "rational(" + ", ".join(f"{g:.17g}" for g in gammas) + ")"
    density = None
    if len(gammas) == 1 and gammas[0] > 0:
        width = math.sqrt(gammas[0])
        density = lambda x: np.exp(-np.abs(x) / width) / (2 * width)
    return KernelSpec(name, symbol, series=lambda J: _series_inverse(poly, J + 1),
                      density=density)


def from_expression(text, name=None, smoothness_order=8):
    """Kernel from a symbol expression such as ``"1/(1+xi^2/2)"``.

    Moments come from finite differences: absolute error about 1e-12 on
    ``m_2`` and 1e-7 on ``m_4``, unusable beyond ``m_6``.  Compare such
    kernels with ``matching_order(..., tol=1e-6, probe_order=4)``.
    """
    return KernelSpec(name or text, parse_symbol(text), smoothness_order=smoothness_order,
                      expression=text)


CATALOG = {
    "dirac": dirac,
    "exponential": exponential,
    "gaussian": gaussian,
}


def get_kernel(name):
    try:
        return CATALOG[name]()
    except KeyError:
        raise UnknownKernel(f"unknown kernel {name!r}; known: {sorted(CATALOG)}",
                            kernel=name) from None


# --- constructions -------------------------------------------------------------

def verify_ellipticity(kernel, xi_max, n_samples):
    """Return ``(min, max)`` of the symbol on ``n_samples`` points of ``[0, xi_max]``."""
    if xi_max <= 0 or n_samples < 2:
        raise ValueError("need xi_max > 0 and n_samples >= 2")
    values = eval_symbol(kernel, np.linspace(0.0, xi_max, int(n_samples)))
    lo, hi = float(np.min(values)), float(np.max(values))
    if not np.all(np.isfinite(values)) or lo <= 0:
        raise NonElliptic(f"symbol of {kernel.name!r} is not positive on [0, {xi_max}] "
                          f"(min {lo:.6g})", kernel=kernel.name, xi_max=xi_max, min_value=lo)
    return lo, hi


def boussinesq_approximant(kernel, k, xi_max=WORKING_XI_MAX, n_samples=WORKING_SAMPLES):
    """Rational kernel whose inverse symbol is the Taylor polynomial of ``1/beta_hat``.

    The polynomial ``1 + gamma_1 xi^2 + ... + gamma_{k-1} xi^{2(k-1)}`` is
    truncated after ``k`` terms, so the result matches ``kernel`` through
    moments of order ``2k - 2``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if 2 * (k - 1) > kernel.smoothness_order:
        raise InsufficientSmoothness(
            f"kernel {kernel.name!r} has smoothness {kernel.smoothness_order}, "
            f"approximant of order {k} needs {2 * (k - 1)}", kernel=kernel.name)
    inverse = _series_inverse(taylor_coefficients(kernel, k), k)
    gammas = inverse[1:]
    xi = np.linspace(0.0, xi_max, int(n_samples))
    poly = np.polynomial.polynomial.polyval(xi ** 2, inverse)
    if np.any(poly <= 0):
        raise NonElliptic(f"order-{k} Boussinesq approximant of {kernel.name!r} has a "
                          f"non-positive denominator on [0, {xi_max}]",
                          kernel=kernel.name, k=k, gammas=list(gammas))
    return rational(gammas, name=f"bq{k}[{kernel.name}]")


def perturb(base, phi, mode, *, nu=None, a=None, k=None,
            xi_max=WORKING_XI_MAX, n_samples=WORKING_SAMPLES):
    """Perturb ``base`` by ``phi`` at the symbol level.

    ``mode`` is one of

    * ``"mix"``: ``(1 - nu) base + nu phi``
    * ``"mollify"``: ``phi(nu xi) base(xi)``, i.e. convolution with ``phi_nu``
    * ``"high_deriv"``: ``base + a (-1)^k xi^{2k} phi``, i.e. ``base + a D^{2k} phi``

    The result is checked for ellipticity on ``[0, xi_max]``.
    """
    sb, sp = base.series, phi.series
    if mode == "mix":
        _require(nu is not None and nu >= 0, "mix needs nu >= 0")
        name = f"mix[{base.name},{phi.name},nu={nu:g}]"
        symbol = lambda xi: (1.0 - nu) * base.symbol(xi) + nu * phi.symbol(xi)
        series = None if sb is None or sp is None else \
            (lambda J: (1.0 - nu) * np.asarray(sb(J)) + nu * np.asarray(sp(J)))
        smooth = min(base.smoothness_order, phi.smoothness_order)
    elif mode == "mollify":
        _require(nu is not None and nu > 0, "mollify needs nu > 0")
        name = f"mollify[{base.name},{phi.name},nu={nu:g}]"
        symbol = lambda xi: phi.symbol(nu * xi) * base.symbol(xi)
        series = None
        if sb is not None and sp is not None:
            scaled = _series_scaled(sp, nu)
            series = lambda J: np.convolve(scaled(J), sb(J))[:J + 1]
        smooth = min(base.smoothness_order, phi.smoothness_order)
    elif mode == "high_deriv":
        _require(a is not None and a != 0, "high_deriv needs a nonzero amplitude a")
        _require(k is not None and int(k) == k and k >= 1, "high_deriv needs an integer k >= 1")
        k = int(k)
        sign = (-1.0) ** k
        name = f"high_deriv[{base.name},{phi.name},a={a:g},k={k}]"
        symbol = lambda xi: base.symbol(xi) + a * sign * xi ** (2 * k) * phi.symbol(xi)
        series = None
        if sb is not None and sp is not None:
            def series(J):
                out = np.array(sb(J), dtype=float)
                if J >= k:
                    out[k:] += a * sign * np.asarray(sp(J - k))
                return out
        smooth = min(base.smoothness_order, phi.smoothness_order)
    else:
        raise ValueError(f"unknown perturbation mode {mode!r}")
    result = KernelSpec(name, symbol, smoothness_order=smooth, series=series)
    verify_ellipticity(result, xi_max, n_samples)
    return result


def _require(condition, message):
    if not condition:
        raise ValueError(message)
