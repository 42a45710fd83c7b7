"""Periodic grids, fields and Fourier multipliers.

Transforms follow one fixed convention: the forward transform is the
unnormalized real FFT and the inverse carries the ``1/n``.  The
normalized Fourier-series coefficients of a field are therefore
``c_j = fft(u)_j / n`` and all norms below are written against them.
"""
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NonFiniteMultiplier


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on ``[-L, L)`` with ``n_points`` nodes (a power of two, >= 8)."""
    n_points: int
    half_length: float

    def __post_init__(self):
        n = self.n_points
        if n < 8 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 8, got {n}")
        if not self.half_length > 0:
            raise ValueError(f"half_length must be positive, got {self.half_length}")

    @property
    def spacing(self):
        return 2.0 * self.half_length / self.n_points

    @cached_property
    def x(self):
        x = -self.half_length + self.spacing * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def xi(self):
        """Non-negative wavenumbers ``pi j / L``, ``j = 0 .. n/2`` (real-FFT layout)."""
        xi = np.pi / self.half_length * np.arange(self.n_points // 2 + 1)
        xi.flags.writeable = False
        return xi

    @property
    def xi_max(self):
        """Magnitude of the Nyquist wavenumber."""
        return np.pi * self.n_points / (2.0 * self.half_length)

    @cached_property
    def mode_weights(self):
        # Each interior rfft mode stands for the pair +-xi; mean and Nyquist are single.
        w = np.full(self.n_points // 2 + 1, 2.0)
        w[0] = w[-1] = 1.0
        w.flags.writeable = False
        return w

    @cached_property
    def dealias_mask(self):
        mask = self.xi <= (2.0 / 3.0) * self.xi_max
        mask.flags.writeable = False
        return mask

    def field(self, values):
        return GridField(self, values)

    def sample(self, func):
        """Field holding ``func`` evaluated at the grid nodes."""
        return GridField(self, func(self.x))


class GridField:
    """Real values on a :class:`PeriodicGrid` with a lazily cached spectrum.

    Fields are treated as values: operations return new fields.  Assigning
    to :attr:`values` drops the cached spectrum.
    """

    def __init__(self, grid, values=None, *, spectrum=None):
        self.grid = grid
        if spectrum is not None:
            spectrum = np.array(spectrum, dtype=complex)
            spectrum[0] = spectrum[0].real
            spectrum[-1] = spectrum[-1].real
            self._values = np.fft.irfft(spectrum, grid.n_points)
            self._spectrum = spectrum
        else:
            self._values = None
            self._spectrum = None
            self.values = values

    @property
    def values(self):
        return self._values

    @values.setter
    def values(self, values):
        values = np.array(values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError(f"expected {self.grid.n_points} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self._values = values
        self._spectrum = None

    @property
    def spectrum(self):
        """Unnormalized real-FFT coefficients."""
        if self._spectrum is None:
            self._spectrum = np.fft.rfft(self._values)
        return self._spectrum

    @property
    def coefficients(self):
        """Normalized Fourier-series coefficients ``spectrum / n``."""
        return self.spectrum / self.grid.n_points

    def __add__(self, other):
        return GridField(self.grid, self._values + _vals(other))

    def __sub__(self, other):
        return GridField(self.grid, self._values - _vals(other))

    def __mul__(self, other):
        return GridField(self.grid, self._values * _vals(other))

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.grid, -self._values)

    def __repr__(self):
        return f"GridField(n={self.grid.n_points}, L={self.grid.half_length}, max={np.max(np.abs(self._values)):.3g})"

    def integral(self):
        """Trapezoid (= rectangle, on a periodic grid) integral over the period."""
        return self.grid.spacing * float(np.sum(self._values))

    def to_csv(self, path):
        write_columns(path, ("x", "value"), (self.grid.x, self._values))


def _vals(other):
    return other.values if isinstance(other, GridField) else other


def multiplier_values(grid, m):
    """Sample a multiplier on the grid's non-negative wavenumbers."""
    values = np.asarray(m(grid.xi))
    if values.shape != grid.xi.shape:
        values = np.broadcast_to(values, grid.xi.shape)
    if not np.all(np.isfinite(values)):
        bad = grid.xi[~np.isfinite(values)]
        raise NonFiniteMultiplier("multiplier is not finite on the grid",
                                  first_bad_xi=float(bad[0]))
    if np.iscomplexobj(values) and np.any(values.imag != 0):
        # an odd part has no partner for the unpaired Nyquist mode
        values = values.copy()
        values[-1] = 0.0
    return values


def apply_multiplier(field, m):
    """Field with spectrum ``m(xi_j) * u_hat_j``.

    ``m`` is sampled at ``xi >= 0``; it must be even and real (or odd and
    purely imaginary, in which case the Nyquist mode is dropped) so that the
    output stays real.
    """
    if callable(m):
        m = multiplier_values(field.grid, m)
    if np.all(m == 1.0):
        return GridField(field.grid, field.values)
    return GridField(field.grid, spectrum=field.spectrum * m)


def derivative(field):
    """Spectral ``d/dx``; the Nyquist mode is zeroed."""
    return GridField(field.grid, spectrum=field.spectrum * derivative_symbol(field.grid))


def derivative_symbol(grid):
    d = 1j * np.asarray(grid.xi)
    d[-1] = 0.0
    return d


def sobolev_weights(grid, s):
    return grid.mode_weights * (1.0 + grid.xi ** 2) ** s


def sobolev_inner(f, g, s):
    """``2L * sum_j (1 + xi_j^2)^s c_j(f) conj(c_j(g))`` over all modes (real part)."""
    w = sobolev_weights(f.grid, s)
    return 2.0 * f.grid.half_length * float(np.sum(w * (f.coefficients * np.conj(g.coefficients)).real))


def sobolev_norm(field, s):
    """Discrete ``H^s`` norm; at ``s = 0`` this is the L2 norm of the interpolant."""
    w = sobolev_weights(field.grid, s)
    return float(np.sqrt(2.0 * field.grid.half_length * np.sum(w * np.abs(field.coefficients) ** 2)))


def dealias(field):
    """Two-thirds rule: drop every mode with ``|xi| > 2/3 xi_max``."""
    return GridField(field.grid, spectrum=np.where(field.grid.dealias_mask, field.spectrum, 0.0))


def write_columns(path, header, columns):
    """CSV with a header row and 17 significant digits."""
    columns = [np.asarray(c, dtype=float) for c in columns]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")
