"""Periodic chart grids and the differentiation operators living on them.

Every field is a numpy array whose trailing ``m`` axes are the grid axes
(row-major node order); tensor components are the leading axes.  A scalar
field has shape ``dims``, a 1-form ``(m,) + dims`` and a symmetric
2-tensor ``(m, m) + dims``, so ``g[i, j]`` is the whole ``g_ij`` field.

Differentiation is applied in Fourier space.  Three symbols are available:

``spectral``
    exact derivative of the trigonometric interpolant (Nyquist mode
    dropped, so the first-derivative matrix is real and antisymmetric);
``fd4``
    centered 4th-order periodic differences;
``fd2``
    centered 2nd-order periodic differences.

All three give circulant, antisymmetric first-derivative matrices, so the
codifferentials built from them are exact discrete adjoints of ``d``.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

SCHEMES = ("spectral", "fd4", "fd2")
# exponential mode filter exp(-a (k / k_nyq)^p); e^{-36} is below roundoff
FILTER_STRENGTH = 36.0
FILTER_ORDER = 36


def _derivative_symbol(scheme, k, h, nyquist):
    """Imaginary part of the first-derivative multiplier at wavenumbers ``k``."""
    if scheme == "spectral":
        s = k.copy()
        s[nyquist] = 0.0
        return s
    if scheme == "fd2":
        return np.sin(k * h) / h
    return (8.0 * np.sin(k * h) - np.sin(2.0 * k * h)) / (6.0 * h)


@dataclass(frozen=True)
class ChartGrid:
    """Uniform periodic grid on the box ``prod [0, L_a)``.

    Parameters
    ----------
    dims : tuple of int
        Node count per axis; each must be at least 8.
    periods : tuple of float
        Chart length per axis.
    scheme : str
        Differentiation scheme, one of ``SCHEMES``.
    """

    dims: tuple
    periods: tuple
    scheme: str = "spectral"

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        periods = tuple(float(p) for p in self.periods)
        if len(dims) not in (2, 3):
            raise ValueError(f"transverse dimension must be 2 or 3, got {len(dims)}")
        if len(periods) != len(dims):
            raise ValueError("dims and periods must have the same length")
        if any(n < 8 for n in dims):
            raise ValueError(f"every axis needs at least 8 nodes, got {dims}")
        if not all(np.isfinite(p) and p > 0 for p in periods):
            raise ValueError(f"periods must be positive, got {periods}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def square(cls, n, m=2, period=1.0, scheme="spectral"):
        return cls((n,) * m, (period,) * m, scheme)

    @property
    def m(self):
        return len(self.dims)

    @property
    def spacing(self):
        return tuple(p / n for p, n in zip(self.periods, self.dims))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    @property
    def n_nodes(self):
        return int(np.prod(self.dims))

    def refined(self, factor=2):
        return ChartGrid(tuple(n * factor for n in self.dims), self.periods, self.scheme)

    def with_scheme(self, scheme):
        return ChartGrid(self.dims, self.periods, scheme)

    def coords(self):
        """Nodal coordinates ``y^a = i_a * h_a`` as ``m`` arrays of shape ``dims``."""
        axes = [np.arange(n) * h for n, h in zip(self.dims, self.spacing)]
        return np.meshgrid(*axes, indexing="ij")

    def zeros(self, *components):
        return np.zeros(tuple(components) + self.dims)

    # -- Fourier symbols ---------------------------------------------------

    @cached_property
    def _symbols(self):
        out = []
        for a, (n, period) in enumerate(zip(self.dims, self.periods)):
            k = 2.0 * np.pi * np.fft.rfftfreq(n, d=period / n)
            nyq = np.isclose(np.fft.rfftfreq(n) * n, n / 2)
            out.append(1j * _derivative_symbol(self.scheme, k, self.spacing[a], nyq))
        return tuple(out)

    def symbol(self, axis):
        """First-derivative multiplier for the rfft along ``axis``."""
        return self._symbols[axis]

    def symbol_sq_max(self, axis):
        """Largest ``|symbol|^2`` on an axis; bounds the discrete Laplacian."""
        return float(np.max(np.abs(self._symbols[axis]) ** 2))

    @property
    def rfft_shape(self):
        return self.dims[:-1] + (self.dims[-1] // 2 + 1,)

    @cached_property
    def _symbol_sq_axes(self):
        """Per-axis ``|symbol_a|^2`` broadcastable onto the ``rfftn`` grid."""
        out = []
        for a, (n, period) in enumerate(zip(self.dims, self.periods)):
            if a == self.m - 1:
                s = np.abs(self._symbols[a]) ** 2
            else:
                freq = np.fft.fftfreq(n)
                k = 2.0 * np.pi * freq * n / period
                s = _derivative_symbol(self.scheme, k, self.spacing[a], np.isclose(np.abs(freq), 0.5)) ** 2
            shape = [1] * self.m
            shape[a] = -1
            out.append(s.reshape(shape))
        return tuple(out)

    def laplacian_symbol(self, weights=None):
        """``sum_a weights[a] |symbol_a|^2`` on the ``rfftn`` grid (flat
        Laplacian symbol when ``weights`` is None)."""
        if weights is None:
            weights = np.ones(self.m)
        out = np.zeros(self.rfft_shape)
        for wa, s in zip(weights, self._symbol_sq_axes):
            out = out + wa * s
        return out

    @cached_property
    def _mode_filter(self):
        """``prod_a exp(-36 (|k_a| / k_nyq)^36)`` on the ``rfftn`` grid."""
        out = np.ones(self.rfft_shape)
        for a, n in enumerate(self.dims):
            freq = np.fft.rfftfreq(n) if a == self.m - 1 else np.fft.fftfreq(n)
            shape = [1] * self.m
            shape[a] = -1
            out = out * np.exp(-FILTER_STRENGTH * np.abs(2.0 * freq) ** FILTER_ORDER).reshape(shape)
        return out

    def filter_high_modes(self, x):
        """Damp the top of the spectrum of a field.  Modes below half the
        Nyquist frequency change by less than 1e-9 relative.

        Pseudo-spectral products alias energy into those modes; along flows
        that are only weakly parabolic nothing removes it again.  The
        finite-difference schemes return ``x`` unchanged.
        """
        if self.scheme != "spectral":
            return x
        return self.fourier_multiply(x, self._mode_filter)

    def fourier_multiply(self, x, multiplier):
        """Apply a multiplier given on the ``rfftn`` grid of the grid axes."""
        axes = tuple(range(x.ndim - self.m, x.ndim))
        return np.fft.irfftn(np.fft.rfftn(x, axes=axes) * multiplier, s=self.dims, axes=axes)

    # -- differentiation ---------------------------------------------------

    def diff(self, x, axis):
        """Partial derivative ``d/dy^axis`` of any field (trailing grid axes)."""
        ax = x.ndim - self.m + axis
        xf = np.fft.rfft(x, axis=ax)
        shape = [1] * xf.ndim
        shape[ax] = xf.shape[ax]
        xf *= self._symbols[axis].reshape(shape)
        return np.fft.irfft(xf, n=self.dims[axis], axis=ax)

    def grad(self, x):
        """All partial derivatives, derivative index first:
        ``grad(g)[a, i, j] = d_a g_ij``."""
        return np.stack([self.diff(x, a) for a in range(self.m)])

    def div(self, x):
        """Flat divergence ``sum_a d_a x[a]``."""
        return sum(self.diff(x[a], a) for a in range(self.m))
