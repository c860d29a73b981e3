"""Transversal eigenmodes of the two reference strips and their overlaps.

The lower/upper wall conditions are swapped between the two half-guides:

* ``SINE`` modes (Dirichlet at y=0, Neumann at y=d) live on x < 0,
* ``COSINE`` modes (Neumann at y=0, Dirichlet at y=d) live on x > 0.

Both families share the eigenvalues ``mu_n = (2n-1)^2 pi^2 / (4 d^2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate


@dataclass(frozen=True)
class Geometry:
    """Strip of width ``d``."""

    d: float = 1.0

    def __post_init__(self):
        if not (self.d > 0 and math.isfinite(self.d)):
            raise ValueError(f"waveguide width d must be positive and finite, got {self.d!r}")

    @property
    def k_unit(self) -> float:
        """Natural momentum unit pi/(2d)."""
        return math.pi / (2.0 * self.d)

    @property
    def t_unit(self) -> float:
        """Natural time unit (pi/(2d))^-2."""
        return 1.0 / self.k_unit**2


class ModeBasis(enum.Enum):
    SINE = "sine"
    COSINE = "cosine"


def _check_index(n, name="n"):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise ValueError(f"mode index {name} must be a positive integer, got {n!r}")
    return int(n)


def mu(n: int, geom: Geometry) -> float:
    """Transversal eigenvalue ``(2n-1)^2 pi^2 / (4 d^2)``."""
    n = _check_index(n)
    return (2 * n - 1) ** 2 * math.pi**2 / (4.0 * geom.d**2)


def mu_array(nmax: int, geom: Geometry) -> np.ndarray:
    """Eigenvalues ``mu_1 .. mu_nmax`` as an array."""
    n = np.arange(1, nmax + 1, dtype=float)
    return (2 * n - 1) ** 2 * np.pi**2 / (4.0 * geom.d**2)


def chi(basis: ModeBasis, n: int, y, geom: Geometry):
    """Normalised transversal mode evaluated at ``y`` (scalar or array)."""
    n = _check_index(n)
    y_arr = np.asarray(y, dtype=float)
    # tolerate round-off at the walls, nothing more
    slack = 1e-12 * geom.d
    if np.any(y_arr < -slack) or np.any(y_arr > geom.d + slack):
        raise ValueError(f"y must lie in [0, d] = [0, {geom.d}]")
    arg = (2 * n - 1) * np.pi * y_arr / (2.0 * geom.d)
    amp = math.sqrt(2.0 / geom.d)
    if basis is ModeBasis.SINE:
        out = amp * np.sin(arg)
        out = np.where(y_arr == 0.0, 0.0, out)
    else:
        out = amp * np.cos(arg)
        out = np.where(y_arr == geom.d, 0.0, out)
    return float(out) if out.ndim == 0 else out


def chi_matrix(basis: ModeBasis, nmax: int, y, geom: Geometry) -> np.ndarray:
    """Modes ``1..nmax`` sampled on ``y``; shape ``(nmax, len(y))``."""
    y = np.asarray(y, dtype=float)
    n = np.arange(1, nmax + 1)[:, None]
    arg = (2 * n - 1) * np.pi * y[None, :] / (2.0 * geom.d)
    trig = np.sin if basis is ModeBasis.SINE else np.cos
    return math.sqrt(2.0 / geom.d) * trig(arg)


def overlap(n: int, m: int) -> float:
    """Exact ``(chi^-_n, chi^+_m)`` in L2(0, d); independent of ``d``.

    Product-to-sum reduces the integral to two sine integrals, only one of
    which survives depending on the parity of ``n + m``::

        n + m even:  2 / (pi (n + m - 1))
        n + m odd:   2 / (pi (n - m))
    """
    n = _check_index(n)
    m = _check_index(m, "m")
    if (n + m) % 2 == 0:
        return 2.0 / (math.pi * (n + m - 1))
    return 2.0 / (math.pi * (n - m))


@dataclass(frozen=True)
class OverlapMatrix:
    """Gram matrix ``O[n-1, m-1] = (chi^-_n, chi^+_m)``.

    Rows index sine modes, columns cosine modes.  The array is read-only.
    """

    entries: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    @property
    def shape(self):
        return self.entries.shape

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)


def overlap_block(nrows: int, ncols: int) -> np.ndarray:
    """Rectangular block of the overlap matrix, vectorised closed form."""
    n = np.arange(1, nrows + 1)[:, None]
    m = np.arange(1, ncols + 1)[None, :]
    even = (n + m) % 2 == 0
    denom = np.where(even, n + m - 1, n - m).astype(float)
    return 2.0 / (np.pi * denom)


def overlap_matrix(N: int, ncols: int | None = None) -> OverlapMatrix:
    """Leading ``N x N`` (or ``N x ncols``) block as an :class:`OverlapMatrix`."""
    N = _check_index(N, "N")
    block = overlap_block(N, N if ncols is None else _check_index(ncols, "ncols"))
    block.setflags(write=False)
    return OverlapMatrix(block)


def overlap_quadrature(n: int, m: int, tol: float = 1e-12, *, pair=(ModeBasis.SINE, ModeBasis.COSINE)) -> float:
    """Independent oracle for :func:`overlap` by adaptive Gauss-Kronrod.

    Integrates on the unit strip (the value does not depend on ``d``).  The
    ``pair`` argument allows checking same-family orthonormality too.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n = _check_index(n)
    m = _check_index(m, "m")
    trig = {ModeBasis.SINE: math.sin, ModeBasis.COSINE: math.cos}
    f, g = trig[pair[0]], trig[pair[1]]
    a = (2 * n - 1) * math.pi / 2.0
    b = (2 * m - 1) * math.pi / 2.0

    def integrand(y):
        return 2.0 * f(a * y) * g(b * y)

    # one subinterval per half-oscillation keeps QUADPACK well inside its limit
    pieces = max(n, m) * 2
    limit = max(50, 4 * pieces)
    value, err = integrate.quad(integrand, 0.0, 1.0, epsabs=tol, epsrel=0.0, limit=limit)
    if not err <= tol:
        raise RuntimeError(f"quadrature did not reach tol={tol:g} for (n, m)=({n}, {m}); estimate {err:g}")
    return value
