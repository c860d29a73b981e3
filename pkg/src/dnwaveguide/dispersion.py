"""Channel bookkeeping at fixed energy.

Given the incident mode ``n0`` and longitudinal momentum ``k`` the energy is
``E = mu_n0 + k^2``.  Modes with ``mu_n < E`` propagate with momentum
``k_n = sqrt(E - mu_n)``; the rest are evanescent with decay rate
``kappa_n = sqrt(mu_n - E)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ThresholdDegenerate
from .modes import Geometry, mu, mu_array

#: Default refusal margin around thresholds, in units of pi/(2d).
THRESHOLD_MARGIN = 1e-6


@dataclass(frozen=True)
class ScatteringConfig:
    geom: Geometry
    n0: int
    k: float

    def __post_init__(self):
        if isinstance(self.n0, bool) or int(self.n0) != self.n0 or self.n0 < 1:
            raise ValueError(f"incident mode n0 must be a positive integer, got {self.n0!r}")
        if not (self.k > 0 and math.isfinite(self.k)):
            raise ValueError(f"momentum k must be positive and finite, got {self.k!r}")

    @classmethod
    def from_units(cls, d: float, n0: int, k_units: float) -> "ScatteringConfig":
        """Build a config with ``k`` given in units of pi/(2d)."""
        geom = Geometry(d)
        return cls(geom, n0, k_units * geom.k_unit)

    def with_k(self, k: float) -> "ScatteringConfig":
        return ScatteringConfig(self.geom, self.n0, k)

    @property
    def k_units(self) -> float:
        return self.k / self.geom.k_unit


@dataclass(frozen=True)
class ChannelData:
    """Propagating momenta and evanescent rates at one energy.

    ``k_prop[l-1]`` is ``k_l`` for ``l = 1..n1``; ``kappa_evan[j]`` is
    ``kappa_{n1+1+j}`` up to the cutoff ``nmax``.
    """

    E: float
    n1: int
    nmax: int
    k_prop: np.ndarray = field(repr=False)
    kappa_evan: np.ndarray = field(repr=False)

    def kappa(self, n: int) -> float:
        if not self.n1 < n <= self.nmax:
            raise KeyError(n)
        return float(self.kappa_evan[n - self.n1 - 1])

    def rates(self) -> np.ndarray:
        """Diagonal ``lambda_n`` of the matching operator, ``n = 1..nmax``.

        ``-i k_n`` on propagating channels and ``kappa_n`` on evanescent ones.
        """
        return np.concatenate([-1j * self.k_prop, self.kappa_evan.astype(complex)])


def energy(cfg: ScatteringConfig) -> float:
    return mu(cfg.n0, cfg.geom) + cfg.k**2


def n1_of(cfg: ScatteringConfig) -> int:
    """Highest open transversal mode, ``floor(1/2 + sqrt((n0-1/2)^2 + d^2 k^2 / pi^2))``."""
    d = cfg.geom.d
    return int(math.floor(0.5 + math.sqrt((cfg.n0 - 0.5) ** 2 + (d * cfg.k / math.pi) ** 2)))


def thresholds(n0: int, geom: Geometry, nmax: int) -> list[float]:
    """Momenta ``sqrt(mu_n - mu_n0)`` at which mode ``n`` opens, for ``n0 < n <= nmax``."""
    if nmax < n0 + 1:
        raise ValueError(f"nmax must be at least n0 + 1 = {n0 + 1}")
    base = mu(n0, geom)
    return [math.sqrt(mu(n, geom) - base) for n in range(n0 + 1, nmax + 1)]


def nearest_threshold(k: float, n0: int, geom: Geometry) -> float:
    """Closest element of the threshold set to ``k``."""
    n_hi = n1_of(ScatteringConfig(geom, n0, k)) + 1
    cands = thresholds(n0, geom, max(n_hi, n0 + 1))
    return min(cands, key=lambda th: abs(th - k))


def is_near_threshold(k: float, n0: int, geom: Geometry, margin: float) -> bool:
    """True iff ``k`` lies closer than ``margin`` (absolute momentum) to a threshold."""
    if not margin > 0:
        raise ValueError("margin must be positive")
    return abs(nearest_threshold(k, n0, geom) - k) < margin


def channels(cfg: ScatteringConfig, nmax: int) -> ChannelData:
    """Split modes ``1..nmax`` into propagating and evanescent sets.

    Raises :class:`ThresholdDegenerate` if ``E`` coincides with some ``mu_n``
    to within round-off (the matching problem is undefined there).
    """
    E = energy(cfg)
    n1 = n1_of(cfg)
    if nmax < n1:
        raise ValueError(f"nmax={nmax} must be at least n1={n1}")
    mus = mu_array(max(nmax, n1 + 1), cfg.geom)
    gap = np.abs(mus - E)
    if np.min(gap[: n1 + 1]) <= 64 * np.finfo(float).eps * E:
        th = nearest_threshold(cfg.k, cfg.n0, cfg.geom)
        raise ThresholdDegenerate(f"k={cfg.k!r} sits on the threshold {th!r}", threshold=th)
    k_prop = np.sqrt(E - mus[:n1])
    kappa = np.sqrt(mus[n1:nmax] - E)
    # exact value for the incident channel
    k_prop[cfg.n0 - 1] = cfg.k
    return ChannelData(E=E, n1=n1, nmax=nmax, k_prop=k_prop, kappa_evan=kappa)


def check_off_threshold(cfg: ScatteringConfig, margin_units: float = THRESHOLD_MARGIN) -> None:
    """Raise :class:`ThresholdDegenerate` if ``k`` is inside the refusal margin.

    ``margin_units`` is in units of pi/(2d); pass 0 to skip the check.
    """
    if margin_units <= 0:
        return
    margin = margin_units * cfg.geom.k_unit
    th = nearest_threshold(cfg.k, cfg.n0, cfg.geom)
    if abs(th - cfg.k) < margin:
        raise ThresholdDegenerate(
            f"k={cfg.k:.12g} is within {margin:.3g} of the threshold {th:.12g}", threshold=th
        )
