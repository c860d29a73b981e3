"""Wave packets built from the stationary scattering states.

    psi(t, x, y) = int a(k) exp(-i (mu_n0 + k^2) t) f(k, x, y) dk

is evaluated by composite Gauss-Legendre quadrature in ``k`` with one matching
solve per node.  All ``y`` integrals are done exactly through orthonormality
of the transversal modes; ``x`` integrals of propagating channels use the
trapezoid rule on a uniform grid, while the evanescent channels (pure
exponentials in ``x``) are integrated in closed form.

The free comparison states are

* ``psi_minus``: the incident channel alone, continued freely to all ``x``;
* ``psi_plus``: reflected open channels on ``x < 0`` and transmitted open
  channels on ``x > 0``, without any evanescent terms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .dispersion import ScatteringConfig, channels, n1_of, nearest_threshold, thresholds
from .errors import GridTooSmall, QuadratureUnderResolved, WindowViolation
from .matcher import solve_matching
from .modes import Geometry, ModeBasis, chi_matrix, mu, overlap_block

log = logging.getLogger(__name__)

_CHUNK = 2048


# ---------------------------------------------------------------------------
# envelopes


def _spline_profile(s):
    """Uniform quadratic B-spline on [0, 3]; C^1 with jumps in the second derivative."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    a = (s >= 0) & (s < 1)
    b = (s >= 1) & (s < 2)
    c = (s >= 2) & (s <= 3)
    out[a] = 0.5 * s[a] ** 2
    out[b] = 0.5 * (-2.0 * s[b] ** 2 + 6.0 * s[b] - 3.0)
    out[c] = 0.5 * (3.0 - s[c]) ** 2
    return out


def _bump_profile(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1
    out[inside] = np.exp(-1.0 / (1.0 - u[inside] ** 2))
    return out


@dataclass(frozen=True)
class Envelope:
    """Momentum profile ``a(k)`` supported in ``[alpha, beta]`` (absolute momenta).

    ``shape="spline"`` is the quadratic B-spline (exactly C^1);
    ``shape="bump"`` is the C-infinity bump ``exp(-1/(1-u^2))``.  The
    amplitude is normalised so that ``2 pi int |a|^2 dk = 1``, which makes
    the packet norm 1.
    """

    alpha: float
    beta: float
    shape: str = "bump"

    def __post_init__(self):
        if not (0 < self.alpha < self.beta):
            raise WindowViolation(f"window must satisfy 0 < alpha < beta, got [{self.alpha}, {self.beta}]")
        if self.shape not in ("spline", "bump"):
            raise ValueError(f"unknown envelope shape {self.shape!r}")

    @classmethod
    def from_units(cls, geom: Geometry, alpha: float, beta: float, shape: str = "bump") -> "Envelope":
        if not (0 < alpha < beta):
            raise WindowViolation(f"window must satisfy 0 < alpha < beta, got [{alpha}, {beta}] (units pi/2d)")
        return cls(alpha * geom.k_unit, beta * geom.k_unit, shape)

    @property
    def breakpoints(self) -> np.ndarray:
        """Points where ``a`` loses smoothness; quadrature panels align with them."""
        if self.shape == "spline":
            return np.linspace(self.alpha, self.beta, 4)
        return np.array([self.alpha, self.beta])

    def _raw(self, k):
        k = np.asarray(k, dtype=float)
        if self.shape == "spline":
            return _spline_profile(3.0 * (k - self.alpha) / (self.beta - self.alpha))
        return _bump_profile((2.0 * k - self.alpha - self.beta) / (self.beta - self.alpha))

    @cached_property
    def normalization(self) -> float:
        bp = self.breakpoints
        total = 0.0
        for lo, hi in zip(bp[:-1], bp[1:]):
            val, _ = integrate.quad(lambda k: float(self._raw(k)) ** 2, lo, hi, epsabs=0, epsrel=1e-13, limit=200)
            total += val
        return 1.0 / math.sqrt(2.0 * math.pi * total)

    def __call__(self, k):
        return self.normalization * self._raw(k)

    @property
    def mean_k(self) -> float:
        """``int k |a|^2 / int |a|^2``; twice this is the free group velocity."""
        bp = self.breakpoints
        num = den = 0.0
        for lo, hi in zip(bp[:-1], bp[1:]):
            num += integrate.quad(lambda k: k * float(self._raw(k)) ** 2, lo, hi, epsrel=1e-13)[0]
            den += integrate.quad(lambda k: float(self._raw(k)) ** 2, lo, hi, epsrel=1e-13)[0]
        return num / den


def validate_window(env: Envelope, cfg: ScatteringConfig) -> Envelope:
    """Check that the open-channel count is constant on ``[alpha, beta]``.

    Raises :class:`WindowViolation` naming the first threshold inside the
    window.
    """
    if not env.alpha > 0:
        raise WindowViolation("window must stay away from k = 0")
    geom, n0 = cfg.geom, cfg.n0
    lo = ScatteringConfig(geom, n0, env.alpha)
    n_lo = n1_of(lo)
    n_hi = n1_of(ScatteringConfig(geom, n0, env.beta))
    th_near = nearest_threshold(env.alpha, n0, geom)
    ths = thresholds(n0, geom, max(n_hi + 1, n0 + 1))
    inside = [th for th in ths if env.alpha <= th <= env.beta]
    if inside or n_lo != n_hi:
        th = inside[0] if inside else th_near
        raise WindowViolation(
            f"window [{env.alpha:.6g}, {env.beta:.6g}] contains the threshold {th:.6g}", threshold=th
        )
    return env


# ---------------------------------------------------------------------------
# quadrature and grids


@dataclass(frozen=True)
class QuadSpec:
    """Composite Gauss-Legendre rule: about ``nodes`` points, ``order`` per panel."""

    nodes: int = 64
    order: int = 8

    def doubled(self) -> "QuadSpec":
        return QuadSpec(2 * self.nodes, self.order)

    def rule(self, breakpoints) -> tuple[np.ndarray, np.ndarray]:
        pieces = len(breakpoints) - 1
        per_piece = max(1, int(round(self.nodes / (self.order * pieces))))
        x, w = np.polynomial.legendre.leggauss(self.order)
        ks, ws = [], []
        for lo, hi in zip(breakpoints[:-1], breakpoints[1:]):
            edges = np.linspace(lo, hi, per_piece + 1)
            for a, b in zip(edges[:-1], edges[1:]):
                ks.append(0.5 * (b - a) * x + 0.5 * (a + b))
                ws.append(0.5 * (b - a) * w)
        return np.concatenate(ks), np.concatenate(ws)


@dataclass(frozen=True)
class GridSpec:
    """Uniform sampling of ``[-X, X] x [0, d]``.

    ``dx`` and ``dy`` default to ``d/16`` and ``d/64`` when left ``None``.
    """

    X: float
    dx: float | None = None
    dy: float | None = None

    def x(self, geom: Geometry) -> np.ndarray:
        dx = self.dx or geom.d / 16
        n = int(math.ceil(self.X / dx))
        return np.linspace(-n * dx, n * dx, 2 * n + 1)

    def y(self, geom: Geometry) -> np.ndarray:
        dy = self.dy or geom.d / 64
        n = int(math.ceil(geom.d / dy))
        return np.linspace(0.0, geom.d, n + 1)

    def grown(self, factor: float = 1.5) -> "GridSpec":
        return GridSpec(self.X * factor, self.dx, self.dy)


@dataclass
class FieldSnapshot:
    """Complex field sampled on ``x`` (rows) by ``y`` (columns)."""

    t: float
    x: np.ndarray
    y: np.ndarray
    values: np.ndarray = field(repr=False)

    def to_csv(self) -> str:
        lines = ["x,y,re,im"]
        for i, xv in enumerate(self.x):
            for j, yv in enumerate(self.y):
                z = self.values[i, j]
                lines.append(f"{xv!r},{yv!r},{z.real!r},{z.imag!r}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "x": self.x.tolist(),
            "y": self.y.tolist(),
            "shape": list(self.values.shape),
            "re": self.values.real.ravel().tolist(),
            "im": self.values.imag.ravel().tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FieldSnapshot":
        shape = tuple(data["shape"])
        vals = (np.asarray(data["re"]) + 1j * np.asarray(data["im"])).reshape(shape)
        return cls(t=data["t"], x=np.asarray(data["x"]), y=np.asarray(data["y"]), values=vals)

    def cross_section_norms(self) -> np.ndarray:
        """``||psi(t, x, .)||_{L2(0,d)}`` for every sampled ``x`` (trapezoid in y)."""
        return np.sqrt(np.trapezoid(np.abs(self.values) ** 2, self.y, axis=1))


@dataclass
class AsymptoticPair:
    psi_minus: FieldSnapshot
    psi_plus: FieldSnapshot


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    r2: float


# ---------------------------------------------------------------------------
# the packet


@dataclass
class _Modal:
    """Modal coefficients of the propagating parts on the x grid."""

    xl: np.ndarray  # x <= 0
    xr: np.ndarray  # x >= 0
    inc_l: np.ndarray
    inc_r: np.ndarray
    refl: np.ndarray  # (n1, len(xl))
    trans: np.ndarray  # (n1, len(xr))


class WavePacket:
    """Per-node matching solutions for one envelope, reused across times and grids."""

    def __init__(self, cfg: ScatteringConfig, env: Envelope, quad: QuadSpec = QuadSpec(), N: int = 64):
        validate_window(env, cfg)
        self.cfg, self.env, self.quad, self.N = cfg, env, quad, N
        self.geom, self.n0 = cfg.geom, cfg.n0
        self.mu0 = mu(self.n0, self.geom)
        self.k, self.w = quad.rule(env.breakpoints)
        self.a = env(self.k)
        self.n1 = n1_of(ScatteringConfig(self.geom, self.n0, float(self.k[0])))
        nk = self.k.size
        self.r = np.empty((nk, N), dtype=complex)
        self.t = np.empty((nk, N), dtype=complex)
        self.kl = np.empty((nk, self.n1))
        self.kap = np.empty((nk, N - self.n1))
        for j, kj in enumerate(self.k):
            cj = ScatteringConfig(self.geom, self.n0, float(kj))
            sol = solve_matching(cj, N, Nt=N, margin=0.0)
            chan = channels(cj, N)
            self.r[j], self.t[j] = sol.r, sol.t
            self.kl[j] = chan.k_prop
            self.kap[j] = chan.kappa_evan
        self.O_row = overlap_block(self.n0, N)[self.n0 - 1]

    # -- basic pieces -------------------------------------------------------

    def _phase(self, t: float) -> np.ndarray:
        return self.w * self.a * np.exp(-1j * (self.mu0 + self.k**2) * t)

    @staticmethod
    def _synth(x: np.ndarray, kk: np.ndarray, amp: np.ndarray, sign: float) -> np.ndarray:
        """``sum_j amp_j exp(sign * i * kk_j * x)`` evaluated in chunks."""
        out = np.empty(x.size, dtype=complex)
        for s in range(0, x.size, _CHUNK):
            xs = x[s : s + _CHUNK]
            out[s : s + _CHUNK] = np.exp(sign * 1j * np.outer(xs, kk)) @ amp
        return out

    def modal(self, t: float, x: np.ndarray) -> _Modal:
        ph = self._phase(t)
        xl, xr = x[x <= 0], x[x >= 0]
        inc_l = self._synth(xl, self.k, ph, +1)
        inc_r = self._synth(xr, self.k, ph, +1)
        refl = np.array([self._synth(xl, self.kl[:, l], ph * self.r[:, l], -1) for l in range(self.n1)])
        trans = np.array([self._synth(xr, self.kl[:, l], ph * self.t[:, l], +1) for l in range(self.n1)])
        return _Modal(xl, xr, inc_l, inc_r, refl, trans)

    def evanescent_norms(self, t: float) -> tuple[float, float]:
        """Squared L2 norms of the closed-channel parts on ``x < 0`` and ``x > 0``.

        ``int_0^inf |sum_j q_j exp(-kappa_j x)|^2 dx = q^H K q`` with
        ``K_jj' = 1 / (kappa_j + kappa_j')``.
        """
        ph = self._phase(t)
        left = right = 0.0
        for i in range(self.kap.shape[1]):
            kap = self.kap[:, i]
            K = 1.0 / (kap[:, None] + kap[None, :])
            ql = ph * self.r[:, self.n1 + i]
            qr = ph * self.t[:, self.n1 + i]
            left += float(np.real(np.vdot(ql, K @ ql)))
            right += float(np.real(np.vdot(qr, K @ qr)))
        return left, right

    def _incident_cross_evanescent(self, t: float) -> complex:
        """``int_0^inf conj(psi_minus) psi~_ND`` over x and y, in closed form."""
        ph = self._phase(t)
        total = 0.0 + 0.0j
        for i in range(self.kap.shape[1]):
            m = self.n1 + i
            q = ph * self.t[:, m]
            K = 1.0 / (self.kap[None, :, i] + 1j * self.k[:, None])
            total += self.O_row[m] * np.vdot(ph, K @ q)
        return total

    # -- norms --------------------------------------------------------------

    def _grid_norms(self, t: float, grid: GridSpec) -> dict:
        x = grid.x(self.geom)
        md = self.modal(t, x)
        n0 = self.n0 - 1

        def integ(vals, xs):
            return np.trapezoid(vals, xs)

        left_open = np.abs(md.refl) ** 2
        left_open[n0] = np.abs(md.refl[n0] + md.inc_l) ** 2
        ev_l, ev_r = self.evanescent_norms(t)
        out = {
            "total": integ(left_open.sum(axis=0), md.xl) + integ((np.abs(md.trans) ** 2).sum(axis=0), md.xr) + ev_l + ev_r,
            "inc_left": integ(np.abs(md.inc_l) ** 2, md.xl),
            "inc_right": integ(np.abs(md.inc_r) ** 2, md.xr),
            "refl": integ((np.abs(md.refl) ** 2).sum(axis=0), md.xl),
            "trans": integ((np.abs(md.trans) ** 2).sum(axis=0), md.xr),
            "ev_left": ev_l,
            "ev_right": ev_r,
        }
        # (psi_minus, psi_ND) on x > 0, psi_minus being chi^-_n0 there
        cross = integ(np.conj(md.inc_r) * (self.O_row[: self.n1, None] * md.trans).sum(axis=0), md.xr)
        out["cross_right"] = cross + self._incident_cross_evanescent(t)
        # mass near the outer ends of the grid, for the growth test
        X = x[-1]
        edge_l = md.xl < -0.9 * X
        edge_r = md.xr > 0.9 * X
        out["edge"] = integ(left_open.sum(axis=0)[edge_l], md.xl[edge_l]) + integ(
            (np.abs(md.trans) ** 2).sum(axis=0)[edge_r], md.xr[edge_r]
        ) + integ(np.abs(md.inc_l[edge_l]) ** 2, md.xl[edge_l]) + integ(np.abs(md.inc_r[edge_r]) ** 2, md.xr[edge_r])
        return {key: (complex(val) if key == "cross_right" else float(np.real(val))) for key, val in out.items()}

    def auto_grid(self, t: float, grid: GridSpec | None = None, *, tol: float = 1e-6, max_grow: int = 12) -> tuple[GridSpec, dict]:
        """Grow ``grid`` until the mass in its outer 10% is below ``tol`` of the total."""
        vmax = 2.0 * float(np.max(self.kl[-1])) if self.n1 else 2.0 * self.env.beta
        if grid is None:
            spread = 40.0 / (self.env.beta - self.env.alpha)
            grid = GridSpec(X=vmax * abs(t) + spread + 10 * self.geom.d)
        for _ in range(max_grow):
            norms = self._grid_norms(t, grid)
            if norms["edge"] < tol * max(norms["total"], 1e-300):
                return grid, norms
            grid = grid.grown()
        raise GridTooSmall(f"boundary mass still {norms['edge']:.3g} of {norms['total']:.3g} at X={grid.X:.4g}")

    def norm(self, t: float, grid: GridSpec | None = None) -> float:
        _, norms = self.auto_grid(t, grid)
        return math.sqrt(norms["total"])

    def distance(self, t: float, grid: GridSpec | None = None) -> float:
        """``||psi(t) - psi_+(t)||`` for ``t >= 0``, ``||psi(t) - psi_-(t)||`` for ``t < 0``."""
        _, nm = self.auto_grid(t, grid)
        if t >= 0:
            sq = nm["inc_left"] + nm["ev_left"] + nm["ev_right"]
        else:
            sq = nm["refl"] + nm["ev_left"] + nm["trans"] + nm["ev_right"] + nm["inc_right"] - 2.0 * nm["cross_right"].real
        return math.sqrt(max(sq, 0.0))

    def evanescent_norm(self, t: float) -> float:
        ev_l, ev_r = self.evanescent_norms(t)
        return math.sqrt(ev_l + ev_r)

    # -- sampled fields -----------------------------------------------------

    def _evanescent_field(self, t: float, x: np.ndarray, side: str) -> np.ndarray:
        """Closed-channel modal coefficients on ``x``, shape ``(N - n1, len(x))``."""
        ph = self._phase(t)
        coef = self.r if side == "left" else self.t
        sgn = 1.0 if side == "left" else -1.0
        out = np.empty((self.kap.shape[1], x.size), dtype=complex)
        for i in range(self.kap.shape[1]):
            E = np.exp(sgn * np.outer(x, self.kap[:, i]))
            out[i] = E @ (ph * coef[:, self.n1 + i])
        return out

    def snapshot(self, t: float, grid: GridSpec, part: str = "full") -> FieldSnapshot:
        """Field on the grid; ``part`` is ``full``, ``minus``, ``plus`` or ``evanescent``."""
        x, y = grid.x(self.geom), grid.y(self.geom)
        md = self.modal(t, x)
        S = chi_matrix(ModeBasis.SINE, self.N, y, self.geom)
        C = chi_matrix(ModeBasis.COSINE, self.N, y, self.geom)
        left = np.zeros((md.xl.size, self.N), dtype=complex)
        right = np.zeros((md.xr.size, self.N), dtype=complex)
        n0 = self.n0 - 1
        if part == "minus":
            full = np.outer(self._synth(x, self.k, self._phase(t), +1), S[n0])
            return FieldSnapshot(t, x, y, full)
        if part in ("full", "plus"):
            left[:, : self.n1] = md.refl.T
            right[:, : self.n1] = md.trans.T
        if part == "full":
            left[:, n0] += md.inc_l
        if part in ("full", "evanescent"):
            left[:, self.n1 :] = self._evanescent_field(t, md.xl, "left").T
            right[:, self.n1 :] = self._evanescent_field(t, md.xr, "right").T
        if part not in ("full", "plus", "evanescent"):
            raise ValueError(f"unknown part {part!r}")
        vals_l = left @ S
        vals_r = right @ C
        # x = 0 appears on both sides; keep the left trace there
        values = np.concatenate([vals_l, vals_r[1:]], axis=0)
        return FieldSnapshot(t, x, y, values)


# ---------------------------------------------------------------------------
# module-level operations

_CACHE: dict = {}


def packet(cfg: ScatteringConfig, env: Envelope, quad: QuadSpec = QuadSpec(), N: int = 64) -> WavePacket:
    """Cached :class:`WavePacket` (node solves are write-once)."""
    key = (cfg.geom, cfg.n0, env, quad, N)
    if key not in _CACHE:
        _CACHE[key] = WavePacket(cfg, env, quad, N)
    return _CACHE[key]


def _check_quadrature(cfg, env, quad, N, fn, tol):
    try:
        coarse = fn(packet(cfg, env, quad, N))
    except GridTooSmall as exc:
        # an under-resolved rule leaks spurious mass far from the packet
        raise QuadratureUnderResolved(f"{quad.nodes} nodes: {exc}") from exc
    fine = fn(packet(cfg, env, quad.doubled(), N))
    scale = max(abs(fine), 1e-300)
    if abs(coarse - fine) > tol * scale:
        raise QuadratureUnderResolved(
            f"{quad.nodes} vs {2 * quad.nodes} nodes differ by {abs(coarse - fine) / scale:.3g} (tol {tol:g})"
        )
    return fine


def evolve(cfg, env, t, grid, quad=QuadSpec(), N=64, *, check_tol: float | None = None) -> FieldSnapshot:
    """Sampled ``psi(t, x, y)``; with ``check_tol`` the packet norm is compared at doubled nodes."""
    wp = packet(cfg, env, quad, N)
    if check_tol is not None:
        _check_quadrature(cfg, env, quad, N, lambda p: p.norm(t, grid), check_tol)
    return wp.snapshot(t, grid, "full")


def asymptotes(cfg, env, t, grid, quad=QuadSpec(), N=64) -> AsymptoticPair:
    wp = packet(cfg, env, quad, N)
    return AsymptoticPair(psi_minus=wp.snapshot(t, grid, "minus"), psi_plus=wp.snapshot(t, grid, "plus"))


def convergence_distance(cfg, env, t, grid=None, quad=QuadSpec(), N=64, *, check_tol: float | None = None) -> float:
    """``||psi(t) - psi_sign(t)(t)||_{L2}`` with the grid grown to contain the packet."""
    if check_tol is not None:
        return _check_quadrature(cfg, env, quad, N, lambda p: p.distance(t, grid), check_tol)
    return packet(cfg, env, quad, N).distance(t, grid)


def decay_fit(samples) -> DecayFit:
    """Least squares line through ``(log|t|, log distance)``."""
    pts = [(float(t), float(dist)) for t, dist in samples]
    if len(pts) < 4:
        raise ValueError("need at least 4 samples")
    signs = {math.copysign(1.0, t) for t, _ in pts}
    if len(signs) != 1 or any(t == 0 for t, _ in pts):
        raise ValueError("all sample times must be nonzero and share one sign")
    if any(not (dist > 1e-300) for _, dist in pts):
        raise ValueError("distances at or below the numerical floor; fit is degenerate")
    lx = np.log([abs(t) for t, _ in pts])
    ly = np.log([dist for _, dist in pts])
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(slope=float(slope), intercept=float(intercept), r2=r2)
