"""Truncated mode-matching at the junction x = 0.

The unknown is the common trace ``phi`` of the field at ``x = 0``, expanded
in the sine basis, ``phi = sum_n c_n chi^-_n``.  Its cosine coefficients are
``t = O^T c`` with ``O`` the overlap matrix.  Testing the derivative matching
condition against ``chi^-_j`` (j <= N) gives the dense system

    A c = -2 i k e_{n0},    A = Lam + O Lam O^T,

with ``Lam = diag(-i k_n)`` on open channels and ``diag(kappa_n)`` on closed
ones.  ``A = -i G1 + B`` splits into the propagating part ``G1`` and the
evanescent part ``B``, both real symmetric positive semi-definite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .dispersion import (
    THRESHOLD_MARGIN,
    ChannelData,
    ScatteringConfig,
    channels,
    check_off_threshold,
)
from .errors import NonConvergence, SolveFailed, WindowViolation
from .modes import Geometry, overlap_block


# ---------------------------------------------------------------------------
# weighted sequence norms


def norm_weighted(alpha: float, coeffs) -> float:
    """``sqrt(sum_n n^(2 alpha) |c_n|^2)`` with ``n`` counted from 1."""
    c = np.asarray(coeffs)
    n = np.arange(1, c.size + 1, dtype=float)
    return float(np.sqrt(np.sum(n ** (2.0 * alpha) * np.abs(c) ** 2)))


def norm_half(c, O) -> float:
    """Norm of a trace in the intersection space: sine and cosine sides summed."""
    c = np.asarray(c)
    t = np.asarray(O).T @ c
    return math.sqrt(norm_weighted(0.5, c) ** 2 + norm_weighted(0.5, t) ** 2)


def half_gram(O) -> np.ndarray:
    """Gram matrix of the truncated ``H^{1/2}`` norm in sine coordinates."""
    O = np.asarray(O)
    n = np.arange(1, O.shape[1] + 1, dtype=float)
    return np.diag(np.arange(1, O.shape[0] + 1, dtype=float)) + (O * n) @ O.T


# ---------------------------------------------------------------------------
# assembly


@dataclass(frozen=True)
class TruncatedOperator:
    """Sine-basis Galerkin matrix of the matching operator."""

    cfg: ScatteringConfig
    N: int
    chan: ChannelData = field(repr=False)
    O: np.ndarray = field(repr=False)
    A: np.ndarray = field(repr=False)
    cond_estimate: float = math.nan

    @property
    def n1(self) -> int:
        return self.chan.n1

    @property
    def lam(self) -> np.ndarray:
        return self.chan.rates()

    def d1_matrix(self) -> np.ndarray:
        """``G1 = K + O K O^T`` with ``K = diag(k_l)`` on open channels."""
        kdiag = np.zeros(self.N)
        kdiag[: self.n1] = self.chan.k_prop
        return np.diag(kdiag) + (self.O * kdiag) @ self.O.T

    def d2_matrix(self) -> np.ndarray:
        """``B = Kap + O Kap O^T`` with ``Kap = diag(kappa_n)`` on closed channels."""
        kap = np.zeros(self.N)
        kap[self.n1 :] = self.chan.kappa_evan
        return np.diag(kap) + (self.O * kap) @ self.O.T


def _galerkin(diag: np.ndarray, O: np.ndarray) -> np.ndarray:
    return np.diag(diag) + (O * diag) @ O.T


def _rcond(lu: np.ndarray, anorm: float) -> float:
    gecon = linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    return float(rcond) if info == 0 else 0.0


def assemble(cfg: ScatteringConfig, N: int, *, margin: float = THRESHOLD_MARGIN) -> TruncatedOperator:
    """Assemble the ``N x N`` matching matrix ``A`` at ``cfg``.

    ``margin`` is the threshold refusal margin in units of pi/(2d); 0 forces
    assembly anywhere off the exact threshold.  ``N`` must be at least the
    number of open channels.
    """
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ValueError(f"truncation N must be a positive integer, got {N!r}")
    N = int(N)
    check_off_threshold(cfg, margin)
    chan = channels(cfg, N)
    if N < chan.n1:
        raise ValueError(f"truncation N={N} is below the number of open channels n1={chan.n1}")
    O = overlap_block(N, N)
    A = _galerkin(chan.rates(), O)
    return TruncatedOperator(cfg=cfg, N=N, chan=chan, O=O, A=A)


def operator_norm(op: TruncatedOperator) -> float:
    """Spectral norm of ``A`` as a map ``H^{1/2} -> H^{-1/2}`` (truncated).

    The ``H^{-1/2}`` norm is the dual of the summed sine/cosine ``H^{1/2}``
    norm, so the weighted operator is ``G^{-1/2} A G^{-1/2}``.
    """
    G = half_gram(op.O)
    w, V = linalg.eigh(G)
    g_inv_half = (V / np.sqrt(w)) @ V.T
    return float(linalg.norm(g_inv_half @ op.A @ g_inv_half, 2))


# ---------------------------------------------------------------------------
# solutions


@dataclass
class TraceSolution:
    """Junction trace and the scattering coefficients it determines.

    ``r`` excludes the unit incident amplitude: ``r = c - e_{n0}``.
    ``t`` holds the cosine coefficients ``m = 1..Nt`` of the same trace.
    """

    cfg: ScatteringConfig
    N: int
    Nt: int
    c: np.ndarray
    r: np.ndarray
    t: np.ndarray
    residual_cont: float = math.nan
    residual_deriv: float = math.nan
    cond: float = math.nan
    n1: int = 0
    k_prop: np.ndarray = field(default_factory=lambda: np.zeros(0))
    extras: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def pairs(v):
            return [[float(z.real), float(z.imag)] for z in np.asarray(v, dtype=complex)]

        return {
            "config": {"d": self.cfg.geom.d, "n0": self.cfg.n0, "k": self.cfg.k},
            "N": self.N,
            "Nt": self.Nt,
            "n1": self.n1,
            "k_prop": [float(v) for v in self.k_prop],
            "c": pairs(self.c),
            "r": pairs(self.r),
            "t": pairs(self.t),
            "residual_cont": self.residual_cont,
            "residual_deriv": self.residual_deriv,
            "cond": self.cond,
        }

    def to_json(self, **kwargs) -> str:
        # repr-precision floats round-trip exactly through json
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> "TraceSolution":
        def arr(v):
            a = np.asarray(v, dtype=float).reshape(-1, 2)
            return a[:, 0] + 1j * a[:, 1]

        conf = data["config"]
        cfg = ScatteringConfig(Geometry(conf["d"]), int(conf["n0"]), conf["k"])
        return cls(
            cfg=cfg,
            N=int(data["N"]),
            Nt=int(data["Nt"]),
            c=arr(data["c"]),
            r=arr(data["r"]),
            t=arr(data["t"]),
            residual_cont=float(data["residual_cont"]),
            residual_deriv=float(data["residual_deriv"]),
            cond=float(data["cond"]),
            n1=int(data.get("n1", 0)),
            k_prop=np.asarray(data.get("k_prop", []), dtype=float),
        )

    @classmethod
    def from_json(cls, text: str) -> "TraceSolution":
        return cls.from_dict(json.loads(text))


def _rhs(cfg: ScatteringConfig, N: int) -> np.ndarray:
    b = np.zeros(N, dtype=complex)
    b[cfg.n0 - 1] = -2j * cfg.k
    return b


def _lu_solve(A: np.ndarray, b: np.ndarray, cfg: ScatteringConfig):
    anorm = np.abs(A).sum(axis=0).max()
    lu, piv = linalg.lu_factor(A, check_finite=False)
    if np.any(np.diag(lu) == 0):
        raise SolveFailed(f"matching matrix is singular at k={cfg.k!r}")
    rcond = _rcond(lu, anorm)
    if rcond < np.finfo(float).eps:
        raise SolveFailed(f"matching matrix is rank deficient at k={cfg.k!r} (cond ~ {1 / max(rcond, 1e-300):.3g})")
    return linalg.lu_solve((lu, piv), b, check_finite=False), 1.0 / rcond


def _finish(op: TruncatedOperator, c: np.ndarray, cond: float, Nt: int | None, extras=None) -> TraceSolution:
    cfg, N = op.cfg, op.N
    Nt = 2 * N if Nt is None else int(Nt)
    if Nt < N:
        raise ValueError(f"Nt={Nt} must be at least N={N}")
    r = c.copy()
    r[cfg.n0 - 1] -= 1.0
    t = overlap_block(N, Nt).T @ c
    sol = TraceSolution(
        cfg=cfg,
        N=N,
        Nt=Nt,
        c=c,
        r=r,
        t=t,
        cond=cond,
        n1=op.n1,
        k_prop=op.chan.k_prop.copy(),
        extras=dict(extras or {}),
    )
    sol.residual_cont = residual_continuity(sol, Nt)
    sol.residual_deriv = residual_derivative(sol, Nt)
    return sol


def solve_matching(
    cfg: ScatteringConfig,
    N: int,
    *,
    Nt: int | None = None,
    margin: float = THRESHOLD_MARGIN,
    op: TruncatedOperator | None = None,
) -> TraceSolution:
    """Direct dense LU solve of ``A c = -2 i k e_{n0}``."""
    op = assemble(cfg, N, margin=margin) if op is None else op
    c, cond = _lu_solve(op.A, _rhs(cfg, op.N), cfg)
    return _finish(op, c, cond, Nt)


def solve_matching_right(cfg: ScatteringConfig, N: int, *, margin: float = THRESHOLD_MARGIN) -> TraceSolution:
    """Scattering from the right, incident in ``chi^+_{n0}``.

    The trace is expanded in cosine modes, so the Galerkin matrix is
    ``Lam + O^T Lam O``.  ``r`` holds cosine (back-reflected) coefficients and
    ``t`` the sine coefficients on the left, truncated to ``N``.
    """
    op = assemble(cfg, N, margin=margin)
    A = _galerkin(op.lam, op.O.T)
    c, cond = _lu_solve(A, _rhs(cfg, N), cfg)
    r = c.copy()
    r[cfg.n0 - 1] -= 1.0
    return TraceSolution(cfg=cfg, N=N, Nt=N, c=c, r=r, t=op.O @ c, cond=cond, n1=op.n1, k_prop=op.chan.k_prop.copy())


@dataclass(frozen=True)
class SplitDiagnostics:
    """Spectral data of the reduced open-channel problem."""

    m_eigenvalues: np.ndarray
    rank: int

    @property
    def max_imag(self) -> float:
        return float(np.max(np.abs(self.m_eigenvalues.imag))) if self.m_eigenvalues.size else 0.0

    @property
    def min_modulus(self) -> float:
        """``min_j |1 - i lambda_j|``; at least 1 when every eigenvalue is real and non-negative."""
        return float(np.min(np.abs(1.0 - 1j * self.m_eigenvalues))) if self.m_eigenvalues.size else 1.0


def solve_matching_split(
    cfg: ScatteringConfig,
    N: int,
    *,
    Nt: int | None = None,
    margin: float = THRESHOLD_MARGIN,
) -> TraceSolution:
    """Solve through the evanescent inverse and a small open-channel system.

    With ``G1 = S^2`` restricted to its range, put ``phi_1 = S phi``.  Then

        (I - i M) phi_1 = -2 i k S B^{-1} e_{n0},   M = S B^{-1} S,
        c = B^{-1} (-2 i k e_{n0} + i S phi_1).

    ``M`` is real symmetric positive semi-definite, so ``I - i M`` is always
    invertible.  Its eigenvalues are kept in ``extras['split']``.
    """
    op = assemble(cfg, N, margin=margin)
    G1 = op.d1_matrix()
    B = op.d2_matrix()
    w, V = linalg.eigh(G1)
    keep = w > 1e-12 * max(w.max(), 1.0)
    Vr = V[:, keep]
    S = Vr * np.sqrt(w[keep])  # N x r, S S^T = G1

    try:
        B_lu = linalg.lu_factor(B, check_finite=False)
    except (linalg.LinAlgError, ValueError) as exc:
        raise SolveFailed(f"evanescent block singular at k={cfg.k!r}") from exc
    if _rcond(B_lu[0], np.abs(B).sum(axis=0).max()) < np.finfo(float).eps:
        raise SolveFailed(f"evanescent block singular at k={cfg.k!r}; increase N (N={N}, n1={op.n1})")

    e0 = _rhs(cfg, N)  # -2ik e_n0
    Binv_S = linalg.lu_solve(B_lu, S, check_finite=False)
    Binv_e = linalg.lu_solve(B_lu, e0, check_finite=False)
    M = S.T @ Binv_S
    lam = linalg.eigvals(M)
    r_dim = M.shape[0]
    phi1 = linalg.solve(np.eye(r_dim) - 1j * M, S.T @ Binv_e)
    c = Binv_e + 1j * (Binv_S @ phi1)

    A = op.A
    cond = 1.0 / max(_rcond(linalg.lu_factor(A, check_finite=False)[0], np.abs(A).sum(axis=0).max()), 1e-300)
    diag = SplitDiagnostics(m_eigenvalues=lam, rank=r_dim)
    return _finish(op, c, cond, Nt, extras={"split": diag})


# ---------------------------------------------------------------------------
# residuals


def _cosine_coeffs(sol: TraceSolution, upto: int) -> np.ndarray:
    if upto <= sol.t.size:
        return sol.t[:upto]
    return overlap_block(sol.N, upto).T @ sol.c


def residual_continuity(sol: TraceSolution, Nt: int) -> float:
    """``H^{1/2}`` weight of the cosine tail ``m = N+1..Nt`` of the trace.

    This is the part of ``phi`` that the truncated right-hand expansion cannot
    represent.
    """
    if Nt < sol.N:
        raise ValueError("Nt must be at least N")
    t = _cosine_coeffs(sol, Nt)
    m = np.arange(1, Nt + 1, dtype=float)
    tail = slice(sol.N, Nt)
    return float(np.sqrt(np.sum(m[tail] * np.abs(t[tail]) ** 2)))


def derivative_mismatch(sol: TraceSolution, Ntest: int) -> np.ndarray:
    """``(chi^-_j, D phi + 2 i k chi^-_{n0})`` for ``j = 1..Ntest``.

    Uses the same cosine truncation as the solve, so entries ``j <= N`` vanish
    up to round-off.
    """
    cfg, N = sol.cfg, sol.N
    chan = channels(cfg, max(Ntest, N))
    lam = chan.rates()
    O = overlap_block(Ntest, N)
    t = O[:N].T @ sol.c
    g = (O * lam[:N]) @ t
    g[:N] += lam[:N] * sol.c
    g[cfg.n0 - 1] += 2j * cfg.k
    return g


def residual_derivative(sol: TraceSolution, Ntest: int, *, part: str = "tail") -> float:
    """``H^{-1/2}`` (sine side) norm of the derivative mismatch.

    ``part`` selects the tested modes: ``"tail"`` (N < j <= Ntest),
    ``"head"`` (j <= N, Galerkin-orthogonal, round-off only) or ``"all"``.
    """
    g = derivative_mismatch(sol, Ntest)
    j = np.arange(1, Ntest + 1, dtype=float)
    w = np.abs(g) ** 2 / j
    sel = {"tail": slice(sol.N, Ntest), "head": slice(0, sol.N), "all": slice(0, Ntest)}[part]
    return float(np.sqrt(np.sum(w[sel])))


# ---------------------------------------------------------------------------
# evanescent block checks


@dataclass(frozen=True)
class D2Report:
    min_eig: float
    sym_defect: float
    coercivity_const: float
    lower_bound: float


@dataclass(frozen=True)
class BasisAngle:
    """Principal-angle data between the first ``N`` sine and cosine modes.

    ``eps_N`` is the largest cosine; ``gap = 1 - eps_N`` and
    ``eta_N = sqrt(1 - eps_N^2)`` are stored separately because for moderate
    ``N`` the gap underflows double-precision subtraction from 1.
    ``certified`` is True when ``eps_N < 1`` was proven in ball arithmetic.
    """

    N: int
    eps_N: float
    eta_N: float
    gap: float
    certified: bool = False

    @property
    def in_unit_interval(self) -> bool:
        return self.eps_N > 0 and self.gap > 0 and 0 < self.eta_N < 1


# below this gap a double-precision SVD cannot resolve 1 - eps
_DOUBLE_GAP_FLOOR = 1e-8


def _arb_overlap(N: int):
    """Overlap block as an arb matrix at the current working precision."""
    from flint import arb, arb_mat

    pi = arb.pi()
    O = arb_mat(N, N)
    for i in range(N):
        for j in range(N):
            n, m = i + 1, j + 1
            O[i, j] = 2 / (pi * ((n + m - 1) if (n + m) % 2 == 0 else (n - m)))
    return O


def _tail_gram_min_eig(N: int, bits: int | None = None):
    """Smallest eigenvalue of ``I - O O^T`` in arb ball arithmetic.

    Returns ``(value, certified)``.  A finite inverse of the ball matrix
    proves ``I - O O^T`` nonsingular; being a tail Gram matrix it is positive
    semi-definite, hence positive definite and ``eps_N < 1``.  The value
    comes from power iteration on that inverse.
    """
    from flint import arb_mat, ctx

    bits = bits or 12 * N + 200
    old = ctx.prec
    try:
        for _ in range(4):
            ctx.prec = bits
            O = _arb_overlap(N)
            T = -(O * O.transpose())
            for i in range(N):
                T[i, i] += 1
            try:
                Ti = T.inv()
            except (ZeroDivisionError, ValueError):
                bits *= 2
                continue
            x = arb_mat(N, 1, [1] * N)
            lam_prev = None
            for _it in range(200):
                y = Ti * x
                scale = max(abs(y[i, 0]) for i in range(N))
                x = y * (1 / scale)
                lam = float((1 / scale).mid())
                if lam_prev is not None and abs(lam - lam_prev) <= 1e-15 * abs(lam):
                    break
                lam_prev = lam
            return lam, True
        raise RuntimeError(f"could not certify basis angle at N={N}")
    finally:
        ctx.prec = old


def estimate_basis_angle(N: int, *, precise: bool | None = None) -> BasisAngle:
    """Largest principal-angle cosine between the first ``N`` sine and cosine modes.

    Both families are orthonormal, so the cosines are the singular values of
    the ``N x N`` overlap block.  The gap to 1 shrinks roughly like
    ``10^(-1.5 N)``; once it drops below what a double SVD resolves the
    smallest eigenvalue of ``I - O O^T`` is computed in multiprecision
    instead.  ``precise`` forces (True) or forbids (False) that path.
    """
    if isinstance(N, bool) or int(N) != N or N < 1:
        raise ValueError("N must be a positive integer")
    N = int(N)
    s = linalg.svdvals(overlap_block(N, N))
    eps = float(s[0])
    gap = 1.0 - eps
    if precise is None:
        precise = not gap > _DOUBLE_GAP_FLOOR
    if not precise:
        return BasisAngle(N=N, eps_N=eps, eta_N=math.sqrt(max(0.0, 1.0 - eps * eps)), gap=gap)
    lam, certified = _tail_gram_min_eig(N)
    # lam = 1 - eps^2 = (1 - eps)(1 + eps)
    eps_hp = math.sqrt(1.0 - lam)
    return BasisAngle(N=N, eps_N=eps_hp, eta_N=math.sqrt(lam), gap=lam / (1.0 + eps_hp), certified=certified)


def d2_check(cfg: ScatteringConfig, N: int, *, margin: float = THRESHOLD_MARGIN) -> D2Report:
    """Positivity and symmetry of the truncated evanescent block ``B``.

    ``coercivity_const`` is ``min (B c, c) / |c|^2``; ``lower_bound`` is
    ``kappa_{n1+1} (1 - eps_{n1})`` from the basis angle at order ``n1``, the
    value the two-projection argument yields for the sharpest constant.
    """
    op = assemble(cfg, N, margin=margin)
    B = op.d2_matrix()
    herm = 0.5 * (B + B.conj().T)
    min_eig = float(linalg.eigvalsh(herm)[0])
    # inverse through a general LU so that symmetry is tested, not assumed
    Binv = linalg.lu_solve(linalg.lu_factor(B), np.eye(N))
    sym_defect = float(np.max(np.abs(Binv - Binv.T)) / np.max(np.abs(Binv)))
    ang = estimate_basis_angle(op.n1)
    lower = float(op.chan.kappa_evan[0] * (1.0 - ang.eps_N))
    return D2Report(min_eig=min_eig, sym_defect=sym_defect, coercivity_const=min_eig, lower_bound=lower)


def d2_functional(B: np.ndarray, psi: np.ndarray, phi: np.ndarray) -> float:
    """``(B phi, phi) - 2 Re (psi, phi)``."""
    return float(np.real(np.vdot(phi, B @ phi)) - 2.0 * np.real(np.vdot(psi, phi)))


def solve_d2_variational(
    psi_coeffs,
    cfg: ScatteringConfig,
    N: int,
    step_rule: str = "cg",
    *,
    tol: float = 1e-10,
    maxiter: int | None = None,
    margin: float = THRESHOLD_MARGIN,
) -> np.ndarray:
    """Minimise ``F(phi) = (B phi, phi) - 2 Re (psi, phi)`` over the truncated space.

    Exact line search on the quadratic; ``step_rule`` is ``"cg"``
    (conjugate directions) or ``"steepest"``.  Stops when the gradient
    ``2 (B phi - psi)`` has Euclidean norm below ``tol``.
    """
    if step_rule not in ("cg", "steepest"):
        raise ValueError(f"unknown step_rule {step_rule!r}")
    B = assemble(cfg, N, margin=margin).d2_matrix()
    psi = np.zeros(N, dtype=complex)
    p_in = np.asarray(psi_coeffs, dtype=complex)
    psi[: min(N, p_in.size)] = p_in[:N]
    if maxiter is None:
        maxiter = 20 * N if step_rule == "cg" else 200 * N

    phi = np.zeros(N, dtype=complex)
    res = psi - B @ phi  # minus half the gradient
    direction = res.copy()
    rr = np.vdot(res, res).real
    for _ in range(maxiter):
        if 2.0 * math.sqrt(rr) < tol:
            return phi
        Bd = B @ direction
        step = rr / np.vdot(direction, Bd).real if step_rule == "cg" else np.vdot(direction, res).real / np.vdot(direction, Bd).real
        phi = phi + step * direction
        res = res - step * Bd
        rr_new = np.vdot(res, res).real
        if step_rule == "cg":
            direction = res + (rr_new / rr) * direction
        else:
            direction = res.copy()
        rr = rr_new
        if step_rule == "cg" and _ % 50 == 49:
            # replace the recursive residual by the true one; the search
            # direction is kept so conjugacy is not thrown away
            res = psi - B @ phi
            rr = np.vdot(res, res).real
    res = psi - B @ phi
    gnorm = 2.0 * float(np.linalg.norm(res))
    if gnorm < tol:
        return phi
    raise NonConvergence(f"variational solve stalled at gradient norm {gnorm:.3e}", grad_norm=gnorm)


# ---------------------------------------------------------------------------
# k-derivative


def dA_dk(op: TruncatedOperator) -> np.ndarray:
    """Galerkin matrix of ``dD/dk``: ``-i k / k_l`` open, ``-k / kappa_n`` closed."""
    k = op.cfg.k
    diag = np.concatenate([-1j * k / op.chan.k_prop, -k / op.chan.kappa_evan.astype(complex)])
    return _galerkin(diag, op.O)


def dphi_dk(
    cfg: ScatteringConfig,
    N: int,
    mode: str = "formula",
    h: float = 1e-5,
    *,
    margin: float = THRESHOLD_MARGIN,
    bits: int | None = None,
) -> np.ndarray:
    """Derivative of the trace coefficients ``c`` with respect to ``k``.

    ``"formula"``: ``-A^{-1} (dA/dk) c - 2 i A^{-1} e_{n0}``.
    ``"finite_difference"``: central difference with step ``h``; the number of
    open channels must not change across ``[k - h, k + h]``.  With ``bits``
    the two solves and the difference are carried out in ball arithmetic at
    that precision, which removes the round-off floor (about ``eps cond / h``)
    that otherwise hides the O(h^2) truncation error for small ``h``.
    """
    if mode == "formula":
        op = assemble(cfg, N, margin=margin)
        lu = linalg.lu_factor(op.A)
        c = linalg.lu_solve(lu, _rhs(cfg, N))
        e = np.zeros(N, dtype=complex)
        e[cfg.n0 - 1] = 1.0
        return -linalg.lu_solve(lu, dA_dk(op) @ c) - 2j * linalg.lu_solve(lu, e)
    if mode == "finite_difference":
        if not h > 0:
            raise ValueError("h must be positive")
        if bits is not None:
            return _dphi_fd_multiprecision(cfg, N, h, bits, margin=margin)
        lo, hi = cfg.with_k(cfg.k - h), cfg.with_k(cfg.k + h)
        op_lo = assemble(lo, N, margin=margin)
        op_hi = assemble(hi, N, margin=margin)
        op_mid = assemble(cfg, N, margin=margin)
        if not op_lo.n1 == op_mid.n1 == op_hi.n1:
            raise WindowViolation(
                f"open-channel count changes across [{lo.k}, {hi.k}]; shrink h", threshold=None
            )
        c_hi = linalg.solve(op_hi.A, _rhs(hi, N))
        c_lo = linalg.solve(op_lo.A, _rhs(lo, N))
        return (c_hi - c_lo) / (2.0 * h)
    raise ValueError(f"unknown mode {mode!r}")



def _dphi_fd_multiprecision(cfg: ScatteringConfig, N: int, h: float, bits: int, *, margin: float) -> np.ndarray:
    from flint import acb, acb_mat, arb, ctx

    lo, hi = cfg.with_k(cfg.k - h), cfg.with_k(cfg.k + h)
    n1s = {assemble(c, N, margin=margin).n1 for c in (lo, cfg, hi)}
    if len(n1s) != 1:
        raise WindowViolation(f"open-channel count changes across [{lo.k}, {hi.k}]; shrink h", threshold=None)
    old = ctx.prec
    ctx.prec = bits
    try:
        O = _arb_overlap(N)
        Ot = O.transpose()
        pi = arb.pi()
        d = arb(cfg.geom.d)
        mu = [((2 * n - 1) * pi / (2 * d)) ** 2 for n in range(1, N + 1)]

        def solve(c: ScatteringConfig):
            k = arb(c.k)
            E = mu[c.n0 - 1] + k * k
            lam = []
            for m in mu:
                gap = E - m
                lam.append(acb(0, -1) * gap.sqrt() if gap > 0 else (-gap).sqrt())
            # O diag(lam) O^T built as a product of complex matrices
            OL = acb_mat(O)
            for j in range(N):
                for i in range(N):
                    OL[i, j] = OL[i, j] * lam[j]
            A = OL * acb_mat(Ot)
            for i in range(N):
                A[i, i] += lam[i]
            b = acb_mat(N, 1)
            b[c.n0 - 1, 0] = acb(0, -2) * k
            return A.solve(b), k

        c_hi, k_hi = solve(hi)
        c_lo, k_lo = solve(lo)
        diff = (c_hi - c_lo) * (1 / (k_hi - k_lo))
        return np.array([complex(float(diff[i, 0].real.mid()), float(diff[i, 0].imag.mid())) for i in range(N)])
    finally:
        ctx.prec = old
