"""Self-checks of the solver against independent oracles and structural bounds.

Each check returns a :class:`CheckResult`; :func:`run_all` collects them for
the ``validate`` subcommand.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy import linalg

from .dispersion import ScatteringConfig, energy, is_near_threshold
from .matcher import (
    assemble,
    d2_check,
    dphi_dk,
    estimate_basis_angle,
    half_gram,
    operator_norm,
    solve_d2_variational,
    solve_matching,
    solve_matching_split,
)
from .modes import Geometry, overlap, overlap_quadrature


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def random_configs(count: int, seed: int, *, n0_choices=(1, 2), k_range=(0.1, 5.0), d: float = 1.0) -> list[ScatteringConfig]:
    """Off-threshold configs with ``k`` uniform in ``k_range`` (units pi/2d)."""
    rng = np.random.default_rng(seed)
    geom = Geometry(d)
    out = []
    while len(out) < count:
        n0 = int(rng.choice(n0_choices))
        k = float(rng.uniform(*k_range)) * geom.k_unit
        if is_near_threshold(k, n0, geom, 1e-3 * geom.k_unit):
            continue
        out.append(ScatteringConfig(geom, n0, k))
    return out


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        res = fn(*args, **kwargs)
        res.seconds = time.perf_counter() - t0
        return res

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_timed
def check_overlap(nmax: int = 50, tol: float = 1e-10, overlap_fn: Callable[[int, int], float] = overlap) -> CheckResult:
    """Closed-form overlaps against adaptive quadrature for ``1 <= n, m <= nmax``."""
    worst, where = 0.0, (0, 0)
    for n in range(1, nmax + 1):
        for m in range(1, nmax + 1):
            err = abs(overlap_fn(n, m) - overlap_quadrature(n, m, tol=1e-12))
            if err > worst:
                worst, where = err, (n, m)
    return CheckResult("overlap_quadrature", worst < tol, worst, tol, f"worst at (n, m) = {where}")


@_timed
def check_split_agreement(configs, N: int = 200, tol: float = 1e-8) -> CheckResult:
    """Direct LU versus the open/evanescent split solver."""
    worst = 0.0
    for cfg in configs:
        a = solve_matching(cfg, N).c
        b = solve_matching_split(cfg, N).c
        worst = max(worst, float(np.linalg.norm(a - b) / np.linalg.norm(a)))
    return CheckResult("split_vs_direct", worst < tol, worst, tol, f"{len(configs)} configs, N={N}")


@_timed
def check_operator_norm(configs, N: int = 200, slack: float = 1e-9) -> CheckResult:
    """Weighted operator norm against ``2 sqrt(E)``; value is the worst excess."""
    worst = -math.inf
    for cfg in configs:
        excess = operator_norm(assemble(cfg, N)) - 2.0 * math.sqrt(energy(cfg))
        worst = max(worst, excess)
    return CheckResult("operator_norm_bound", worst <= slack, worst, slack, "max(||A|| - 2 sqrt(E))")


@_timed
def check_d2(cfg: ScatteringConfig, N: int = 100, *, sym_tol: float = 1e-10, var_tol: float = 1e-6) -> CheckResult:
    """Positivity, inverse symmetry and the variational solve of the evanescent block."""
    rep = d2_check(cfg, N)
    B = assemble(cfg, N).d2_matrix()
    psi = np.zeros(N, dtype=complex)
    psi[: min(N, 5)] = 1.0
    direct = linalg.solve(B, psi)
    var = solve_d2_variational(psi, cfg, N, "cg", tol=1e-12)
    agree = float(np.linalg.norm(var - direct) / np.linalg.norm(direct))
    ok = rep.min_eig > 0 and rep.sym_defect < sym_tol and agree < var_tol
    detail = f"min_eig={rep.min_eig:.4g} (bound {rep.lower_bound:.4g}), sym_defect={rep.sym_defect:.2e}, variational={agree:.2e}"
    return CheckResult("d2_block", ok, agree, var_tol, detail)


@_timed
def check_basis_angle(Ns=(1, 2, 5, 10, 20, 50)) -> CheckResult:
    """``eps_N`` in (0, 1) and ``eps_1 = 2/pi``."""
    anchor = abs(estimate_basis_angle(1).eps_N - 2.0 / math.pi)
    bad = [N for N in Ns if not estimate_basis_angle(N).in_unit_interval]
    ok = anchor < 1e-12 and not bad
    return CheckResult("basis_angle", ok, anchor, 1e-12, f"N checked {list(Ns)}; outside (0,1): {bad}")


def dphi_errors(cfg: ScatteringConfig, N: int, hs, *, bits: int | None = None) -> list[float]:
    """Relative ``H^{1/2}`` error of the central difference for each step in ``hs``.

    ``bits`` switches the difference quotient to ball arithmetic.
    """
    exact = dphi_dk(cfg, N, "formula")
    G = half_gram(assemble(cfg, N).O)

    def hnorm(v):
        return math.sqrt(max(float(np.real(np.vdot(v, G @ v))), 0.0))

    return [hnorm(dphi_dk(cfg, N, "finite_difference", h=h, bits=bits) - exact) / hnorm(exact) for h in hs]


@_timed
def check_dphi(cfg: ScatteringConfig, N: int = 100, tol: float = 1e-4) -> CheckResult:
    """Analytic ``dc/dk`` against a central difference at ``h = 1e-5``."""
    err = dphi_errors(cfg, N, [1e-5])[0]
    return CheckResult("dphi_dk", err < tol, err, tol, f"k={cfg.k_units:.4g} (units pi/2d), N={N}")


def run_all(*, seed: int = 0, count: int = 20, N: int = 200, overlap_fn=overlap) -> list[CheckResult]:
    configs = random_configs(count, seed)
    ref = ScatteringConfig.from_units(1.0, 1, 0.5)
    return [
        check_overlap(overlap_fn=overlap_fn),
        check_split_agreement(configs, N),
        check_operator_norm(configs, N),
        check_d2(ScatteringConfig.from_units(1.0, 1, 2.0), min(N, 100)),
        check_basis_angle(),
        check_dphi(ref, min(N, 100)),
    ]
