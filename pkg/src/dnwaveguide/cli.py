"""Command-line front end.

Exit codes: 0 success, 1 a validation check failed, 2 invalid input,
3 solver failure.  Relative output paths are resolved against
``$DNWAVEGUIDE_OUTDIR`` (default: the working directory).
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .dispersion import THRESHOLD_MARGIN, ScatteringConfig, check_off_threshold, n1_of, thresholds
from .errors import (
    GridTooSmall,
    NonConvergence,
    QuadratureUnderResolved,
    SolveFailed,
    ThresholdDegenerate,
    WindowViolation,
)
from .matcher import solve_matching
from .modes import Geometry, mu_array, overlap
from .observables import probabilities, scan, threshold_list

log = logging.getLogger("dnwaveguide")

OUTDIR_ENV = "DNWAVEGUIDE_OUTDIR"
EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3


class InputError(Exception):
    """Bad command-line parameter; maps to exit code 2."""


def _out_path(name: str | None) -> Path | None:
    if not name:
        return None
    p = Path(name)
    if not p.is_absolute():
        p = Path(os.environ.get(OUTDIR_ENV, ".")) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _k_abs(value: float, geom: Geometry, units: str) -> float:
    return value * geom.k_unit if units == "half-pi-over-d" else value


def _t_abs(value: float, geom: Geometry, units: str) -> float:
    return value * geom.t_unit if units == "half-pi-over-d" else value


def parse_times(text: str) -> list[float]:
    """``"10,20,40,80"`` -> ``[10.0, 20.0, 40.0, 80.0]``."""
    try:
        vals = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"--times expects comma-separated numbers, got {text!r}") from exc
    if not vals:
        raise argparse.ArgumentTypeError("--times is empty")
    return vals


def _geometry(args) -> Geometry:
    if not (args.d > 0 and math.isfinite(args.d)):
        raise InputError(f"--d must be positive, got {args.d}")
    if args.n0 < 1:
        raise InputError(f"--n0 must be a positive integer, got {args.n0}")
    return Geometry(args.d)


# ---------------------------------------------------------------------------
# subcommands


def cmd_solve(args) -> int:
    geom = _geometry(args)
    k = _k_abs(args.k, geom, args.units)
    if not k > 0:
        raise InputError(f"--k must be positive, got {args.k}")
    cfg = ScatteringConfig(geom, args.n0, k)
    try:
        check_off_threshold(cfg, args.margin)
    except ThresholdDegenerate as exc:
        raise InputError(f"--k: {exc} (threshold = {exc.threshold / geom.k_unit:.12g} in units of pi/2d)") from exc
    n1 = n1_of(cfg)
    if args.N <= n1:
        raise InputError(f"--N={args.N} must exceed the number of open channels n1={n1}")
    Nt = args.Nt if args.Nt is not None else 2 * args.N
    if Nt < args.N:
        raise InputError(f"--Nt={Nt} must be at least --N={args.N}")
    sol = solve_matching(cfg, args.N, Nt=Nt, margin=0.0)
    p = probabilities(sol)
    print(f"k = {cfg.k_units:.10g} (pi/2d) = {cfg.k:.10g}, n0 = {cfg.n0}, n1 = {n1}, N = {args.N}")
    for m in range(1, n1 + 1):
        print(f"  channel {m}: PR = {p.PR[m - 1]:.12f}  PT = {p.PT[m - 1]:.12f}")
    print(f"flux_defect = {p.flux_defect:.3e}  cond = {sol.cond:.3e}")
    print(f"residual_cont = {sol.residual_cont:.3e}  residual_deriv = {sol.residual_deriv:.3e}")
    out = _out_path(args.out)
    if out:
        data = sol.to_dict()
        data["flux_defect"] = p.flux_defect
        data["PR"] = p.PR.tolist()
        data["PT"] = p.PT.tolist()
        out.write_text(json.dumps(data, indent=1))
        print(f"wrote {out}")
    return EXIT_OK


def cmd_scan(args) -> int:
    geom = _geometry(args)
    k_min = _k_abs(args.k_min, geom, args.units)
    k_max = _k_abs(args.k_max, geom, args.units)
    if not (0 < k_min < k_max):
        raise InputError(f"empty or invalid range [{args.k_min}, {args.k_max}]")
    if args.steps < 2:
        raise InputError("--steps must be at least 2")
    cfg = ScatteringConfig(geom, args.n0, k_min)
    table = scan(cfg, k_min, k_max, args.steps, args.N, jobs=args.jobs)
    good = table.good_rows
    if not good:
        log.error("every scan row failed")
        return EXIT_SOLVER
    text = table.to_csv(units=args.units)
    out = _out_path(args.out)
    if out:
        out.write_text(text)
        print(f"wrote {out} ({len(good)} rows, {len(table.skipped)} skipped near thresholds)")
    else:
        sys.stdout.write(text)
    svg = _out_path(args.svg)
    if svg:
        svg.write_text(plotting.scan_svg(table, threshold_list(args.n0, args.d, k_max)))
        print(f"wrote {svg}")
    failed = len(table.rows) - len(good)
    if failed:
        log.warning("%d rows failed", failed)
    return EXIT_OK


def cmd_wavepacket(args) -> int:
    from .wavepacket import (
        Envelope,
        GridSpec,
        QuadSpec,
        convergence_distance,
        decay_fit,
        packet,
        validate_window,
    )

    geom = _geometry(args)
    env = Envelope(_k_abs(args.alpha, geom, args.units), _k_abs(args.beta, geom, args.units), args.shape)
    cfg = ScatteringConfig(geom, args.n0, 0.5 * (env.alpha + env.beta))
    validate_window(env, cfg)
    quad = QuadSpec(args.nodes)
    times = args.times
    if any(t <= 0 for t in times):
        raise InputError("--times must be positive; use --sign for the incoming branch")
    signs = {"both": (1, -1), "+": (1,), "-": (-1,)}[args.sign]
    lines = ["t,distance"]
    fits = {}
    for sgn in signs:
        samples = []
        for t in times:
            ta = _t_abs(sgn * t, geom, args.units)
            dist = convergence_distance(cfg, env, ta, quad=quad, N=args.N, check_tol=args.check_tol)
            samples.append((sgn * t, dist))
            lines.append(f"{sgn * t!r},{dist!r}")
        if len(samples) >= 4:
            fits[sgn] = decay_fit(samples)
    wp = packet(cfg, env, quad, args.N)
    norms = [wp.norm(_t_abs(s * t, geom, args.units)) for s in signs for t in times]
    text = "\n".join(lines) + "\n"
    out = _out_path(args.out)
    if out:
        out.write_text(text)
        print(f"wrote {out}")
    else:
        sys.stdout.write(text)
    for sgn, fit in fits.items():
        branch = "t -> +inf" if sgn > 0 else "t -> -inf"
        print(f"{branch}: slope = {fit.slope:.4f}  r2 = {fit.r2:.4f}")
    print(f"max |norm - 1| = {max(abs(v - 1) for v in norms):.3e}")
    svg = _out_path(args.svg)
    if svg:
        samples = [(float(a), float(b)) for a, b in (ln.split(",") for ln in lines[1:])]
        pos = [s for s in samples if s[0] > 0]
        svg.write_text(plotting.decay_svg(pos or samples, fits.get(1) or fits.get(-1)))
        print(f"wrote {svg}")
    if args.snapshot is not None:
        snap = wp.snapshot(_t_abs(args.snapshot, geom, args.units), GridSpec(args.snapshot_extent, geom.d / 8, geom.d / 16))
        path = _out_path(args.snapshot_out)
        path.write_text(json.dumps(snap.to_dict()) if path.suffix == ".json" else snap.to_csv())
        print(f"wrote {path}")
    return EXIT_OK


def cmd_validate(args) -> int:
    from .validation import run_all

    results = run_all(seed=args.seed, count=args.count, N=args.N)
    if args.json:
        print(json.dumps([r.to_dict() for r in results], indent=1))
    else:
        print(f"{'check':<22}{'result':<8}{'value':>12}{'limit':>12}  detail")
        for r in results:
            print(f"{r.name:<22}{'PASS' if r.passed else 'FAIL':<8}{r.value:>12.3e}{r.limit:>12.1e}  {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


def cmd_modes(args) -> int:
    geom = _geometry(args)
    mus = mu_array(args.N, geom)
    ths = [math.nan] * args.n0 + thresholds(args.n0, geom, args.N) if args.N > args.n0 else [math.nan] * args.N
    unit = 1.0 if args.units == "absolute" else geom.k_unit
    print("n,mu_n,threshold_k,overlap_n0_n")
    for n in range(1, args.N + 1):
        th = ths[n - 1]
        th_s = "" if math.isnan(th) else repr(th / unit)
        print(f"{n},{float(mus[n - 1])!r},{th_s},{overlap(args.n0, n)!r}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnwaveguide", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--d", type=float, default=1.0, help="strip width (default 1)")
        p.add_argument("--n0", type=int, default=1, help="incident transversal mode (default 1)")
        p.add_argument(
            "--units",
            choices=("absolute", "half-pi-over-d"),
            default="half-pi-over-d",
            help="momenta in pi/2d and times in (pi/2d)^-2 (default), or absolute",
        )

    p = sub.add_parser("solve", help="solve one configuration")
    common(p)
    p.add_argument("--k", type=float, required=True)
    p.add_argument("--N", type=int, default=200, help="trace truncation (default 200)")
    p.add_argument("--Nt", type=int, default=None, help="transmission truncation (default 2N)")
    p.add_argument("--margin", type=float, default=THRESHOLD_MARGIN, help="threshold refusal margin in pi/2d")
    p.add_argument("--out", help="solution JSON")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("scan", help="probabilities over a momentum range")
    common(p)
    p.add_argument("--k-min", type=float, default=0.05)
    p.add_argument("--k-max", type=float, default=5.0)
    p.add_argument("--steps", type=int, default=200)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--jobs", type=int, default=1, help="worker threads")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--svg", help="SVG plot path")
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("wavepacket", help="decay of a packet towards its free asymptotes")
    common(p)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--shape", choices=("bump", "spline"), default="bump")
    p.add_argument("--times", type=parse_times, default=parse_times("10,20,40,80"))
    p.add_argument("--sign", choices=("both", "+", "-"), default="both")
    p.add_argument("--nodes", type=int, default=256, help="Gauss-Legendre nodes in k (default 256)")
    p.add_argument("--check-tol", type=float, default=1e-6, help="relative change allowed when nodes double")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--out", help="decay CSV path (default stdout)")
    p.add_argument("--svg")
    p.add_argument("--snapshot", type=float, default=None, help="also dump the field at this time")
    p.add_argument("--snapshot-extent", type=float, default=20.0)
    p.add_argument("--snapshot-out", default="snapshot.csv", help=".csv or .json")
    p.set_defaults(func=cmd_wavepacket)

    p = sub.add_parser("validate", help="run the self-check suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--N", type=int, default=200)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("modes", help="list eigenvalues, thresholds and overlaps")
    common(p)
    p.add_argument("--N", type=int, default=10)
    p.set_defaults(func=cmd_modes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, ThresholdDegenerate, WindowViolation, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolveFailed, NonConvergence, GridTooSmall, QuadratureUnderResolved, np.linalg.LinAlgError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
