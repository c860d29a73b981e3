"""Channel probabilities, flux balance and momentum scans."""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dispersion import ChannelData, ScatteringConfig, channels, nearest_threshold, thresholds
from .errors import WaveguideError
from .matcher import TraceSolution, solve_matching

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChannelProbabilities:
    """Flux-normalised reflection/transmission into the open channels."""

    k: float
    PR: np.ndarray
    PT: np.ndarray
    flux_defect: float

    @property
    def n1(self) -> int:
        return self.PR.size


def probabilities(sol: TraceSolution, chan: ChannelData | None = None) -> ChannelProbabilities:
    """``PR_m = (k_m/k)|r_m|^2`` and ``PT_m = (k_m/k)|t_m|^2`` over open channels."""
    if chan is None:
        chan = channels(sol.cfg, max(sol.N, 1))
    n1 = chan.n1
    k = sol.cfg.k
    weight = chan.k_prop[:n1] / k
    PR = weight * np.abs(sol.r[:n1]) ** 2
    PT = weight * np.abs(sol.t[:n1]) ** 2
    defect = abs(float(PR.sum() + PT.sum()) - 1.0)
    return ChannelProbabilities(k=k, PR=PR, PT=PT, flux_defect=defect)


@dataclass
class ScanRow:
    k: float
    n1: int
    PR: np.ndarray
    PT: np.ndarray
    flux_defect: float
    cond: float
    near_threshold: bool = False
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class ScanTable:
    """Rows of a momentum scan, ordered by ``k`` (absolute units)."""

    n0: int
    d: float
    N: int
    rows: list[ScanRow] = field(default_factory=list)
    skipped: list[float] = field(default_factory=list)

    @property
    def good_rows(self) -> list[ScanRow]:
        return [r for r in self.rows if r.ok]

    @property
    def max_channels(self) -> int:
        return max((r.n1 for r in self.good_rows), default=0)

    def k_values(self, units: str = "half-pi-over-d") -> np.ndarray:
        scale = (math.pi / (2 * self.d)) if units == "half-pi-over-d" else 1.0
        return np.array([r.k for r in self.good_rows]) / scale

    def column(self, kind: str, m: int) -> np.ndarray:
        """``PR``/``PT`` for channel ``m`` along the scan; zero where closed."""
        out = []
        for r in self.good_rows:
            vals = r.PR if kind == "PR" else r.PT
            out.append(vals[m - 1] if m <= r.n1 else 0.0)
        return np.array(out)

    def to_csv(self, units: str = "half-pi-over-d") -> str:
        """Header ``k,n1,PR1..PRm,PT1..PTm,flux_defect,cond``; closed channels empty."""
        m = self.max_channels
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "n1"] + [f"PR{i}" for i in range(1, m + 1)] + [f"PT{i}" for i in range(1, m + 1)] + ["flux_defect", "cond"])
        scale = (math.pi / (2 * self.d)) if units == "half-pi-over-d" else 1.0
        for r in self.good_rows:
            pr = [repr(float(v)) for v in r.PR] + [""] * (m - r.n1)
            pt = [repr(float(v)) for v in r.PT] + [""] * (m - r.n1)
            w.writerow([repr(r.k / scale), r.n1] + pr + pt + [repr(r.flux_defect), repr(r.cond)])
        return buf.getvalue()


def read_scan_csv(text: str) -> list[dict]:
    """Parse a scan CSV back into dicts of floats (``None`` for empty cells)."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        rows.append({key: (None if val == "" else (int(val) if key == "n1" else float(val))) for key, val in rec.items()})
    return rows


def _solve_row(cfg: ScatteringConfig, N: int, near: bool) -> ScanRow:
    try:
        sol = solve_matching(cfg, N, Nt=N, margin=0.0)
        p = probabilities(sol)
        return ScanRow(k=cfg.k, n1=p.n1, PR=p.PR, PT=p.PT, flux_defect=p.flux_defect, cond=sol.cond, near_threshold=near)
    except (WaveguideError, ValueError, np.linalg.LinAlgError) as exc:
        log.warning("scan row k=%.12g failed: %s", cfg.k, exc)
        return ScanRow(k=cfg.k, n1=0, PR=np.zeros(0), PT=np.zeros(0), flux_defect=math.nan, cond=math.nan, error=str(exc))


def scan(
    cfg_template: ScatteringConfig,
    k_min: float,
    k_max: float,
    steps: int,
    N: int,
    *,
    skip_margin: float | None = None,
    jobs: int = 1,
) -> ScanTable:
    """Solve on a uniform grid of ``steps`` momenta in ``[k_min, k_max]`` (absolute units).

    Grid points closer than ``skip_margin`` to a threshold are dropped
    (default half a step); rows within one step of a threshold are flagged.
    Failed rows are kept with their error message.
    """
    if not (0 < k_min < k_max):
        raise ValueError(f"need 0 < k_min < k_max, got [{k_min}, {k_max}]")
    if steps < 2:
        raise ValueError("steps must be at least 2")
    h = (k_max - k_min) / (steps - 1)
    margin = 0.5 * h if skip_margin is None else skip_margin
    geom, n0 = cfg_template.geom, cfg_template.n0
    table = ScanTable(n0=n0, d=geom.d, N=N)
    work = []
    for k in np.linspace(k_min, k_max, steps):
        dist = abs(nearest_threshold(k, n0, geom) - k)
        if dist < margin:
            table.skipped.append(float(k))
            continue
        work.append((ScatteringConfig(geom, n0, float(k)), dist < h))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(lambda w: _solve_row(w[0], N, w[1]), work))
    else:
        rows = [_solve_row(c, N, near) for c, near in work]
    table.rows = rows
    return table


def threshold_list(n0: int, d: float, k_max: float) -> list[float]:
    """Thresholds (absolute momentum) below ``k_max``."""
    from .modes import Geometry

    geom = Geometry(d)
    n_hi = n0 + 1
    while True:
        ths = thresholds(n0, geom, n_hi)
        if ths[-1] > k_max:
            return [t for t in ths if t <= k_max]
        n_hi += 1
