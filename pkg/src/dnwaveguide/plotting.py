"""SVG figures for scans and decay studies.

Output is byte-for-byte reproducible: the SVG id salt is fixed and the date
stamp is dropped.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .observables import ScanTable  # noqa: E402

_RC = {"svg.hashsalt": "dnwaveguide", "svg.fonttype": "none", "path.simplify": False}


def _render(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return buf.getvalue()


def scan_svg(table: ScanTable, thresholds=()) -> str:
    """Reflection (dashed) and transmission (solid) probabilities per channel.

    ``thresholds`` are absolute momenta; they are drawn as thin vertical lines.
    """
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 4.5))
        k = table.k_values()
        unit = np.pi / (2 * table.d)
        for m in range(1, table.max_channels + 1):
            color = f"C{(m - 1) % 10}"
            pr = table.column("PR", m)
            pt = table.column("PT", m)
            open_ = np.array([m <= r.n1 for r in table.good_rows])
            ax.plot(np.where(open_, k, np.nan), np.where(open_, pr, np.nan), "--", color=color, label=f"R{m}")
            ax.plot(np.where(open_, k, np.nan), np.where(open_, pt, np.nan), "-", color=color, label=f"T{m}")
        for th in thresholds:
            ax.axvline(th / unit, color="0.7", lw=0.6)
        ax.set_xlabel(r"$k$ (units of $\pi/2d$)")
        ax.set_ylabel("probability")
        ax.set_ylim(-0.02, 1.02)
        ax.set_title(f"incident mode n0={table.n0}")
        ax.legend(ncol=2, fontsize=8)
        return _render(fig)


def decay_svg(samples, fit=None, label: str = "") -> str:
    """Log-log plot of distance against |t| (time in units of (pi/2d)^-2)."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 4))
        t = np.array([abs(s[0]) for s in samples])
        dist = np.array([s[1] for s in samples])
        ax.loglog(t, dist, "o-", label=label or "distance")
        if fit is not None:
            ax.loglog(t, np.exp(fit.intercept) * t**fit.slope, ":", label=f"slope {fit.slope:.3f}")
        ax.set_xlabel(r"$|t|$ (units of $(\pi/2d)^{-2}$)")
        ax.set_ylabel(r"$\|\psi(t) - \psi^\pm(t)\|$")
        ax.legend(fontsize=8)
        return _render(fig)
