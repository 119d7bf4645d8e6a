"""SVG figures for sweeps, snapshot profiles and front tracks.

Uses the non-interactive Agg backend. SVG ids are salted with a constant and
the date stamp is dropped, so the same data always gives the same bytes.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REGIME_COLORS = {
    "no-epidemic": "0.6",
    "only-1": "tab:blue",
    "gap": "tab:red",
    "2-then-1": "tab:purple",
    "only-2": "tab:orange",
}

STYLE = {
    "svg.hashsalt": "multisir",
    "svg.fonttype": "none",
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.4,
}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def regime_boundaries(s0: Sequence[float], regimes: Sequence[str]) -> list:
    """Midpoints between consecutive points whose labels differ."""
    return [0.5 * (s0[i] + s0[i + 1]) for i in range(len(s0) - 1) if regimes[i] != regimes[i + 1]]


def plot_sweep(s0, s_inf, regimes, path, measured=None, title: Optional[str] = None) -> Path:
    """``S_inf`` against ``S0`` with dashed regime boundaries and the gap band shaded.

    Args:
        s0, s_inf: analytic curve, sorted by ``s0``.
        regimes: one label per point.
        measured: optional simulated values (``None``/NaN where absent).
    """
    s0 = np.asarray(s0, dtype=float)
    s_inf = np.asarray(s_inf, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        gap = np.array([r == "gap" for r in regimes])
        if gap.any():
            idx = np.flatnonzero(gap)
            # shade each contiguous run of gap points
            runs = np.split(idx, np.flatnonzero(np.diff(idx) > 1) + 1)
            for j, run in enumerate(runs):
                lo = s0[max(run[0] - 1, 0)] if run[0] > 0 else s0[run[0]]
                hi = s0[min(run[-1] + 1, len(s0) - 1)]
                ax.axvspan(lo, hi, color=REGIME_COLORS["gap"], alpha=0.15, lw=0,
                           label="gap (hypotheses fail)" if j == 0 else None)
        ax.plot(s0, s_inf, color="k", label=r"analytic $S_\infty$")
        ax.plot(s0, s0, color="0.7", lw=0.8, ls=":", label=r"$S_\infty = S_0$")
        for b in regime_boundaries(s0, regimes):
            ax.axvline(b, color="0.3", ls="--", lw=0.8)
        if measured is not None:
            m = np.array([np.nan if v is None else v for v in measured], dtype=float)
            ok = np.isfinite(m)
            if ok.any():
                ax.plot(s0[ok], m[ok], "o", ms=4, mfc="none", color="tab:green", label="simulated")
        for r in dict.fromkeys(regimes):
            sel = np.array([q == r for q in regimes])
            ax.text(float(np.median(s0[sel])), 0.97, r, ha="center", va="top", fontsize=7,
                    color=REGIME_COLORS.get(r, "k"), transform=ax.get_xaxis_transform())
        ax.set_xlabel(r"$S_0$")
        ax.set_ylabel(r"$S_\infty$")
        if title:
            ax.set_title(title)
        ax.legend(loc="center left", fontsize=8, frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def plot_profiles(x, S, I, R, t: float, path, xlim: Optional[tuple] = None) -> Path:
    """Susceptible, infected and recovered densities of one snapshot."""
    x = np.asarray(x)
    with plt.rc_context(STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(6.5, 5.0), sharex=True)
        top.plot(x, S, color="k", label="S")
        for k, r in enumerate(R, start=1):
            top.plot(x, r, label=f"R_{k}")
        top.set_ylabel("density")
        top.legend(fontsize=8, frameon=False, ncol=2)
        top.set_title(f"t = {t:.6g}")
        for k, i in enumerate(I, start=1):
            bottom.plot(x, i, label=f"I_{k}")
        bottom.set_ylabel("infected")
        bottom.set_xlabel("x")
        bottom.legend(fontsize=8, frameon=False)
        if xlim is not None:
            bottom.set_xlim(*xlim)
        fig.tight_layout()
        return _save(fig, path)


def plot_fronts(tracks, path) -> Path:
    """Front positions against time with the fitted lines over their windows."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        for tr in tracks:
            ok = np.isfinite(tr.positions)
            line, = ax.plot(tr.times[ok], tr.positions[ok], ".", ms=3, label=f"strain {tr.strain}")
            if tr.speed is not None and tr.window is not None:
                tt = np.linspace(tr.window[0], tr.window[1], 2)
                ax.plot(tt, tr.intercept + tr.speed * tt, color=line.get_color(), lw=1.0,
                        label=f"fit c = {tr.speed:.4g}")
        ax.set_xlabel("t")
        ax.set_ylabel("front position")
        ax.legend(fontsize=8, frameon=False)
        fig.tight_layout()
        return _save(fig, path)
