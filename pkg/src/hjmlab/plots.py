"""Report figures rendered to files next to the CSV/JSON output.

Each command gets one or two summary figures: curve fans for simulations,
residual heatmaps for drift verification, z-score panels for martingale
tests, gap-vs-step-size lines for the realization check, and the bond
term structures for the closed-form oracle.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_fig",
    "plot_curve_fan",
    "plot_drift_residuals",
    "plot_zscores",
    "plot_monotonicity",
    "plot_realization_gap",
    "plot_mmm_term_structure",
]

_META = {"Software": "hjmlab"}


def save_fig(fig, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=130, bbox_inches="tight", metadata=_META)
    plt.close(fig)
    return path


def plot_curve_fan(ens, path: Path, index: int = 0) -> Path:
    """Short-end quantile fan over time plus terminal curve snapshots."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    z = ens.short_ends[:, :, index]
    qs = np.percentile(z, [5, 25, 50, 75, 95], axis=0)
    t = ens.obs_times
    axes[0].fill_between(t, qs[0], qs[4], alpha=0.25, label="5-95%")
    axes[0].fill_between(t, qs[1], qs[3], alpha=0.35, label="25-75%")
    axes[0].plot(t, qs[2], lw=1.5, label="median")
    axes[0].set_xlabel("t")
    axes[0].set_ylabel(f"short end, curve {index}")
    axes[0].legend(frameon=False, fontsize=8)
    if ens.curve_values is not None:
        xi = ens.grid.dt * np.arange(ens.curve_values.shape[-1])
        for p in range(min(ens.n_paths, 12)):
            axes[1].plot(xi, ens.curve_values[p, -1, index], lw=0.7, alpha=0.7)
        axes[1].set_xlabel("time to maturity")
        axes[1].set_ylabel("forward rate")
        axes[1].set_title(f"curves at t={ens.obs_times[-1]:g}", fontsize=9)
    else:
        axes[1].hist(z[:, -1], bins=40, density=True)
        axes[1].set_xlabel(f"short end at t={ens.obs_times[-1]:g}")
    fig.tight_layout()
    return save_fig(fig, path)


def plot_drift_residuals(t_vals, mat_vals, residuals, path: Path) -> Path:
    """Heatmap of |integrated drift residual| over the (t, T) grid."""
    fig, ax = plt.subplots(figsize=(5.6, 4.2))
    r = np.abs(residuals)
    im = ax.pcolormesh(
        mat_vals, t_vals, np.log10(np.maximum(r, 1e-300)), shading="nearest"
    )
    fig.colorbar(im, ax=ax, label="log10 |residual|")
    ax.set_xlabel("maturity T")
    ax.set_ylabel("t")
    return save_fig(fig, path)


def plot_zscores(report: dict, path: Path, threshold: float = 3.0) -> Path:
    """Martingale z-scores against time, one line per (index, maturity)."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    series = {}
    for cell in report["cells"]:
        series.setdefault((cell["index"], cell["maturity"]), []).append(
            (cell["t"], cell["zscore"])
        )
    for (i, t_mat), pts in sorted(series.items()):
        pts = sorted(pts)
        ax.plot(
            [p[0] for p in pts],
            [p[1] for p in pts],
            marker="o",
            ms=3,
            lw=1,
            label=f"i={i}, T={t_mat:g}",
        )
    ax.axhline(threshold, color="k", ls="--", lw=0.8)
    ax.axhline(-threshold, color="k", ls="--", lw=0.8)
    ax.set_xlabel("t")
    ax.set_ylabel("z-score")
    ax.legend(frameon=False, fontsize=7, ncol=2)
    return save_fig(fig, path)


def plot_monotonicity(ens, spec, path: Path) -> Path:
    """Initial family plus violation counters from the tracked run."""
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    fam = spec.initial.family(ens.grid.dt, ens.grid.n_nodes)
    xi = fam[0].grid()
    for i, c in enumerate(fam.curves):
        axes[0].plot(xi, c.values(), label=f"curve {i}")
    axes[0].set_xlabel("time to maturity")
    axes[0].set_ylabel("initial forward rate")
    axes[0].legend(frameon=False, fontsize=8)
    d = ens.diagnostics
    axes[1].bar(
        ["cone", "price order"],
        [d.get("cone_violations", 0), d.get("order_violations", 0)],
    )
    axes[1].set_ylabel("violations")
    axes[1].set_title(
        f"{ens.n_paths} paths; worst cone gap {d.get('worst_cone_gap', 0):.2e}",
        fontsize=9,
    )
    fig.tight_layout()
    return save_fig(fig, path)


def plot_realization_gap(dts, gaps, path: Path) -> Path:
    """Log-log gap vs step size with a first-order reference slope."""
    fig, ax = plt.subplots(figsize=(5.2, 4))
    ax.loglog(dts, gaps, marker="o", label="measured gap")
    ref = gaps[-1] * np.asarray(dts) / dts[-1]
    ax.loglog(dts, ref, ls="--", lw=0.8, label="slope 1")
    ax.set_xlabel("dt")
    ax.set_ylabel("max curve gap")
    ax.legend(frameon=False, fontsize=8)
    return save_fig(fig, path)


def plot_mmm_term_structure(p, maturities, bonds, discounts, mc_point, path: Path):
    """Closed-form bonds vs pure discount, with the MC estimate marked."""
    fig, ax = plt.subplots(figsize=(5.6, 4))
    ax.plot(maturities, discounts, label="pure discount", lw=1.2)
    ax.plot(maturities, bonds, label="bond price (oracle)", lw=1.2)
    if mc_point is not None:
        ax.plot([mc_point[0]], [mc_point[1]], "x", ms=8, label="MC estimate")
    ax.set_xlabel("maturity")
    ax.set_ylabel("price")
    ax.legend(frameon=False, fontsize=8)
    return save_fig(fig, path)
