"""Render the figure suite from a CSV bundle.

Pure renderer: every number on every axis comes straight out of the
bundle.  Nothing here propagates, scores, or validates.
"""

from __future__ import annotations

import math
import warnings
from importlib import resources
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .bundle import Bundle, load_bundle  # noqa: E402

__all__ = ["plot_all"]

_STYLED = False


def _apply_style():
    global _STYLED
    if _STYLED:
        return
    ref = resources.files("settlement_figures") / "settlement.mplstyle"
    with resources.as_file(ref) as path:
        plt.style.use(path)
    _STYLED = True


def _mark_sol(ax, x=0.0, y=8.0):
    ax.plot([x], [y], marker="*", markersize=14, color="crimson",
            markeredgecolor="black", markeredgewidth=0.6, linestyle="none",
            zorder=5, label="Sol")


def _sol_xy(table):
    """Sol's coordinates from a map table (star_id == 0)."""
    idx = np.flatnonzero(table["star_id"] == 0)
    if idx.size:
        i = idx[0]
        return float(table["x_kpc"][i]), float(table["y_kpc"][i])
    return 0.0, 8.0


def fig_star_distribution(bundle: Bundle, out_dir: Path) -> Path:
    t = bundle["star_positions.csv"]
    fig, ax = plt.subplots(figsize=(6.0, 6.0))
    ax.scatter(t["x_kpc"], t["y_kpc"], s=2.0, color="#35507a", alpha=0.45,
               linewidths=0)
    _mark_sol(ax, *_sol_xy(t))
    ax.set_xlabel("x [kpc]")
    ax.set_ylabel("y [kpc]")
    ax.set_title(f"Star distribution ({len(t)} stars)")
    ax.set_aspect("equal")
    ax.legend(loc="upper right")
    path = out_dir / "fig1_star_distribution.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def fig_speed_vs_radius(bundle: Bundle, out_dir: Path) -> Path:
    t = bundle["speed_vs_r.csv"]
    mid = 0.5 * (t["r_lo_kpc"] + t["r_hi_kpc"])
    keep = t["n_stars"] > 0
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.step(mid[keep], t["v_mean_kms"][keep], where="mid", color="#35507a")
    ax.scatter(mid[keep], t["v_mean_kms"][keep], s=14, color="#35507a")
    ax.set_xlabel("galactocentric radius [kpc]")
    ax.set_ylabel("mean orbital speed [km/s]")
    ax.set_title("Star speed versus radius")
    path = out_dir / "fig2_speed_vs_radius.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def fig_merit_curve(bundle: Bundle, out_dir: Path) -> Path:
    t = bundle["merit_curve.csv"]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.plot(t["n_settled"], t["merit"], color="#8a3324", marker="o",
            markersize=3.2)
    k = int(np.argmax(t["merit"]))
    ax.axvline(t["n_settled"][k], color="grey", linestyle=":", linewidth=1.0)
    ax.annotate(f"peak J = {t['merit'][k]:.1f}\nat N = {int(t['n_settled'][k])}",
                xy=(t["n_settled"][k], t["merit"][k]),
                xytext=(8, -4), textcoords="offset points", fontsize=8)
    ax.set_xscale("log")
    ax.set_xlabel("number of closest stars settled")
    ax.set_ylabel("merit J")
    ax.set_title("Merit versus settled-count")
    path = out_dir / "fig3_merit_curve.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def fig_settlement_by_generation(bundle: Bundle, out_dir: Path) -> Path:
    snaps = bundle.snapshots
    ncols = min(4, len(snaps))
    nrows = math.ceil(len(snaps) / ncols)
    fig, axes = plt.subplots(nrows, ncols,
                             figsize=(3.0 * ncols, 3.0 * nrows),
                             squeeze=False)
    # shared limits so growth is visible panel to panel
    all_x = np.concatenate([s["x_kpc"] for s in snaps])
    all_y = np.concatenate([s["y_kpc"] for s in snaps])
    pad = 1.0
    xlim = (all_x.min() - pad, all_x.max() + pad)
    ylim = (all_y.min() - pad, all_y.max() + pad)
    gmax = max(1.0, max(float(s["generation"].max()) for s in snaps))
    for ax in axes.ravel():
        ax.set_axis_off()
    for k, snap in enumerate(snaps):
        ax = axes.ravel()[k]
        ax.set_axis_on()
        ax.scatter(snap["x_kpc"], snap["y_kpc"], c=snap["generation"],
                   cmap="viridis", vmin=0, vmax=gmax, s=9, linewidths=0)
        _mark_sol(ax, *_sol_xy(snap))
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        ax.set_aspect("equal")
        ax.set_xticks([])
        ax.set_yticks([])
        epoch = float(snap["epoch_myr"][0]) if len(snap) else 0.0
        ax.set_title(f"gen ≤ {k + 1}  ·  t = {epoch:.1f} Myr  ·  "
                     f"{len(snap)} pts", fontsize=8)
    fig.suptitle("Settlement growth by generation")
    path = out_dir / "fig8_settlement_by_generation.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def fig_final_map(bundle: Bundle, out_dir: Path) -> Path:
    t = bundle["final_map.csv"]
    gmax = max(1.0, float(t["generation"].max()))
    fig, ax = plt.subplots(figsize=(6.5, 6.0))
    sc = ax.scatter(t["x_kpc"], t["y_kpc"], c=t["generation"], cmap="viridis",
                    vmin=0, vmax=gmax, s=16, linewidths=0)
    _mark_sol(ax, *_sol_xy(t))
    fig.colorbar(sc, ax=ax, label="generation")
    ax.set_xlabel("x [kpc]")
    ax.set_ylabel("y [kpc]")
    ngen = int(gmax)
    ax.set_title(f"{ngen} generations of settlement ({len(t)} stars)")
    ax.set_aspect("equal")
    ax.legend(loc="upper right")
    path = out_dir / "fig9_final_map.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def fig_cumulative_settled(bundle: Bundle, out_dir: Path) -> Path:
    t = bundle["cumulative_by_generation.csv"]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    ax.bar(t["generation"], t["new_settlements"], color="#9db4d4",
           label="new settlements")
    ax.plot(t["generation"], t["cumulative"], color="#8a3324", marker="o",
            markersize=4, label="cumulative")
    ax.set_xlabel("generation")
    ax.set_ylabel("settled stars")
    ax.set_title("Cumulative stars settled versus generation")
    ax.legend(loc="upper left")
    path = out_dir / "fig10_cumulative_settled.png"
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_all(in_dir, out_dir) -> list:
    """Render every figure the bundle supports; return written paths.

    The four mandatory tables always yield figures 1, 2, 3 and 10.
    The generation maps (figures 8 and 9) need the snapshot directory
    and the final map; when those are absent they are skipped with a
    warning rather than failing the whole run.
    """
    _apply_style()
    bundle = in_dir if isinstance(in_dir, Bundle) else load_bundle(in_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [
        fig_star_distribution(bundle, out_dir),
        fig_speed_vs_radius(bundle, out_dir),
        fig_merit_curve(bundle, out_dir),
    ]
    if bundle.has_generation_maps:
        written.append(fig_settlement_by_generation(bundle, out_dir))
        written.append(fig_final_map(bundle, out_dir))
    else:
        warnings.warn("bundle has no generation snapshots; skipping the "
                      "generation-map figures", stacklevel=2)
    written.append(fig_cumulative_settled(bundle, out_dir))
    return written
