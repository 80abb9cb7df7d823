"""Matplotlib renderings written next to report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.collections import LineCollection

from . import verify


def render_run_figures(report, state=None, out_dir=None, stem="run") -> list[Path]:
    """Hop histogram and per-round traffic for one run; for planar scenarios
    also the overlay drawn over the leaf subareas (list edges blue, quad
    edges red)."""
    out_dir = Path(out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [_hop_histogram(report, out_dir / f"{stem}_hops.png"),
               _traffic(report, out_dir / f"{stem}_messages.png")]
    if state is not None and state.geometry.dim == 2:
        written.append(_overlay(state, out_dir / f"{stem}_overlay.png"))
    return written


def _hop_histogram(report, path: Path) -> Path:
    hist = {int(k): v for k, v in report.hop_histogram.items()}
    fig, ax = plt.subplots(figsize=(6, 4))
    if hist:
        hops = sorted(hist)
        ax.bar(hops, [hist[h] for h in hops], color="#3465a4")
        ax.set_xticks(hops)
    ax.set_xlabel("hops until termination")
    ax.set_ylabel("searches")
    ax.set_title("Search hop distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _traffic(report, path: Path) -> Path:
    per_round = report.messages_per_round
    kinds = sorted({k for counts in per_round for k in counts})
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(per_round))
    for kind in kinds:
        ax.plot(xs, [counts.get(kind, 0) for counts in per_round], label=kind)
    ax.set_xlabel("round")
    ax.set_ylabel("messages enqueued")
    ax.set_title("Traffic by message type")
    if kinds:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _overlay(state, path: Path) -> Path:
    coords = state.coords_sorted()
    tree = verify.global_tree(coords, state.geometry.convention)
    fig, ax = plt.subplots(figsize=(6, 6))
    for leaf in tree.leaves():
        (px, cx), (py, cy) = leaf.region.cells
        x0, w = px / 2 ** cx, 2.0 ** -cx
        y0, h = py / 2 ** cy, 2.0 ** -cy
        ax.add_patch(plt.Rectangle((x0, y0), w, h, fill=False,
                                   edgecolor="#cccccc", linewidth=0.8))

    def xy(c):
        vx, vy = c.values()
        return vx, vy

    list_segments, quad_segments = [], []
    for c in coords:
        ns = state.nodes[c]
        for other in (ns.left, ns.right):
            if other is not None:
                list_segments.append([xy(c), xy(other)])
        for q in ns.quad:
            quad_segments.append([xy(c), xy(q)])
    ax.add_collection(LineCollection(quad_segments, colors="red",
                                     linewidths=0.9, alpha=0.7, zorder=2))
    ax.add_collection(LineCollection(list_segments, colors="blue",
                                     linewidths=1.2, alpha=0.8, zorder=3))
    ax.scatter([xy(c)[0] for c in coords], [xy(c)[1] for c in coords],
               s=18, color="black", zorder=4)
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1)
    ax.set_aspect("equal")
    ax.set_title("Overlay: list edges blue, quad edges red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_sweep_figures(rows: list[dict], out_dir, stem="sweep") -> list[Path]:
    """Convergence rounds and hop maxima against system size."""
    out_dir = Path(out_dir or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    by_n: dict[int, list[dict]] = {}
    for row in rows:
        by_n.setdefault(row["n"], []).append(row)
    ns = sorted(by_n)

    fig, ax = plt.subplots(figsize=(6, 4))
    for n in ns:
        rounds = [r["converged_round"] for r in by_n[n]
                  if r["converged_round"] is not None]
        ax.scatter([n] * len(rounds), rounds, s=10, alpha=0.4, color="#3465a4")
    ax.set_xlabel("nodes")
    ax.set_ylabel("rounds to convergence")
    ax.set_title("Convergence time")
    fig.tight_layout()
    p = out_dir / f"{stem}_convergence.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)

    fig, ax = plt.subplots(figsize=(6, 4))
    for n in ns:
        hops = [r["max_hops"] for r in by_n[n]]
        ax.scatter([n] * len(hops), hops, s=10, alpha=0.4, color="#a40000")
    if ns:
        bound = [4 * max(n - 1, 0).bit_length() + 2 for n in ns]
        ax.plot(ns, bound, "--", color="gray", label="hop budget")
        ax.legend(fontsize=8)
    ax.set_xlabel("nodes")
    ax.set_ylabel("max hops observed")
    ax.set_title("Search hops")
    fig.tight_layout()
    p = out_dir / f"{stem}_hops.png"
    fig.savefig(p, dpi=120)
    plt.close(fig)
    written.append(p)
    return written
