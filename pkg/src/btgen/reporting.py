"""Matplotlib figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .bt_core import BTNode, Kind  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def plot_ablation(rows, path: str | Path) -> Path:
    """Bar charts of average R and average N_total (and N_mate when present) per prompt."""
    path = Path(path)
    names = [r.prompt_name for r in rows]
    panels = [("Avg. R", [r.avg_ratio for r in rows]), ("Avg. N_total", [r.avg_n_total for r in rows])]
    if any(r.avg_n_mate is not None for r in rows):
        panels.append(("Avg. N_mate", [r.avg_n_mate or 0.0 for r in rows]))
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 2.8))
        for ax, (title, values) in zip(axes, panels):
            bars = ax.bar(names, values, color="0.45", width=0.6)
            ax.set_title(title)
            ax.tick_params(axis="x", rotation=30)
            for bar, v in zip(bars, values):
                ax.annotate(f"{v:.2f}", (bar.get_x() + bar.get_width() / 2, v), ha="center", va="bottom", fontsize=8)
        axes[0].set_ylim(0, 1.05)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
    return path


def _layout(root: BTNode):
    """Leaves get consecutive x slots; parents sit above the middle of their children."""
    pos: dict[int, tuple[float, int]] = {}
    next_x = 0

    def place(node, level):
        nonlocal next_x
        if not node.children:
            pos[node.node_id] = (float(next_x), level)
            next_x += 1
        else:
            for c in node.children:
                place(c, level + 1)
            xs = [pos[c.node_id][0] for c in node.children]
            pos[node.node_id] = ((xs[0] + xs[-1]) / 2, level)

    place(root, 0)
    return pos, next_x


_GLYPH = {Kind.SEQUENCE: "→", Kind.FALLBACK: "?"}


def plot_tree(root: BTNode, path: str | Path, wrap: int = 14) -> Path:
    import textwrap

    path = Path(path)
    pos, width = _layout(root)
    levels = 1 + max(level for _, level in pos.values())
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 1.1 * width), 1.3 * levels + 0.5))
        for node in root.walk():
            x, y = pos[node.node_id]
            for c in node.children:
                cx, cy = pos[c.node_id]
                ax.plot([x, cx], [-y, -cy], color="0.6", lw=0.8, zorder=1)
        for node in root.walk():
            x, y = pos[node.node_id]
            if node.kind in _GLYPH:
                label, box = _GLYPH[node.kind], dict(boxstyle="square", fc="0.85", ec="0.2")
            elif node.kind is Kind.CONDITION:
                label, box = textwrap.fill(node.text, wrap), dict(boxstyle="round,pad=0.4", fc="white", ec="0.2")
            else:
                label, box = textwrap.fill(node.text, wrap), dict(boxstyle="square", fc="white", ec="0.2")
            ax.text(x, -y, label, ha="center", va="center", fontsize=6, bbox=box, zorder=2)
        ax.set_xlim(-0.7, width - 0.3)
        ax.set_ylim(-levels + 0.4, 0.6)
        ax.axis("off")
        fig.savefig(path)
        plt.close(fig)
    return path
