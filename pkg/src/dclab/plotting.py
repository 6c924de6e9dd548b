"""Growth-curve figures drawn from result rows (nothing that is not in the CSV)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def growth_figure(rows, path, title: str = "") -> None:
    """One line per (p, kind): value against dimension on a log2 axis."""
    curves = {}
    for r in rows:
        curves.setdefault((r.p, r.kind), []).append((r.dim, r.value))
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for (p, kind), pts in sorted(curves.items(), key=lambda kv: (str(kv[0][0]), kv[0][1])):
        pts.sort()
        ax.plot([d for d, _ in pts], [v for _, v in pts], marker="o", label=f"p={p} {kind}")
    ax.set_xscale("log", base=2)
    ax.set_xlabel("dimension m")
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
