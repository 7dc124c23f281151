"""SVG figures rendered from a run directory's CSV outputs.

Every element that tests may want to count carries a ``gid``: ``bar_<i>``
and ``whisker_<i>`` in bar charts, ``ce_<p>`` and ``base_<p>`` for the
scatter collections of pairwise panel ``p``.
"""

from __future__ import annotations

import csv
import itertools
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

BAR_INPUTS = {
    "ce_average_with_base.csv": ("ce_average_with_base.svg", "CE average per feature"),
    "ce_average_delta.csv": ("ce_average_delta.svg", "CE average change per feature"),
}
FRONT_INPUT = "pareto_front.csv"
FRONT_OUTPUT = "pareto_front.svg"


class PlotInputError(ValueError):
    pass


def _read(path: Path) -> tuple[list[str], list[list[str]]]:
    if not path.exists():
        raise PlotInputError(f"missing plot input: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise PlotInputError(f"plot input {path} has no header")
    return rows[0], rows[1:]


def _save(fig, path: Path):
    with plt.rc_context({"svg.hashsalt": "paretoce", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def bar_chart(csv_path, svg_path, title: str = "") -> Path:
    """Bars of ``mean`` with ``std`` whiskers, one per feature row."""
    header, rows = _read(Path(csv_path))
    if header[:3] != ["feature", "mean", "std"]:
        raise PlotInputError(f"{csv_path}: expected columns feature, mean, std")
    if not rows:
        raise PlotInputError(f"{csv_path} has no feature rows")
    names = [r[0] for r in rows]
    means = [float(r[1]) for r in rows]
    stds = [float(r[2]) for r in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.45 * len(rows)), 3.5))
    bars = ax.bar(range(len(rows)), means, color="#4878a8")
    for i, (bar, m, s) in enumerate(zip(bars, means, stds)):
        bar.set_gid(f"bar_{i}")
        (line,) = ax.plot([i, i], [m - s, m + s], color="black", linewidth=1)
        line.set_gid(f"whisker_{i}")
    ax.axhline(0.0, color="grey", linewidth=0.5)
    ax.set_xticks(range(len(rows)), names, rotation=60, ha="right", fontsize=7)
    ax.set_title(title)
    fig.tight_layout()
    svg_path = Path(svg_path)
    _save(fig, svg_path)
    return svg_path


def front_scatter(csv_path, svg_path) -> Path:
    """Pairwise projections of the objective columns; the base row is drawn in red."""
    header, rows = _read(Path(csv_path))
    if "is_base" not in header:
        raise PlotInputError(f"{csv_path}: missing is_base column")
    flag = header.index("is_base")
    obj = [i for i, h in enumerate(header) if i != flag]
    if len(obj) < 2:
        raise PlotInputError(f"{csv_path}: need at least two objective columns")
    ce = [r for r in rows if r[flag] == "0"]
    base = [r for r in rows if r[flag] == "1"]
    if not ce:
        raise PlotInputError(f"{csv_path} contains no CE rows")
    pairs = list(itertools.combinations(obj, 2))
    fig, axes = plt.subplots(1, len(pairs), figsize=(3.2 * len(pairs), 3.2), squeeze=False)
    for p, ((a, b), ax) in enumerate(zip(pairs, axes[0])):
        sc = ax.scatter([float(r[a]) for r in ce], [float(r[b]) for r in ce], s=14, color="#1f4fbf")
        sc.set_gid(f"ce_{p}")
        if base:
            bs = ax.scatter([float(r[a]) for r in base], [float(r[b]) for r in base], s=40, color="red", marker="D")
            bs.set_gid(f"base_{p}")
        ax.set_xlabel(header[a], fontsize=8)
        ax.set_ylabel(header[b], fontsize=8)
    fig.tight_layout()
    svg_path = Path(svg_path)
    _save(fig, svg_path)
    return svg_path


def emit_plots(run_dir, out_dir=None) -> list[Path]:
    """Render all figures for an exp2-style run directory.

    Inputs are checked before anything is drawn, so a missing or empty
    file leaves no partial SVG behind.
    """
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    needed = [*BAR_INPUTS, FRONT_INPUT]
    for name in needed:
        header, rows = _read(run_dir / name)
        if not rows:
            raise PlotInputError(f"plot input {run_dir / name} has no data rows")
        if name == FRONT_INPUT and "is_base" in header:
            flag = header.index("is_base")
            if not any(r[flag] == "0" for r in rows):
                raise PlotInputError(f"{run_dir / name} contains no CE rows")
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [bar_chart(run_dir / src, out_dir / svg, title) for src, (svg, title) in BAR_INPUTS.items()]
    written.append(front_scatter(run_dir / FRONT_INPUT, out_dir / FRONT_OUTPUT))
    return written
