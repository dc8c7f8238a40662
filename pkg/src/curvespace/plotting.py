"""SVG line charts of ladders and profiles (level on x, log-scale values on y)."""

from __future__ import annotations

import re
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# deterministic SVG output: fixed element ids, no timestamp, no path simplification
matplotlib.rcParams["svg.hashsalt"] = "curvespace"
matplotlib.rcParams["path.simplify"] = False


def _series(report):
    """(levels, values) of a LadderReport or of a plain list of (level, value) pairs."""
    if hasattr(report, "entries"):
        pts = [(e.level, e.value) for e in report.entries]
    else:
        pts = [(int(k), float(v)) for k, v in report]
    # log axes cannot show non-positive values
    pts = [(k, v) for k, v in pts if v > 0]
    return [k for k, _ in pts], [v for _, v in pts]


def _svg_id(name):
    # XML ids cannot hold spaces or '='
    return re.sub(r"[^A-Za-z0-9_.-]", "_", str(name))


def render_svg(series, path, title="", ylabel="value", gids=None):
    """Write one log-scale line per entry of ``series`` to ``path``.

    series: a report, a list of (level, value) pairs, or a dict name -> either.
    Each line sits in an SVG group whose id is its name (``ladder`` by default),
    with characters outside ``[A-Za-z0-9_.-]`` replaced by ``_``.
    """
    if not isinstance(series, dict):
        series = {"ladder": series}
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    plotted = 0
    for name, rep in series.items():
        xs, ys = _series(rep)
        if not xs:
            continue
        (line,) = ax.plot(xs, ys, lw=1.2, label=name)
        line.set_gid(_svg_id((gids or {}).get(name, name)))
        plotted += 1
    if plotted:
        ax.set_yscale("log")
    ax.set_xlabel("level")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=10)
    if plotted > 1:
        ax.legend(fontsize=7)
    ax.grid(True, which="both", lw=0.3, alpha=0.5)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
