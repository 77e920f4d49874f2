"""Figure rendering: opportunity processes and strategies, one curve per scenario.

Output is a pure function of the CSVs: fixed style, fixed color order, no
randomness, and SVG text/ids kept deterministic so reruns produce identical
files.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .reader import load_bundle

FORMATS = ("png", "svg")
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")

_STYLE = {
    "figure.figsize": (8.0, 5.0),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.fonttype": "none",
    "svg.hashsalt": "crra-plots",
}


def render(in_dir, out_dir, formats=FORMATS):
    """Write opportunity.(png|svg) and strategy.(png|svg) from a result directory.

    Returns a report dict with the files written and the legend labels per
    figure. Raises SchemaMismatch on malformed CSVs and ValueError when the
    directory holds no scenario output at all.
    """
    formats = tuple(formats)
    for fmt in formats:
        if fmt not in FORMATS:
            raise ValueError(f"unsupported format {fmt!r}; choose from {FORMATS}")
    if not formats:
        raise ValueError("no output formats requested")
    bundle = load_bundle(in_dir)
    if not bundle.scenarios:
        raise ValueError(f"no scenario CSVs found in {in_dir}")
    os.makedirs(out_dir, exist_ok=True)
    report = {}
    with plt.rc_context(_STYLE):
        report["opportunity"] = _figure(
            out_dir, "opportunity", bundle.with_opportunity(), formats,
            _plot_opportunity, "t", "exp(Y)",
        )
        report["strategy"] = _figure(
            out_dir, "strategy", bundle.with_strategy(), formats,
            _plot_strategy, "t", "zeta",
        )
    return report


def _plot_opportunity(ax, series, color):
    ax.plot(series.t_opportunity, series.exp_y, color=color, label=series.label, lw=1.6)
    return [series.label]


def _plot_strategy(ax, series, color):
    labels = []
    n = series.zeta.shape[1]
    for k in range(n):
        label = series.label if n == 1 else f"{series.label} zeta_{k + 1}"
        ax.step(series.t_strategy, series.zeta[:, k], where="post", color=color,
                lw=1.6, ls=["-", "--", ":", "-."][k % 4], label=label)
        labels.append(label)
    return labels


def _figure(out_dir, stem, scenarios, formats, plot_one, xlabel, ylabel):
    if not scenarios:
        return {"files": [], "labels": []}
    fig, ax = plt.subplots()
    labels = []
    for k, series in enumerate(scenarios):
        labels.extend(plot_one(ax, series, _COLORS[k % len(_COLORS)]))
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    files = []
    for fmt in formats:
        path = os.path.join(out_dir, f"{stem}.{fmt}")
        fig.savefig(path, metadata={"Date": None} if fmt in ("svg", "png") else None)
        files.append(path)
    plt.close(fig)
    return {"files": files, "labels": labels}
