"""
Log-scale convergence plots written as standalone SVG files.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

GAP_FLOOR = 1e-16

_STYLE = {
    "svg.fonttype": "path",  # glyphs as paths: no external fonts needed
    "svg.hashsalt": "hisoflow",  # stable element ids between runs
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
}


def _t_and_gap(trace):
    if isinstance(trace, dict):
        return np.asarray(trace["t"], float), np.asarray(trace["f_gap"], float)
    return np.asarray(trace.t, float), np.asarray(trace.f_gap, float)


def gap_figure(traces, title=None, floor=GAP_FLOOR):
    """
    One log-scale ``f_gap`` vs ``t`` curve per named trace.

    Gaps at or below ``floor`` (including negative roundoff) are drawn at
    ``floor``.
    """
    if not traces:
        raise ValueError("need at least one trace to plot")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.2))
        for name, tr in traces.items():
            t, gap = _t_and_gap(tr)
            ax.plot(t, np.maximum(gap, floor), label=name, lw=1.2)
        ax.set_yscale("log")
        ax.set_xlabel("t")
        ax.set_ylabel("f(x) - f(x*)")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper right")
        fig.tight_layout()
    return fig


def emit_plot(traces, path, title=None, floor=GAP_FLOOR):
    fig = gap_figure(traces, title, floor)
    try:
        with plt.rc_context(_STYLE):
            fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OSError(f"cannot write plot {path}: {e}") from e
    finally:
        plt.close(fig)
    return path
