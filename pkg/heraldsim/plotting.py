"""
Static SVG line charts of metric sweeps.

Charts are drawn on a bare `matplotlib.figure.Figure`, without pyplot state,
and written with a fixed hash salt and no date so that identical sweeps give
identical files.
"""
import numpy as np

__all__ = ["CHART_METRICS", "plot_metric", "write_sweep_charts"]

CHART_METRICS = {
    "fidelity": "Heralded single-photon fidelity",
    "g2": r"Heralded $g^{(2)}(0)$",
    "fitness": "Source fitness",
}
SVG_RC = {"svg.hashsalt": "heraldsim", "svg.fonttype": "path"}


def _figure():
    try:
        from matplotlib.figure import Figure
    except ImportError as err:
        raise ImportError("SVG charts need matplotlib; install heraldsim[plotting].") from err
    return Figure(figsize=(6, 4.5))


def plot_metric(table, metric, title=None):
    """
    Plot one metric against the accepted-herald probability, one line per scheme.

    Parameters
    ----------
    table: `astropy.table.Table`
        Sweep rows.
    metric: `str`
        A key of `CHART_METRICS`.
    title: `str`, optional

    Returns
    -------
    `matplotlib.figure.Figure`
    """
    if metric not in CHART_METRICS:
        raise ValueError(f"Cannot chart {metric!r}; choose one of {tuple(CHART_METRICS)}.")
    figure = _figure()
    axes = figure.add_subplot()
    for scheme in dict.fromkeys(table["scheme"]):
        rows = table[table["scheme"] == scheme]
        rows = rows[np.argsort(rows["n_bar"], kind="stable")]
        rate = np.asarray(rows["p_herald"] * rows["p_ext"], dtype=float)
        axes.plot(rate, np.asarray(rows[metric], dtype=float), marker=".", label=str(scheme))
    axes.set_xscale("log")
    if metric == "g2":
        axes.set_yscale("log")
    axes.set_xlabel("Heralding probability per pulse")
    axes.set_ylabel(CHART_METRICS[metric])
    if title:
        axes.set_title(title)
    axes.grid(True, which="major", alpha=0.4)
    axes.legend()
    figure.tight_layout()
    return figure


def write_sweep_charts(table, prefix, title=None):
    """
    Write ``<prefix>_<metric>.svg`` for every chart metric.

    Returns
    -------
    `list` of `str`
        The written paths.
    """
    from matplotlib import rc_context

    paths = []
    with rc_context(SVG_RC):
        for metric in CHART_METRICS:
            path = f"{prefix}_{metric}.svg"
            plot_metric(table, metric, title).savefig(path, format="svg",
                                                      metadata={"Date": None})
            paths.append(path)
    return paths
