import pytest
from astropy.table import Table

from heraldsim.plotting import CHART_METRICS, plot_metric, write_sweep_charts

pytest.importorskip("matplotlib")


@pytest.fixture
def table():
    return Table({
        "scheme": ["standard", "standard", "extended", "extended"],
        "n_bar": [0.2, 0.1, 0.1, 0.2],
        "p_herald": [0.04, 0.01, 0.06, 0.05],
        "p_ext": [1.0, 1.0, 0.95, 0.9],
        "fidelity": [0.9, 0.95, 0.96, 0.93],
        "g2": [0.4, 0.2, 0.1, 0.3],
        "fitness": [0.7, 0.8, 0.85, 0.8],
    })


def test_plot_metric(table):
    figure = plot_metric(table, "g2", title="small")
    axes = figure.axes[0]
    assert [line.get_label() for line in axes.get_lines()] == ["standard", "extended"]
    assert axes.get_yscale() == "log"
    assert list(axes.get_lines()[0].get_ydata()) == [0.2, 0.4]
    assert axes.get_title() == "small"


def test_plot_unknown_metric(table):
    with pytest.raises(ValueError):
        plot_metric(table, "purity")


def test_write_sweep_charts(table, tmp_path):
    paths = write_sweep_charts(table, str(tmp_path / "sweep"))
    assert paths == [str(tmp_path / f"sweep_{metric}.svg") for metric in CHART_METRICS]
    first = (tmp_path / "sweep_g2.svg").read_bytes()
    write_sweep_charts(table, str(tmp_path / "again"))
    assert (tmp_path / "again_g2.svg").read_bytes() == first
