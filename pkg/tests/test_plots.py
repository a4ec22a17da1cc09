import numpy as np
import pytest

from deul.envelopes import EnvelopeReport
from deul.plots import emit_plot, plot_atlas, plot_ratios
from deul.spectra import NormSeries


def series():
    t = np.geomspace(1.0, 1e3, 20)
    return [NormSeries("a", t, t ** -0.75), NormSeries("flat", t, np.full_like(t, 2.0))]


def test_empty_input_raises(tmp_path):
    with pytest.raises(ValueError):
        emit_plot([], tmp_path / "x.svg")
    with pytest.raises(ValueError):
        emit_plot([NormSeries("e", np.array([]), np.array([]))], tmp_path / "x.svg")
    with pytest.raises(ValueError):
        plot_ratios([], tmp_path / "r.svg")
    with pytest.raises(ValueError):
        plot_atlas([], [], np.zeros((0, 0)), tmp_path / "z.svg")


def test_constant_series_gets_flat_guide(tmp_path):
    emit_plot(series(), tmp_path / "p.svg")
    text = (tmp_path / "p.svg").read_text()
    assert "<svg" in text


def test_output_is_byte_stable(tmp_path):
    emit_plot(series(), tmp_path / "a.svg", guides={"a": -0.75}, title="t")
    emit_plot(series(), tmp_path / "b.svg", guides={"a": -0.75}, title="t")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


def test_atlas_and_ratio_plots(tmp_path):
    ts = np.geomspace(1.0, 1e3, 5)
    ks = np.geomspace(1e-3, 1.0, 4)
    plot_atlas(ts, ks, np.arange(20).reshape(5, 4) % 5, tmp_path / "z.svg")
    rep = EnvelopeReport("c", "p", {}, 0.1, 0.9, True)
    plot_ratios([rep, EnvelopeReport("d", "p", {}, 0.2, 1.3, False)], tmp_path / "r.svg")
    for name in ("z.svg", "r.svg"):
        assert (tmp_path / name).stat().st_size > 0
