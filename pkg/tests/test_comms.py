import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caccsim import (
    ChannelKind,
    ChannelModel,
    ConfigError,
    ScenarioConfig,
    World,
    desk_scale,
    reception_probability,
    sample_link,
)
from caccsim.comms import load_table_csv

PARAM = ChannelModel()


def _logistic(d, m=PARAM):
    return 1.0 / (1.0 + math.exp(m.steepness * (d - m.midpoint * m.power * (1.0 - 0.5 * m.load))))


def test_parametric_examples():
    assert reception_probability(PARAM, 0.0) >= 0.99
    assert reception_probability(PARAM, PARAM.midpoint) == pytest.approx(0.5, abs=1e-12)
    assert reception_probability(PARAM, PARAM.max_range + 1.0) == 0.0
    for d in (10.0, 120.0, 333.0, 499.0):
        assert reception_probability(PARAM, d) == pytest.approx(_logistic(d), abs=1e-12)


def test_ideal_disc():
    m = ChannelModel.ideal(300.0)
    assert reception_probability(m, 0.0) == 1.0
    assert reception_probability(m, 300.0) == 1.0
    assert reception_probability(m, 300.01) == 0.0


def test_table_interpolation():
    m = ChannelModel.from_table((0.0, 100.0, 300.0), (1.0, 0.8, 0.2))
    assert m.kind == ChannelKind.TABLE and m.max_range == 300.0
    assert reception_probability(m, 50.0) == pytest.approx(0.9, abs=1e-12)
    assert reception_probability(m, 200.0) == pytest.approx(0.5, abs=1e-12)
    assert reception_probability(m, 300.0) == pytest.approx(0.2, abs=1e-12)
    assert reception_probability(m, 301.0) == 0.0


def test_table_validation():
    with pytest.raises(ConfigError, match="monotone"):
        ChannelModel.from_table((0.0, 100.0, 200.0), (0.9, 0.95, 0.1))
    with pytest.raises(ConfigError):
        ChannelModel.from_table((0.0,), (1.0,))
    with pytest.raises(ConfigError):
        ChannelModel(load=1.5)


def test_negative_distance_rejected():
    with pytest.raises(ValueError):
        reception_probability(PARAM, -1.0)


def test_load_table_csv(tmp_path):
    f = tmp_path / "curve.csv"
    f.write_text("distance_m,probability\n# measured\n0,1.0\n250,0.6\n")
    assert load_table_csv(f) == ([0.0, 250.0], [1.0, 0.6])


@settings(max_examples=200, deadline=None)
@given(d1=st.floats(0.0, 600.0), d2=st.floats(0.0, 600.0), load=st.floats(0.0, 1.0))
def test_reception_non_increasing_in_distance(d1, d2, load):
    m = ChannelModel(load=load)
    lo, hi = sorted((d1, d2))
    assert reception_probability(m, hi) <= reception_probability(m, lo)


@settings(max_examples=200, deadline=None)
@given(d=st.floats(0.0, 600.0), l1=st.floats(0.0, 1.0), l2=st.floats(0.0, 1.0))
def test_reception_non_increasing_in_load(d, l1, l2):
    lo, hi = sorted((l1, l2))
    assert reception_probability(ChannelModel(load=hi), d) <= reception_probability(ChannelModel(load=lo), d)


@settings(max_examples=100, deadline=None)
@given(d=st.floats(0.0, 600.0), p1=st.floats(0.1, 4.0), p2=st.floats(0.1, 4.0))
def test_reception_non_decreasing_in_power(d, p1, p2):
    lo, hi = sorted((p1, p2))
    assert reception_probability(ChannelModel(power=hi), d) >= reception_probability(ChannelModel(power=lo), d)


def test_sample_link_extremes():
    rng = np.random.default_rng(0)
    sure = ChannelModel.from_table((0.0, 500.0), (1.0, 1.0))
    dead = ChannelModel.from_table((0.0, 500.0), (0.0, 0.0))
    assert all(sample_link(sure, rng, 0.0, 100.0) for _ in range(1000))
    assert not any(sample_link(dead, rng, 0.0, 100.0) for _ in range(1000))


def test_sample_link_frequency():
    m = ChannelModel.from_table((0.0, 500.0), (0.7, 0.7))
    rng = np.random.default_rng(1)
    hits = sum(sample_link(m, rng, 100.0, 0.0) for _ in range(100_000))
    assert abs(hits / 100_000 - 0.7) <= 0.01


def test_channel_draws_do_not_disturb_demand_stream():
    base = desk_scale(ScenarioConfig()).with_(strategy="DL", market_penetration=0.3)
    a = World(base.with_(channel=ChannelModel.ideal()), 7)
    b = World(base.with_(channel=ChannelModel()), 7)
    for field in ("t", "origin", "cls", "dest", "vdes"):
        assert np.array_equal(getattr(a.arrivals, field), getattr(b.arrivals, field))
    # and the entries actually realised over a run agree too
    a.run(600.0)
    b.run(600.0)
    assert a.entered == b.entered
