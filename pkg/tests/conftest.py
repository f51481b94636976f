import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from caccsim import ChannelModel, PlatoonParams, ScenarioConfig, World
from caccsim.scenario import Arrivals, DemandTable, NetworkGeometry

V_DES = 105 / 3.6


def scripted_world(lanes=4, length=50000.0, strategy="UML", channel=None, platoon=None,
                   interchanges=(), seed=1, **kw):
    """An empty straight road without demand, populated by the test."""
    geo = NetworkGeometry(length=length, lanes=lanes, interchanges=interchanges)
    cfg = ScenarioConfig(geometry=geo, demand=DemandTable.empty(),
                         channel=channel or ChannelModel.ideal(),
                         platoon=platoon or PlatoonParams(), horizon=kw.pop("horizon", 3600.0),
                         warmup=kw.pop("warmup", 0.0), **kw).with_(strategy=strategy)
    return World(cfg, seed, arrivals=Arrivals.none())


@pytest.fixture
def world_factory():
    return scripted_world


def check_platoon_invariants(world):
    """Assert the group bookkeeping invariants on the current state."""
    max_size = world.config.platoon.max_size
    min_size = world.config.platoon.min_size
    seen = set()
    for rec in world.platoons():
        states = [world.vehicle(v) for v in rec.members]
        assert 2 <= rec.size <= max_size
        assert all(s.cls == 2 for s in states)
        assert len({s.lane for s in states}) == 1
        assert [s.platoon[1] for s in states] == list(range(1, rec.size + 1))
        assert all(s.platoon[0] == rec.id for s in states)
        assert all(s.platoon_size == rec.size for s in states)
        assert all(s.established == (rec.size >= min_size) for s in states)
        for front, rear in zip(rec.members, rec.members[1:]):
            lead = world.neighbors(rear)["leader"]
            assert lead is not None and lead.id == front
        assert not seen & set(rec.members)
        seen |= set(rec.members)
    for v in world.vehicles():
        if v.platoon is not None:
            assert v.id in seen and v.cls == 2


def synthetic_results(seed=0, strategies=("UML", "MML", "DL", "DLA"), mps=(0.1, 0.2, 0.4), drop=()):
    """Per-replication summary rows for a strategy x MP grid and a baseline."""
    rng = np.random.default_rng(seed)

    def rep(shift):
        return {"q_kmh": 90.0 + shift + rng.normal(0, 1.0), "speed_std_ms": 4.0 - 0.1 * shift + rng.normal(0, .2),
                "gp_median_tt_s": 300.0 - shift + rng.normal(0, 2.0), "fuel_l": 50.0 + rng.normal(0, 3.0),
                "vhp": max(0.0, shift + rng.normal(0, 0.5)), "pct_platooned": 10.0 * shift + rng.normal(0, 1)}

    baseline = [rep(0.0) for _ in range(5)]
    results = {}
    for i, s in enumerate(strategies):
        for mp in mps:
            if (s, mp) in drop:
                continue
            results[(s, mp)] = [rep(i * mp * 10.0 - 1.0) for _ in range(5)]
    return results, baseline


# PASS/FAIL lines of the acceptance suite, repeated in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
