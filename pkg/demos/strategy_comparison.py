"""Desk-scale comparison of the managed-lane strategies at one penetration.

One replication per strategy at MP 0.4 plus the BASE reference; prints the
headline measures of each run.  Takes a few seconds.
"""
import sys

from caccsim import ScenarioConfig, World, desk_scale
from caccsim.metrics import summarize

MP = float(sys.argv[1]) if len(sys.argv) > 1 else 0.4
KEYS = ("q_kmh", "pti", "speed_std_ms", "gp_median_tt_s", "pct_platooned", "mean_depth", "vhp")


def fmt(x):
    return f"{x:9.3f}" if x is not None else "        -"


if __name__ == "__main__":
    cfg = desk_scale(ScenarioConfig())
    print(f"{'':6}" + "".join(f"{k:>15}" for k in KEYS))
    for strategy, mp in (("BASE", 0.0), ("UML", MP), ("MML", MP), ("DL", MP), ("DLA", MP)):
        row = summarize(World(cfg.with_(strategy=strategy, market_penetration=mp), 1).run().ledger())
        print(f"{strategy:6}" + "".join(f"{fmt(row[k]):>15}" for k in KEYS))
