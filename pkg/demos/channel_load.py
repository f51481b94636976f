"""Platooning under a degrading V2V channel.

Sweeps the channel busy ratio of the logistic reception model for DL at MP
0.4 and prints fallbacks and VHP per run.
"""
from caccsim import ChannelModel, ScenarioConfig, World, desk_scale
from caccsim.metrics import platoon_measures

if __name__ == "__main__":
    base = desk_scale(ScenarioConfig()).with_(strategy="DL", market_penetration=0.4)
    for midpoint in (250.0, 150.0, 110.0, 90.0):
        for load in (0.0, 0.5, 1.0):
            ch = ChannelModel(midpoint=midpoint, load=load)
            w = World(base.with_(channel=ch), 1).run()
            pm = platoon_measures(w.ledger())
            print(f"midpoint {midpoint:5.0f} m  load {load:.1f}  fallbacks {w.fallback_count:6d}  "
                  f"VHP {pm['vhp']:.3f}")
