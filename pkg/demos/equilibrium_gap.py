"""A linked CACC follower closing on a constant-speed leader.

Prints the gap every 10 s for the intra-platoon (1.0 s) and inter-platoon
(1.2 s) time gaps; both settle on s0 + v*T.
"""
from caccsim import CACC_IDM, ChannelModel, DemandTable, NetworkGeometry, PlatoonParams, ScenarioConfig, World
from caccsim.enums import VehicleClass
from caccsim.scenario import Arrivals

V = 29.17


def run(T, params):
    cfg = ScenarioConfig(geometry=NetworkGeometry(length=20000.0, lanes=1, interchanges=()),
                         demand=DemandTable.empty(), channel=ChannelModel.ideal(), platoon=params,
                         warmup=0.0, strategy="UML")
    w = World(cfg, 1, arrivals=Arrivals.none())
    lead = w.add_vehicle(VehicleClass.CACC, 0, 1100.0, V, v_des=V)
    fol = w.add_vehicle(VehicleClass.CACC, 0, 1000.0, 25.0)
    w.form_platoon([lead, fol])
    print(f"T = {T} s, target gap {CACC_IDM.s0 + V * T:.2f} m")
    for _ in range(12):
        w.run(w.clock + 10.0)
        gap = w.vehicle(lead).position - 5.0 - w.vehicle(fol).position
        print(f"  t = {w.clock:5.0f} s  gap = {gap:7.3f} m  v = {w.vehicle(fol).speed:6.3f} m/s")


if __name__ == "__main__":
    run(1.0, PlatoonParams(min_size=2))
    run(1.2, PlatoonParams())
