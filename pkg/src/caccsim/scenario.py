"""Network geometry, demand, lane rules and the scenario configuration.

The default network is an 8 km, four-lane freeway with two interchanges
(an off-ramp followed by an on-ramp with a 300 m acceleration lane).  Lane 0
is the rightmost lane, the managed lane is the leftmost one.  Origins are the
upstream boundary (Z1) and the two on-ramps (Z2, Z3); destinations are the
two off-ramps (Z2, Z3) and the downstream boundary (Z4).
"""
import dataclasses
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .comms import ChannelKind, ChannelModel, load_table_csv
from .enums import Strategy, VehicleClass
from .errors import ConfigError
from .lateral import CACC_LC, HUMAN_LC, LaneChangeParams
from .longitudinal import CACC_IDM, HUMAN_IDM, KMH, IdmParams
from .platooning import PlatoonParams

WEAVE_PER_LANE = 333.0  # m of weaving length per required lane change

GP, HOV, CACC = VehicleClass.GP, VehicleClass.HOV, VehicleClass.CACC


# ---------------------------------------------------------------- lane rules

def lane_eligibility(strategy, cls, lane, n_lanes=4):
    """May a vehicle of class ``cls`` use ``lane`` under ``strategy``?

    Only the leftmost lane is managed.  Strategies that fold HOVs into the
    general stream treat them exactly like GP vehicles.
    """
    strategy = Strategy.parse(strategy)
    cls = VehicleClass(cls)
    if lane < 0 or lane >= n_lanes:
        return False
    if lane != n_lanes - 1:
        return True
    if strategy == Strategy.BASE:
        return cls == HOV
    if strategy == Strategy.UML:
        return True
    if strategy == Strategy.MML:
        return cls in (CACC, HOV)
    return cls == CACC  # DL, DLA


def eligibility_table(strategy, n_lanes=4):
    """``[class, lane]`` 0/1 matrix of :func:`lane_eligibility`."""
    out = np.zeros((3, n_lanes), dtype=np.int64)
    for c in VehicleClass:
        for lane in range(n_lanes):
            out[int(c), lane] = lane_eligibility(strategy, c, lane, n_lanes)
    return out


def managed_lane_seekers(strategy):
    """Per-class flags: which classes head for the managed lane."""
    strategy = Strategy.parse(strategy)
    out = np.zeros(3, dtype=np.int64)
    if strategy in (Strategy.BASE, Strategy.MML):
        out[HOV] = 1
    if strategy in (Strategy.MML, Strategy.DL, Strategy.DLA):
        out[CACC] = 1
    return out


# ---------------------------------------------------------------- geometry

@dataclass(frozen=True)
class Interchange:
    zone: str
    off_ramp: float  # m, diverge point
    on_ramp: float  # m, start of the acceleration lane


@dataclass(frozen=True)
class AccessZone:
    lane: int
    start: float
    end: float

    @property
    def length(self):
        return self.end - self.start


@dataclass(frozen=True)
class NetworkGeometry:
    length: float = 8000.0
    lanes: int = 4
    interchanges: Tuple[Interchange, ...] = (
        Interchange("Z2", 2000.0, 2300.0),
        Interchange("Z3", 5000.0, 5300.0),
    )
    accel_length: float = 300.0
    exit_prep: float = 1000.0  # m before an off-ramp where exiting traffic heads right
    weave_per_lane: float = WEAVE_PER_LANE
    access_zones: Tuple[AccessZone, ...] = ()

    @property
    def managed_lane(self):
        return self.lanes - 1

    def violations(self):
        out = []
        if not self.length > 0:
            out.append("geometry.length must be > 0")
        if self.lanes < 1:
            out.append("geometry.lanes must be >= 1")
        prev = -math.inf
        for ic in self.interchanges:
            if not 0 < ic.off_ramp < self.length:
                out.append(f"geometry: off-ramp {ic.zone} lies outside the mainline")
            if not (0 < ic.on_ramp and ic.on_ramp + self.accel_length <= self.length):
                out.append(f"geometry: on-ramp {ic.zone} lies outside the mainline")
            if ic.on_ramp < prev:
                out.append("geometry: interchanges must be ordered downstream")
            prev = ic.on_ramp + self.accel_length
        for z in self.access_zones:
            if not 0 <= z.start < z.end <= self.length:
                out.append(f"geometry: access zone [{z.start}, {z.end}] lies outside the mainline")
        return out


def _merge_spans(spans):
    spans = sorted(spans)
    out = []
    for a, b in spans:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return out


def merge_zones(zones: Sequence[AccessZone]):
    """Union of overlapping zones on the same lane."""
    out = []
    for lane in sorted({z.lane for z in zones}):
        for a, b in _merge_spans([(z.start, z.end) for z in zones if z.lane == lane]):
            out.append(AccessZone(lane, a, b))
    return tuple(out)


def access_zone_builder(geometry: NetworkGeometry, entry_lane=0, weave_per_lane=None):
    """Managed-lane access zones: downstream of each on-ramp and upstream of
    each off-ramp, one weaving length per lane change between ``entry_lane``
    and the managed lane.  Overlapping zones are merged, and zones are
    clipped to the mainline."""
    w = geometry.weave_per_lane if weave_per_lane is None else weave_per_lane
    ml = geometry.managed_lane
    span = w * max(ml - entry_lane, 1)
    raw = []
    for ic in geometry.interchanges:
        raw.append(AccessZone(ml, max(0.0, ic.off_ramp - span), ic.off_ramp))
        raw.append(AccessZone(ml, ic.on_ramp, min(geometry.length, ic.on_ramp + span)))
    return merge_zones(raw)


# ---------------------------------------------------------------- demand

@dataclass(frozen=True)
class ZoneDemand:
    gp_peak: float
    gp_avg: float
    hov_peak: float
    hov_avg: float


# Peak and average 15-min rates per origin [vph].  Z3 lists the same numbers
# for GP and HOV; kept as published.
TABLE_DEMAND = {
    "Z1": ZoneDemand(4197.0, 3998.0, 1885.0, 1796.0),
    "Z2": ZoneDemand(712.0, 382.0, 335.0, 180.0),
    "Z3": ZoneDemand(1411.0, 1146.0, 1411.0, 1146.0),
}


@dataclass(frozen=True)
class DemandTable:
    """Per-origin GP/HOV rates for consecutive intervals.

    ``gp[origin][k]`` and ``hov[origin][k]`` are vph during interval ``k``.
    ``exit_share`` is the fraction of an origin's traffic leaving at each
    downstream off-ramp; the remainder travels to the end of the segment.
    """
    origins: Tuple[str, ...]
    gp: Tuple[Tuple[float, ...], ...]
    hov: Tuple[Tuple[float, ...], ...]
    interval: float = 900.0
    exit_share: float = 0.15

    @property
    def n_intervals(self):
        return len(self.gp[0]) if self.gp else 0

    def violations(self):
        out = []
        if not self.interval > 0:
            out.append("demand.interval must be > 0")
        if not 0 <= self.exit_share <= 1:
            out.append("demand.exit_share must lie in [0, 1]")
        if len(self.gp) != len(self.origins) or len(self.hov) != len(self.origins):
            out.append("demand: one GP and one HOV row per origin")
        lengths = {len(r) for r in self.gp + self.hov}
        if len(lengths) > 1:
            out.append("demand: every origin needs the same number of intervals")
        if any(x < 0 for r in self.gp + self.hov for x in r):
            out.append("demand: rates must be >= 0")
        return out

    def scaled(self, factor):
        return replace(self, gp=tuple(tuple(x * factor for x in r) for r in self.gp),
                       hov=tuple(tuple(x * factor for x in r) for r in self.hov))

    @classmethod
    def from_profile(cls, profile=("avg", "avg", "peak", "peak", "avg"), zones=None, interval=900.0,
                     exit_share=0.15, scale=1.0):
        zones = TABLE_DEMAND if zones is None else zones
        names = tuple(zones)
        pick = {"avg": lambda z: (z.gp_avg, z.hov_avg), "peak": lambda z: (z.gp_peak, z.hov_peak)}
        gp = tuple(tuple(pick[p](zones[o])[0] * scale for p in profile) for o in names)
        hov = tuple(tuple(pick[p](zones[o])[1] * scale for p in profile) for o in names)
        return cls(names, gp, hov, interval, exit_share)

    @classmethod
    def empty(cls, origins=("Z1",)):
        return cls(tuple(origins), tuple(() for _ in origins), tuple(() for _ in origins))


@dataclass
class Arrivals:
    """Pre-generated entries, sorted by origin then time.

    ``dest`` indexes the off-ramps in downstream order; ``n_off`` means the
    downstream end of the segment.
    """
    t: np.ndarray
    origin: np.ndarray
    cls: np.ndarray
    dest: np.ndarray
    vdes: np.ndarray  # m/s, desired speed in automated or human control
    hv_vdes: np.ndarray  # m/s, the driver's own desired speed

    def __len__(self):
        return self.t.size

    @classmethod
    def none(cls):
        z = np.zeros(0)
        zi = np.zeros(0, dtype=np.int64)
        return cls(z, zi, zi.copy(), zi.copy(), z.copy(), z.copy())


def draw_desired_speeds(rng, n, mean_kmh=105.0, sd_kmh=5.0, lo_kmh=90.0, hi_kmh=120.0):
    """Truncated-normal desired speeds [m/s] by resampling out-of-range draws."""
    out = rng.normal(mean_kmh, sd_kmh, n)
    bad = (out < lo_kmh) | (out > hi_kmh)
    while bad.any():
        out[bad] = rng.normal(mean_kmh, sd_kmh, int(bad.sum()))
        bad = (out < lo_kmh) | (out > hi_kmh)
    return out * KMH


def generate_arrivals(table: DemandTable, mp, rng, interval=None, fold_hov=False):
    """Poisson entries per origin and interval with class and route tags.

    Every random draw is made regardless of ``mp`` so that runs at different
    penetration rates see the same arrival times and routes (common random
    numbers); only the class labels change.  ``interval`` restricts the
    draw to a single interval index.

    Returns a dict of arrays ``t``, ``origin`` (index into
    ``table.origins``) and ``cls``; routes and speeds are assigned in
    :func:`build_arrivals`.
    """
    if not 0.0 <= mp <= 1.0:
        raise ValueError("market penetration must lie in [0, 1]")
    ts, orgs, clss = [], [], []
    ks = range(table.n_intervals) if interval is None else [interval]
    for o, name in enumerate(table.origins):
        for k in ks:
            gp, hov = table.gp[o][k], table.hov[o][k]
            total = gp + hov
            n = rng.poisson(total * table.interval / 3600.0)
            t = np.sort(rng.uniform(k * table.interval, (k + 1) * table.interval, n))
            u_cacc = rng.random(n)
            u_hov = rng.random(n)
            share = hov / total if total > 0 else 0.0
            cls = np.where(u_hov < share, int(HOV), int(GP))
            if fold_hov:
                cls[:] = int(GP)
            cls = np.where(u_cacc < mp, int(CACC), cls)
            ts.append(t)
            orgs.append(np.full(n, o, dtype=np.int64))
            clss.append(cls.astype(np.int64))
    if not ts:
        return {"t": np.zeros(0), "origin": np.zeros(0, dtype=np.int64), "cls": np.zeros(0, dtype=np.int64)}
    return {"t": np.concatenate(ts), "origin": np.concatenate(orgs), "cls": np.concatenate(clss)}


def build_arrivals(table: DemandTable, geometry: NetworkGeometry, mp, demand_rng, driver_rng,
                   fold_hov=False, cacc_vdes=CACC_IDM.v_des, vdes_kmh=(105.0, 5.0, 90.0, 120.0)):
    """Full arrival list for a run: times, classes, routes and desired speeds."""
    raw = generate_arrivals(table, mp, demand_rng, fold_hov=fold_hov)
    n = raw["t"].size
    u_dest = demand_rng.random(n)
    hv = draw_desired_speeds(driver_rng, n, *vdes_kmh)
    n_off = len(geometry.interchanges)
    dest = np.full(n, n_off, dtype=np.int64)
    # map table origins to network entries: ramps by zone name, else the mainline
    ramp_of = {ic.zone: k + 1 for k, ic in enumerate(geometry.interchanges)}
    entry = np.array([ramp_of.get(name, 0) for name in table.origins], dtype=np.int64)
    origin = entry[raw["origin"]] if n else raw["origin"]
    starts = [0.0] + [ic.on_ramp for ic in geometry.interchanges]
    for i in range(n):
        x0 = starts[origin[i]]
        acc = 0.0
        for k, ic in enumerate(geometry.interchanges):
            if ic.off_ramp > x0:
                acc += table.exit_share
                if u_dest[i] < acc:
                    dest[i] = k
                    break
    order = np.lexsort((raw["t"], origin))
    cls = raw["cls"][order]
    vdes = np.where(cls == int(CACC), cacc_vdes, hv[order])
    return Arrivals(raw["t"][order], origin[order], cls, dest[order], vdes, hv[order])


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class HumanSpeeds:
    mean_kmh: float = 105.0
    sd_kmh: float = 5.0
    min_kmh: float = 90.0
    max_kmh: float = 120.0

    def as_tuple(self):
        return (self.mean_kmh, self.sd_kmh, self.min_kmh, self.max_kmh)


@dataclass(frozen=True)
class ScenarioConfig:
    strategy: Strategy = Strategy.BASE
    market_penetration: float = 0.0
    demand: DemandTable = field(default_factory=DemandTable.from_profile)
    geometry: NetworkGeometry = field(default_factory=NetworkGeometry)
    cacc: IdmParams = CACC_IDM
    human: IdmParams = HUMAN_IDM
    human_speeds: HumanSpeeds = field(default_factory=HumanSpeeds)
    lc_cacc: LaneChangeParams = CACC_LC
    lc_human: LaneChangeParams = HUMAN_LC
    platoon: PlatoonParams = field(default_factory=PlatoonParams)
    channel: ChannelModel = field(default_factory=ChannelModel)
    seeds: Tuple[int, ...] = (1, 2, 3, 4, 5)
    horizon: float = 4500.0
    warmup: float = 900.0
    dt: float = 0.1
    lc_cooldown: float = 3.0
    lc_period: float = 1.0
    cluster_rule: str = "min"
    urgency_max: float = 1.5
    gap_speed_factor: float = 1.1  # envelope speed of gap regulation, x v_des
    tick: float = 1.0  # s between speed / platoon samples
    free_flow_kmh: float = 105.0
    fuel_coefficients: Optional[str] = None
    entry_lane: int = 0  # lane from which CACC traffic weaves to the managed lane
    starve_distance: float = 3.0  # m before the end of an acceleration lane
    spawn_lookahead: float = 200.0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy.parse(self.strategy))

    def violations(self):
        out = []
        if not 0.0 <= self.market_penetration <= 1.0:
            out.append("scenario.market_penetration must lie in [0, 1]")
        if not self.seeds:
            out.append("scenario.seeds must not be empty")
        if not self.warmup < self.horizon:
            out.append("scenario.warmup must be < scenario.horizon")
        if not self.dt > 0:
            out.append("scenario.dt must be > 0")
        if self.cluster_rule not in ("min", "max"):
            out.append("lane_change.cluster_rule must be 'min' or 'max'")
        if not self.urgency_max >= 1.0:
            out.append("lane_change.urgency_max must be >= 1")
        if not self.gap_speed_factor > 1.0:
            out.append("cacc.gap_speed_factor must be > 1")
        if not self.lc_period >= self.dt:
            out.append("lane_change.decision_period must be >= dt")
        steps = self.tick / self.dt
        if abs(steps - round(steps)) > 1e-9 or steps < 1:
            out.append("metrics.tick must be a whole number of steps")
        out += self.geometry.violations()
        out += self.demand.violations()
        out += self.platoon.violations()
        out += self.channel.violations()
        if self.geometry.access_zones and self.strategy != Strategy.DLA:
            out.append("geometry: access zones exist only under DLA")
        if self.demand.origins and len(self.demand.origins) > 1 + len(self.geometry.interchanges):
            out.append("demand: more origins than the network has entries")
        return out

    def validate(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)
        return self

    @property
    def free_flow_speed(self):
        return self.free_flow_kmh * KMH

    def zones(self):
        """Access zones in force: explicit ones, or built ones under DLA."""
        if self.strategy != Strategy.DLA:
            return ()
        if self.geometry.access_zones:
            return self.geometry.access_zones
        return access_zone_builder(self.geometry, self.entry_lane)

    def with_(self, **kw):
        if "strategy" in kw:
            kw["strategy"] = Strategy.parse(kw["strategy"])
        return replace(self, **kw)


DESK_LENGTH = 2000.0
DESK_SCALE = DESK_LENGTH / 8000.0


def desk_scale(cfg: ScenarioConfig) -> ScenarioConfig:
    """CI-sized variant: 2 km with both interchanges and the weaving length
    scaled to the shorter segment, 1800 s horizon (300 s warm-up), half the
    demand, one average and one peak interval."""
    geo = cfg.geometry
    inter = tuple(Interchange(ic.zone, ic.off_ramp * DESK_SCALE, ic.on_ramp * DESK_SCALE)
                  for ic in geo.interchanges)
    geo = replace(geo, length=DESK_LENGTH, interchanges=inter,
                  weave_per_lane=geo.weave_per_lane * DESK_SCALE, access_zones=())
    demand = DemandTable.from_profile(("avg", "peak"), interval=900.0,
                                      exit_share=cfg.demand.exit_share, scale=0.5)
    return replace(cfg, geometry=geo, demand=demand, horizon=1800.0, warmup=300.0)


# ---------------------------------------------------------------- config files

def _section(data, name):
    sec = data.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError([f"[{name}] must be a table"])
    return sec


def _build(cls, sec, name, problems, rename=None, **fixed):
    rename = rename or {}
    known = {f.name for f in dataclasses.fields(cls)}
    kwargs = dict(fixed)
    for key, value in sec.items():
        target = rename.get(key, key)
        if target in known:
            kwargs[target] = value
        elif not isinstance(value, dict):
            problems.append(f"{name}.{key} is not a known setting")
    try:
        return cls(**kwargs)
    except ConfigError as exc:
        problems.extend(exc.violations)
    except (TypeError, ValueError) as exc:
        problems.append(f"{name}: {exc}")
    return None


SECTIONS = ("scenario", "geometry", "demand", "cacc", "human", "lane_change", "platoon", "comms", "metrics")
SCENARIO_KEYS = ("strategy", "market_penetration", "seeds", "horizon", "warmup", "dt", "free_flow_kmh",
                 "entry_lane")
DEMAND_KEYS = ("profile", "interval", "exit_share", "scale", "zones", "csv")


def config_from_dict(data, base_dir=".") -> ScenarioConfig:
    """Build and validate a configuration from parsed TOML.

    All problems found are collected and raised together as a ConfigError.
    """
    problems = []
    base_dir = Path(base_dir)
    for name in data:
        if name not in SECTIONS:
            problems.append(f"[{name}] is not a known section")
    sc = _section(data, "scenario")
    for key in sc:
        if key not in SCENARIO_KEYS:
            problems.append(f"scenario.{key} is not a known setting")
    kw = {}
    for key in ("market_penetration", "horizon", "warmup", "dt", "free_flow_kmh", "entry_lane"):
        if key in sc:
            kw[key] = sc[key]
    if "strategy" in sc:
        try:
            kw["strategy"] = Strategy.parse(sc["strategy"])
        except ValueError as exc:
            problems.append(f"scenario.strategy: {exc}")
    if "seeds" in sc:
        kw["seeds"] = tuple(int(s) for s in sc["seeds"])
    geo_sec = dict(_section(data, "geometry"))
    inter = geo_sec.pop("interchanges", None)
    zones = geo_sec.pop("access_zones", None)
    fixed = {}
    if inter is not None:
        fixed["interchanges"] = tuple(Interchange(str(i["zone"]), float(i["off_ramp"]), float(i["on_ramp"]))
                                      for i in inter)
    if zones is not None:
        fixed["access_zones"] = tuple(AccessZone(int(z.get("lane", 3)), float(z["start"]), float(z["end"]))
                                      for z in zones)
    geo = _build(NetworkGeometry, geo_sec, "geometry", problems, **fixed)
    if geo is not None:
        kw["geometry"] = geo

    dem = _section(data, "demand")
    for key in dem:
        if key not in DEMAND_KEYS:
            problems.append(f"demand.{key} is not a known setting")
    if dem:
        try:
            if "csv" in dem:
                table = demand_from_csv(base_dir / dem["csv"], interval=float(dem.get("interval", 900.0)),
                                        exit_share=float(dem.get("exit_share", 0.15)))
            else:
                zones_tbl = TABLE_DEMAND
                if "zones" in dem:
                    zones_tbl = {k: ZoneDemand(**v) for k, v in dem["zones"].items()}
                table = DemandTable.from_profile(tuple(dem.get("profile", ("avg", "avg", "peak", "peak", "avg"))),
                                                 zones=zones_tbl, interval=float(dem.get("interval", 900.0)),
                                                 exit_share=float(dem.get("exit_share", 0.15)),
                                                 scale=float(dem.get("scale", 1.0)))
            kw["demand"] = table
        except (KeyError, TypeError, ValueError, OSError) as exc:
            problems.append(f"demand: {exc}")

    cacc = _section(data, "cacc")
    if cacc:
        c = dict(cacc)
        if "gap_speed_factor" in c:
            kw["gap_speed_factor"] = c.pop("gap_speed_factor")
        if "v_des_kmh" in c:
            c["v_des"] = c.pop("v_des_kmh") * KMH
        p = _build(IdmParams, c, "cacc", problems, T=1.0)
        if p is not None:
            kw["cacc"] = p
    hum = _section(data, "human")
    if hum:
        h = dict(hum)
        speeds = {k: h.pop(k) for k in ("mean_kmh", "sd_kmh", "min_kmh", "max_kmh") if k in h}
        if speeds:
            kw["human_speeds"] = HumanSpeeds(**speeds)
        p = _build(IdmParams, h, "human", problems)
        if p is not None:
            kw["human"] = p

    lc = dict(_section(data, "lane_change"))
    for key, target in (("cooldown", "lc_cooldown"), ("decision_period", "lc_period"),
                        ("cluster_rule", "cluster_rule"), ("urgency_max", "urgency_max")):
        if key in lc:
            kw[target] = lc.pop(key)
    for sub, target in (("cacc", "lc_cacc"), ("human", "lc_human")):
        if sub in lc:
            p = _build(LaneChangeParams, lc.pop(sub), f"lane_change.{sub}", problems)
            if p is not None:
                kw[target] = p
    for key in lc:
        problems.append(f"lane_change.{key} is not a known setting")

    pl = _section(data, "platoon")
    if pl:
        p = _build(PlatoonParams, pl, "platoon", problems)
        if p is not None:
            kw["platoon"] = p

    cm = dict(_section(data, "comms"))
    if cm:
        try:
            if "kind" in cm:
                cm["kind"] = ChannelKind[str(cm["kind"]).upper()]
            table_path = cm.pop("table", None)
            if table_path is not None:
                d, p = load_table_csv(base_dir / table_path)
                cm["table_distance"], cm["table_probability"] = tuple(d), tuple(p)
                cm.setdefault("kind", ChannelKind.TABLE)
            for key in ("table_distance", "table_probability"):
                if key in cm:
                    cm[key] = tuple(float(x) for x in cm[key])
            ch = _build(ChannelModel, cm, "comms", problems)
            if ch is not None:
                kw["channel"] = ch
        except (KeyError, OSError) as exc:
            problems.append(f"comms: {exc}")

    met = _section(data, "metrics")
    for key in met:
        if key not in ("tick", "fuel_coefficients"):
            problems.append(f"metrics.{key} is not a known setting")
    if "tick" in met:
        kw["tick"] = met["tick"]
    if "fuel_coefficients" in met:
        kw["fuel_coefficients"] = str(base_dir / met["fuel_coefficients"])

    if problems:
        raise ConfigError(problems)
    try:
        cfg = ScenarioConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError([str(exc)])
    return cfg.validate()


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"])
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"])
    return config_from_dict(data, base_dir=path.parent)


def demand_from_csv(path, interval=900.0, exit_share=0.15):
    """Demand rows ``origin,interval,gp_vph,hov_vph`` (one row per origin and interval)."""
    rows = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                k, gp, hov = int(parts[1]), float(parts[2]), float(parts[3])
            except ValueError:
                continue  # header
            rows.setdefault(parts[0], {})[k] = (gp, hov)
    origins = tuple(sorted(rows))
    gp = tuple(tuple(rows[o][k][0] for k in sorted(rows[o])) for o in origins)
    hov = tuple(tuple(rows[o][k][1] for k in sorted(rows[o])) for o in origins)
    return DemandTable(origins, gp, hov, interval, exit_share)
