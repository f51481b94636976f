"""World state, clock, vehicle registry and the fixed-step driver.

A :class:`World` owns the fleet arrays, the per-run random streams and the
event logs, and hands everything to the compiled step in ``kernel``.  Each
step runs, in order: comms sampling, platoon and fallback logic, lane-change
decisions, accelerations from the frozen pre-step state, semi-implicit
integration, exits and entries, then metrics sampling.
"""
from typing import Dict, Iterable, List, Optional

import numpy as np

from . import kernel as K
from .enums import ControlMode, Strategy, VehicleClass
from .errors import ConfigError, OverlapFault, SimulationFault
from .fleet import (
    C_ENTERED,
    C_EX_N,
    C_EXITED,
    C_FALLBACKS,
    C_FAULT_A,
    C_FAULT_B,
    C_LATENT_MAX,
    C_LC_N,
    C_MISSED_EXITS,
    C_NACTIVE,
    C_NEXT_VID,
    C_PL_N,
    C_STARVED,
    C_STEP,
    C_TK_N,
    C_UCUR,
    EX_WIDTH,
    LC_WIDTH,
    N_COUNTERS,
    N_METRICS,
    N_PARAMS,
    P_ACCESS_CONTROL,
    P_CA,
    P_CB,
    P_CC,
    P_CDELTA,
    P_CDTH,
    P_CH_K,
    P_CH_KIND,
    P_CH_LOAD,
    P_CH_MID,
    P_CH_POWER,
    P_CH_RANGE,
    P_COOLDOWN,
    P_CP,
    P_CS0,
    P_CSAFE,
    P_DECIDE_EVERY,
    P_DSRC,
    P_DT,
    P_EXIT_PREP,
    P_FUEL_ON,
    P_HA,
    P_HB,
    P_HC,
    P_HDELTA,
    P_HDTH,
    P_HOLD,
    P_HP,
    P_HS0,
    P_HSAFE,
    P_HT,
    P_JOIN_DV_TOL,
    P_JOIN_GAP_TOL,
    P_LENGTH,
    P_LOSS_K,
    P_MAX_SIZE,
    P_MIN_SIZE,
    P_ML_LANE,
    P_NLANES,
    P_SELECT_MAX,
    P_SPAWN_LOOKAHEAD,
    P_STARVE_DIST,
    P_STRATEGY,
    P_T_INTER,
    P_T_INTRA,
    P_TICK_EVERY,
    P_URGENCY_MAX,
    P_VCAP,
    P_WARMUP,
    PL_WIDTH,
    TK_WIDTH,
    Fleet,
    VehicleState,
)
from .lateral import LaneChangeParams
from .metrics import MetricsLedger, VTMicroCoefficients, load_vtmicro
from .platooning import PlatoonRecord
from .scenario import (
    Arrivals,
    ScenarioConfig,
    build_arrivals,
    eligibility_table,
    managed_lane_seekers,
)

STREAMS = {"demand": 0, "comms": 1, "driver": 2}
VEHICLE_LENGTH = 5.0
UBUF_SIZE = 1 << 16
NEIGHBOR_KEYS = ("leader", "follower", "left_leader", "left_follower", "right_leader", "right_follower")
_STRATEGY_CODE = {s: k for k, s in enumerate(Strategy)}


def make_streams(seed):
    """Independent generators for demand, comms and driver heterogeneity."""
    return {name: np.random.default_rng([int(seed), idx]) for name, idx in STREAMS.items()}


def parameter_vector(cfg: ScenarioConfig, fuel_on=False):
    P = np.zeros(N_PARAMS)
    pl, ch = cfg.platoon, cfg.channel
    P[P_DT] = cfg.dt
    P[P_T_INTRA] = pl.T_intra
    P[P_T_INTER] = pl.T_inter
    P[P_DSRC] = pl.dsrc_range
    P[P_MAX_SIZE] = pl.max_size
    P[P_MIN_SIZE] = pl.min_size
    P[P_LOSS_K] = pl.fallback_loss_threshold
    P[P_HOLD] = pl.rejoin_hold
    P[P_JOIN_GAP_TOL] = pl.join_gap_tol
    P[P_JOIN_DV_TOL] = pl.join_dv_tol
    c, h = cfg.cacc, cfg.human
    P[P_CA], P[P_CB], P[P_CC], P[P_CDELTA], P[P_CS0] = c.a, c.b, c.c, c.delta, c.s0
    P[P_VCAP] = cfg.gap_speed_factor
    P[P_HA], P[P_HB], P[P_HC], P[P_HDELTA], P[P_HS0], P[P_HT] = h.a, h.b, h.c, h.delta, h.s0, h.T
    P[P_CP], P[P_CDTH], P[P_CSAFE] = cfg.lc_cacc.p, cfg.lc_cacc.dth, cfg.lc_cacc.safe_decel
    P[P_HP], P[P_HDTH], P[P_HSAFE] = cfg.lc_human.p, cfg.lc_human.dth, cfg.lc_human.safe_decel
    P[P_COOLDOWN] = cfg.lc_cooldown
    P[P_DECIDE_EVERY] = max(1, int(round(cfg.lc_period / cfg.dt)))
    P[P_SELECT_MAX] = 1.0 if cfg.cluster_rule == "max" else 0.0
    P[P_URGENCY_MAX] = cfg.urgency_max
    P[P_CH_KIND] = int(ch.kind)
    P[P_CH_RANGE], P[P_CH_POWER], P[P_CH_LOAD] = ch.max_range, ch.power, ch.load
    P[P_CH_MID], P[P_CH_K] = ch.midpoint, ch.steepness
    geo = cfg.geometry
    P[P_LENGTH] = geo.length
    P[P_NLANES] = geo.lanes
    P[P_STRATEGY] = _STRATEGY_CODE[cfg.strategy]
    P[P_EXIT_PREP] = geo.exit_prep
    P[P_WARMUP] = cfg.warmup
    P[P_TICK_EVERY] = int(round(cfg.tick / cfg.dt))
    P[P_ML_LANE] = geo.managed_lane
    P[P_ACCESS_CONTROL] = 1.0 if cfg.strategy == Strategy.DLA else 0.0
    P[P_FUEL_ON] = 1.0 if fuel_on else 0.0
    P[P_STARVE_DIST] = cfg.starve_distance
    P[P_SPAWN_LOOKAHEAD] = cfg.spawn_lookahead
    return P


class _Log:
    """Fixed-size kernel log plus the rows already drained from it."""

    def __init__(self, rows, width, counter):
        self.buf = np.zeros((rows, width))
        self.chunks: List[np.ndarray] = []
        self.counter = counter

    def drain(self, C):
        n = int(C[self.counter])
        if n:
            self.chunks.append(self.buf[:n].copy())
            C[self.counter] = 0

    def rows(self, C):
        parts = self.chunks + [self.buf[: int(C[self.counter])]]
        return np.concatenate(parts) if parts else np.zeros((0, self.buf.shape[1]))


class World:
    """One replication of one scenario.

    ``arrivals`` defaults to the demand realised from ``config`` and ``seed``;
    pass :meth:`Arrivals.none` for a scripted world populated with
    :meth:`add_vehicle`.
    """

    def __init__(self, config: ScenarioConfig, seed=None, arrivals: Optional[Arrivals] = None,
                 capacity=None):
        self.config = cfg = config.validate()
        self.seed = int(cfg.seeds[0] if seed is None else seed)
        self.rng = make_streams(self.seed)
        geo = cfg.geometry
        if arrivals is None:
            arrivals = build_arrivals(cfg.demand, geo, cfg.market_penetration, self.rng["demand"],
                                      self.rng["driver"], fold_hov=cfg.strategy.folds_hov,
                                      cacc_vdes=cfg.cacc.v_des, vdes_kmh=cfg.human_speeds.as_tuple())
        self.arrivals = arrivals
        self.fuel = None
        if cfg.fuel_coefficients:
            try:
                self.fuel = load_vtmicro(cfg.fuel_coefficients)
            except (OSError, ValueError, IndexError) as exc:
                raise ConfigError([f"metrics.fuel_coefficients: {exc}"])
        self.P = parameter_vector(cfg, self.fuel is not None)
        self._fuel_k = (self.fuel or VTMicroCoefficients.zeros()).as_array()
        self._elig = eligibility_table(cfg.strategy, geo.lanes)
        self._seek = managed_lane_seekers(cfg.strategy)
        zones = cfg.zones()
        self._zones = np.array([[z.start, z.end] for z in zones], dtype=np.float64).reshape(-1, 2)
        self._off_x = np.array([ic.off_ramp for ic in geo.interchanges], dtype=np.float64)
        self._on_x = np.array([ic.on_ramp for ic in geo.interchanges], dtype=np.float64)
        self._acc_len = float(geo.accel_length)
        n_org = 1 + len(geo.interchanges)
        org = np.asarray(arrivals.origin, dtype=np.int64)
        if org.size and np.any(np.diff(org) < 0):
            raise ValueError("arrivals must be sorted by origin")
        self._org_ptr = np.searchsorted(org, np.arange(n_org), side="left").astype(np.int64)
        self._org_end = np.searchsorted(org, np.arange(n_org), side="right").astype(np.int64)
        self._arr = (np.ascontiguousarray(arrivals.t, dtype=np.float64),
                     np.ascontiguousarray(arrivals.cls, dtype=np.int64),
                     np.ascontiguousarray(arrivals.dest, dtype=np.int64),
                     np.ascontiguousarray(arrivals.vdes, dtype=np.float64),
                     np.ascontiguousarray(arrivals.hv_vdes, dtype=np.float64))
        self._tab_d, self._tab_p = cfg.channel.arrays()
        if self._tab_d.size == 0:
            self._tab_d = np.zeros(1)
            self._tab_p = np.zeros(1)
        if capacity is None:
            jam = 1.0 + VEHICLE_LENGTH
            capacity = int((geo.lanes * geo.length + len(geo.interchanges) * geo.accel_length) / jam) + 64
        self.M = np.zeros(N_METRICS)
        self.C = np.zeros(N_COUNTERS, dtype=np.int64)
        self.C[C_NEXT_VID] = len(arrivals)
        self.fleet = Fleet(0, len(arrivals) + 1)
        self._alloc(int(capacity))
        steps = int(round(cfg.horizon / cfg.dt))
        tick_every = int(self.P[P_TICK_EVERY])
        self._tk = _Log(steps // tick_every + 8, TK_WIDTH, C_TK_N)
        self.ubuf = self.rng["comms"].random(UBUF_SIZE)
        self._nb_version = -1

    # ------------------------------------------------------------ storage

    def _alloc(self, capacity):
        old = self.fleet
        n = int(self.C[C_NACTIVE])
        fl = Fleet(capacity, old.slot_of.size)
        fl.F[:, :n] = old.F[:, :n]
        fl.I[:, :n] = old.I[:, :n]
        fl.slot_of[:] = old.slot_of
        self.fleet = fl
        self._order = np.zeros(capacity, dtype=np.int64)
        self._rank = np.zeros(capacity, dtype=np.int64)
        self._lstart = np.zeros(self.config.geometry.lanes + 1, dtype=np.int64)
        self._lend = np.zeros(self.config.geometry.lanes + 1, dtype=np.int64)
        self._NB = np.full((6, capacity), -1, dtype=np.int64)
        self._gf = np.zeros(capacity, dtype=np.int64)
        self._scratch = np.zeros(capacity, dtype=np.int64)
        self._acc = np.zeros(capacity)
        logs = getattr(self, "_logs", None)
        rows_lc = 8 * capacity + 1024
        rows_pl = 16 * capacity + 1024
        if logs is None:
            self._logs = {"lc": _Log(rows_lc, LC_WIDTH, C_LC_N), "pl": _Log(rows_pl, PL_WIDTH, C_PL_N),
                          "ex": _Log(rows_lc, EX_WIDTH, C_EX_N)}
        else:
            for key, rows in (("lc", rows_lc), ("pl", rows_pl), ("ex", rows_lc)):
                logs[key].drain(self.C)
                logs[key].buf = np.zeros((rows, logs[key].buf.shape[1]))
        self._nb_version = -1

    @property
    def F(self):
        return self.fleet.F

    @property
    def I(self):
        return self.fleet.I

    @property
    def n_active(self):
        return int(self.C[C_NACTIVE])

    def _args(self):
        fl = self.fleet
        return (fl.F, fl.I, fl.slot_of, self.P, self._elig, self._seek, self._zones, self._off_x,
                self._on_x, self._acc_len, *self._arr, self._org_ptr, self._org_end,
                self._tab_d, self._tab_p, self._fuel_k, self._logs["lc"].buf, self._logs["pl"].buf,
                self._logs["ex"].buf, self._tk.buf, self.M, self.C, self.ubuf, self._order,
                self._rank, self._lstart, self._lend, self._NB, self._gf, self._scratch, self._acc)

    def _drain(self):
        for log in (*self._logs.values(), self._tk):
            log.drain(self.C)

    def _grow_logs(self):
        for log in (*self._logs.values(), self._tk):
            log.drain(self.C)
            log.buf = np.zeros((2 * log.buf.shape[0], log.buf.shape[1]))

    def _refill(self):
        cur = int(self.C[C_UCUR])
        self.ubuf = np.concatenate([self.ubuf[cur:], self.rng["comms"].random(UBUF_SIZE)])
        self.C[C_UCUR] = 0

    # ------------------------------------------------------------ clock

    @property
    def dt(self):
        return self.config.dt

    @property
    def clock(self):
        return int(self.C[C_STEP]) * self.config.dt

    @property
    def steps(self):
        return int(self.C[C_STEP])

    def step(self, n=1):
        """Advance ``n`` steps."""
        self._advance(int(self.C[C_STEP]) + int(n))
        return self

    def run(self, until=None):
        """Advance to ``until`` seconds (default: the configured horizon)."""
        t = self.config.horizon if until is None else until
        self._advance(int(round(t / self.config.dt)))
        return self

    def _advance(self, end_step):
        stalls = 0
        while self.C[C_STEP] < end_step:
            status, done = K.run_steps(*self._args(), end_step - int(self.C[C_STEP]))
            self._nb_version = -1
            if status == K.OK:
                continue
            if status == K.DRAIN:
                self._drain()
                stalls = stalls + 1 if done == 0 else 0
                if stalls > 1:
                    self._grow_logs()
            elif status == K.REFILL:
                self._refill()
            else:
                self._fault()

    def _fault(self):
        a, b = int(self.C[C_FAULT_A]), int(self.C[C_FAULT_B])
        dump = {"t": self.clock, "step": self.steps, "leader": a, "follower": b,
                "vehicles": [self.vehicle(v) for v in (a, b) if v >= 0 and self.has_vehicle(v)]}
        if a == -3:
            raise SimulationFault(f"vehicle conservation broken at t={self.clock:.1f}s", dump)
        if a == -1:
            raise OverlapFault(f"vehicle {b} ran past the end of its acceleration lane at "
                               f"t={self.clock:.1f}s", dump)
        raise OverlapFault(f"vehicles {a} and {b} overlap at t={self.clock:.1f}s", dump)

    # ------------------------------------------------------------ registry

    def has_vehicle(self, vid):
        sl = self.fleet.slot_of
        return 0 <= vid < sl.size and sl[vid] >= 0

    def _slot(self, vid):
        if not self.has_vehicle(vid):
            raise KeyError(f"no vehicle {vid} on the network")
        return int(self.fleet.slot_of[vid])

    def vehicle(self, vid) -> VehicleState:
        return self.fleet.snapshot(self._slot(vid))

    def vehicles(self) -> List[VehicleState]:
        """Snapshots of every vehicle present, sorted by id."""
        out = [self.fleet.snapshot(s) for s in range(self.n_active)]
        return sorted(out, key=lambda v: v.id)

    def add_vehicle(self, cls, lane, position, speed, v_des=None, length=VEHICLE_LENGTH,
                    dest=None, origin=0, mode=ControlMode.ADS, accel=0.0):
        """Place a vehicle directly on the network; returns its id.

        ``v_des`` defaults to the class default.  ``dest`` indexes the
        off-ramps (default: the downstream end).
        """
        cfg = self.config
        geo = cfg.geometry
        cls = VehicleClass(cls)
        if not -1 <= lane < geo.lanes:
            raise ValueError(f"lane {lane} does not exist")
        if speed < 0:
            raise ValueError("speed must be non-negative")
        n = self.n_active
        if n >= self.fleet.capacity:
            self._alloc(2 * self.fleet.capacity)
        vid = int(self.C[C_NEXT_VID])
        self.C[C_NEXT_VID] += 1
        self.fleet.ensure_vids(vid + 1)
        n_off = len(geo.interchanges)
        dest = n_off if dest is None else int(dest)
        F, I = self.fleet.F, self.fleet.I
        s = n
        F[:, s] = 0.0
        I[:, s] = -1
        if v_des is None:
            v_des = cfg.cacc.v_des if cls == VehicleClass.CACC else cfg.human.v_des
        F[K.POS, s] = position
        F[K.SPEED, s] = speed
        F[K.ACC, s] = accel
        F[K.LEN, s] = length
        F[K.VDES, s] = v_des
        F[K.HV_VDES, s] = v_des if cls != VehicleClass.CACC else cfg.human.v_des
        F[K.ENTRY_T, s] = self.clock
        F[K.EXIT_X, s] = self._off_x[dest] if dest < n_off else geo.length
        F[K.WALL, s] = 1.0e12
        F[K.RAMP_X, s] = -1.0
        F[K.LC_T, s] = -1.0e9
        F[K.JOIN_T, s] = -1.0
        if lane < 0:
            ramp = [k for k, x in enumerate(self._on_x) if x <= position <= x + self._acc_len]
            if not ramp:
                raise ValueError(f"no acceleration lane at x={position}")
            F[K.RAMP_X, s] = self._on_x[ramp[0]]
            F[K.WALL, s] = self._on_x[ramp[0]] + self._acc_len
            origin = ramp[0] + 1
        I[K.VID, s] = vid
        I[K.LANE, s] = lane
        I[K.CLS, s] = int(cls)
        I[K.ORIGIN, s] = origin
        I[K.DEST, s] = dest
        I[K.PID, s] = -1
        I[K.GPRED, s] = -1
        I[K.MODE, s] = int(mode)
        I[K.MISS, s] = 0
        I[K.LINK, s] = K.NO_LINK
        I[K.STARVED, s] = 0
        I[K.MISSED, s] = 0
        I[K.DEPTH, s] = 1
        I[K.GSIZE, s] = 1
        I[K.EST, s] = 0
        self.fleet.slot_of[vid] = s
        self.C[C_NACTIVE] = n + 1
        self.C[C_ENTERED] += 1
        self._nb_version = -1
        return vid

    def _refresh(self):
        if self._nb_version != int(self.C[C_STEP]):
            fl = self.fleet
            K.refresh(fl.F, fl.I, self.n_active, self.config.geometry.lanes, self._order, self._rank,
                      self._lstart, self._lend, self._NB)
            self._nb_version = int(self.C[C_STEP])

    def _regroup(self):
        fl = self.fleet
        K.regroup(fl.F, fl.I, self.P, fl.slot_of, self.n_active, self._gf,
                  self._logs["pl"].buf, self.C, self.clock)

    def _kernel_view(self, vid):
        """Raw arrays and slot for a compiled helper evaluated on ``vid``."""
        self._refresh()
        return self.fleet.F, self.fleet.I, self.P, self._NB, self._slot(vid)

    def neighbors(self, vid) -> Dict[str, Optional[VehicleState]]:
        """Nearest vehicles ahead and behind in the own and adjacent lanes.

        Left is the next lane toward the managed lane.  An adjacent-lane
        vehicle level with the ego counts as its leader there.  Absent
        neighbours map to None.
        """
        _, _, _, NB, s = self._kernel_view(vid)
        return {key: (self.fleet.snapshot(int(NB[k, s])) if NB[k, s] >= 0 else None)
                for k, key in enumerate(NEIGHBOR_KEYS)}

    def lane_order(self, lane) -> List[int]:
        """Vehicle ids in ``lane``, upstream first."""
        self._refresh()
        lo, hi = self._lstart[lane + 1], self._lend[lane + 1]
        return [int(self.fleet.I[K.VID, self._order[k]]) for k in range(lo, hi)]

    def lane_change_params(self, vid) -> LaneChangeParams:
        s = self._slot(vid)
        return self.config.lc_human if K.is_human(self.fleet.I, s) else self.config.lc_cacc

    # ------------------------------------------------------------ platoons

    def form_platoon(self, vids: Iterable[int]):
        """Link consecutive same-lane CACC vehicles (front to rear) into one
        group, as if each had rear-joined the one ahead."""
        vids = [int(v) for v in vids]
        if len(vids) < 2:
            raise ValueError("a group needs at least two vehicles")
        if len(vids) > self.config.platoon.max_size:
            raise ValueError("group larger than platoon.max_size")
        I = self.fleet.I
        for front, rear in zip(vids, vids[1:]):
            st = self.vehicle(rear)
            if st.cls != VehicleClass.CACC or self.vehicle(front).cls != VehicleClass.CACC:
                raise ValueError("only CACC vehicles form platoons")
            lead = self.neighbors(rear)["leader"]
            if lead is None or lead.id != front:
                raise ValueError(f"vehicle {rear} is not directly behind {front}")
        for v in vids:
            if I[K.GPRED, self._slot(v)] >= 0:
                raise ValueError(f"vehicle {v} already follows a group member")
        for front, rear in zip(vids, vids[1:]):
            s = self._slot(rear)
            I[K.GPRED, s] = front
            I[K.LINK, s] = 1
            self.fleet.F[K.JOIN_T, s] = self.clock
        self.fleet.F[K.JOIN_T, self._slot(vids[0])] = self.clock
        self._regroup()
        return self.vehicle(vids[0]).platoon[0]

    def platoons(self, include_pending=True) -> List[PlatoonRecord]:
        """Current groups as ordered records, most downstream first."""
        F, I = self.fleet.F, self.fleet.I
        n = self.n_active
        groups: Dict[int, list] = {}
        for s in range(n):
            pid = int(I[K.PID, s])
            if pid >= 0:
                groups.setdefault(pid, []).append((int(I[K.DEPTH, s]), int(I[K.VID, s]), float(F[K.JOIN_T, s])))
        pl = self.config.platoon
        out = []
        for pid, members in groups.items():
            members.sort()
            rec = PlatoonRecord(pid, tuple(m[1] for m in members), tuple(m[2] for m in members),
                                pl.min_size, pl.max_size)
            if include_pending or rec.established:
                out.append(rec)
        out.sort(key=lambda r: -F[K.POS, self.fleet.slot_of[r.leader]])
        return out

    # ------------------------------------------------------------ logs

    @property
    def lane_changes(self):
        """Rows of (t, vid, cls, from, to, position, kind, incentive)."""
        return self._logs["lc"].rows(self.C)

    @property
    def platoon_events(self):
        """Rows of (t, code, pid, vid, size); codes index ``EVENT_NAMES``."""
        return self._logs["pl"].rows(self.C)

    @property
    def exits(self):
        """Rows of (vid, cls, origin, dest, entry_t, exit_t, missed, starved)."""
        return self._logs["ex"].rows(self.C)

    @property
    def ticks(self):
        """Rows of (t, n_cacc, n_platooned, n_platoons, depth_sum, violations, latent)."""
        return self._tk.rows(self.C)

    @property
    def entered(self):
        return int(self.C[C_ENTERED])

    @property
    def exited(self):
        return int(self.C[C_EXITED])

    @property
    def fallback_count(self):
        return int(self.C[C_FALLBACKS])

    @property
    def missed_exit_count(self):
        return int(self.C[C_MISSED_EXITS])

    @property
    def starved_count(self):
        return int(self.C[C_STARVED])

    @property
    def latent_max(self):
        return int(self.C[C_LATENT_MAX])

    @property
    def pending_arrivals(self):
        """Arrivals due by now that have not entered yet (latent demand)."""
        t = self.clock
        return int(sum(np.searchsorted(self._arr[0][p:e], t, side="right")
                       for p, e in zip(self._org_ptr, self._org_end)))

    @property
    def fuel_enabled(self):
        return self.fuel is not None

    def ledger(self) -> MetricsLedger:
        return MetricsLedger.from_world(self)


def simulate(config: ScenarioConfig, seed=None) -> World:
    """Build and run one replication to the configured horizon."""
    return World(config, seed).run()
