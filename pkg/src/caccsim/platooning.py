"""CACC clustering: rear joins, platoon bookkeeping, the intra/inter time-gap
policy and the communication fallback loop.

Inside a running world, platoons are stored as links from each follower to
its group predecessor; :class:`PlatoonRecord` is the detached, ordered view
of one such chain.  A two-vehicle chain is a pending pair and only counts as
a platoon once it reaches ``min_size``.
"""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from . import kernel as K
from .enums import ControlMode, VehicleClass
from .errors import ConfigError, JoinRejected


@dataclass(frozen=True)
class PlatoonParams:
    T_intra: float = 1.0  # s, toward a communicating platoon predecessor
    T_inter: float = 1.2  # s, toward anything else
    dsrc_range: float = 300.0  # m
    max_size: int = 7
    min_size: int = 3
    fallback_loss_threshold: int = 3  # consecutive missed beacons
    rejoin_hold: float = 2.0  # s of restored reception before ADS resumes
    join_gap_tol: float = 0.1  # fraction of the intra-platoon desired gap
    join_dv_tol: float = 1.0  # m/s

    def violations(self):
        out = []
        if not self.T_intra > 0:
            out.append("platoon.T_intra must be > 0")
        if not self.T_intra < self.T_inter:
            out.append("platoon.T_intra must be < platoon.T_inter")
        if not 2 <= self.min_size <= self.max_size:
            out.append("platoon.min_size must satisfy 2 <= min_size <= max_size")
        if not self.dsrc_range > 0:
            out.append("platoon.dsrc_range must be > 0")
        if not self.fallback_loss_threshold >= 1:
            out.append("platoon.fallback_loss_threshold must be >= 1")
        if not self.rejoin_hold >= 0:
            out.append("platoon.rejoin_hold must be >= 0")
        return out

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class PlatoonRecord:
    id: int
    members: Tuple[int, ...]  # front to rear
    formed_at: Tuple[float, ...] = field(default=())
    min_size: int = 3
    max_size: int = 7

    @property
    def leader(self):
        return self.members[0]

    @property
    def size(self):
        return len(self.members)

    @property
    def established(self):
        return self.size >= self.min_size

    @property
    def pending(self):
        return self.size == 2 and not self.established

    def depth_of(self, vid):
        return self.members.index(vid) + 1


def join_rear(platoon: PlatoonRecord, vehicle, world=None, t=0.0):
    """Append ``vehicle`` behind the last member.

    With a ``world`` the joiner must be the rear member's immediate follower
    in the same lane; otherwise only the size cap is checked.
    """
    vid = getattr(vehicle, "id", vehicle)
    if platoon.size >= platoon.max_size:
        raise JoinRejected(f"platoon {platoon.id} is full ({platoon.size})")
    if vid in platoon.members:
        raise JoinRejected(f"vehicle {vid} is already a member")
    if world is not None:
        nb = world.neighbors(vid)
        lead = nb["leader"]
        if lead is None or lead.id != platoon.members[-1]:
            raise JoinRejected(f"vehicle {vid} is not directly behind the rear member")
        if world.vehicle(vid).cls != VehicleClass.CACC:
            raise JoinRejected(f"vehicle {vid} is not CACC-equipped")
    formed = platoon.formed_at or tuple(0.0 for _ in platoon.members)
    return PlatoonRecord(platoon.id, platoon.members + (vid,), formed + (t,),
                         platoon.min_size, platoon.max_size)


def integrity_check(platoon: PlatoonRecord, world) -> List[PlatoonRecord]:
    """Split ``platoon`` wherever its members stopped being consecutive.

    Returns the surviving fragments with at least two members, most
    downstream first; the first one keeps the platoon id.  Single leftovers
    become free agents and are not returned.
    """
    present = [vid for vid in platoon.members if world.has_vehicle(vid)]
    if not present:
        return []
    formed = dict(zip(platoon.members, platoon.formed_at or (0.0,) * platoon.size))
    fragments = [[present[0]]]
    for prev, vid in zip(present, present[1:]):
        lead = world.neighbors(vid)["leader"]
        state = world.vehicle(vid)
        ok = (lead is not None and lead.id == prev and lead.lane == state.lane
              and state.control_mode == ControlMode.ADS
              and world.vehicle(prev).control_mode == ControlMode.ADS)
        if ok:
            fragments[-1].append(vid)
        else:
            fragments.append([vid])
    out = []
    next_id = platoon.id
    for frag in fragments:
        if len(frag) < 2:
            continue
        out.append(PlatoonRecord(next_id, tuple(frag), tuple(formed[v] for v in frag),
                                 platoon.min_size, platoon.max_size))
        next_id = -1  # later fragments get fresh ids from the caller
    return out


def gap_policy(ego, world, comms_ok, params: PlatoonParams):
    """Desired time gap for CACC vehicle ``ego`` this step."""
    state = world.vehicle(getattr(ego, "id", ego))
    if state.cls != VehicleClass.CACC:
        raise ValueError("gap policy applies to CACC vehicles only")
    if state.control_mode != ControlMode.ADS or not comms_ok or state.platoon is None:
        return params.T_inter
    lead = world.neighbors(state.id)["leader"]
    if (lead is not None and state.established and lead.platoon is not None
            and lead.platoon[0] == state.platoon[0]
            and lead.platoon[1] == state.platoon[1] - 1):
        return params.T_intra
    return params.T_inter


@dataclass(frozen=True)
class Action:
    kind: str  # "seek", "approach", "join" or "none"
    target: Optional[int] = None


def free_agent_step(ego, world):
    """Clustering action a free agent would take in the current state."""
    vid = getattr(ego, "id", ego)
    state = world.vehicle(vid)
    if (state.cls != VehicleClass.CACC or state.control_mode != ControlMode.ADS
            or state.platoon is not None or state.lane < 0):
        return Action("none")
    F, I, P, NB, s = world._kernel_view(vid)
    lead = NB[0, s]
    if K.valid_target(F, I, P, s, lead):
        v = F[K.SPEED, s]
        gap = F[K.POS, lead] - F[K.LEN, lead] - F[K.POS, s]
        s0 = P[K.P_CS0]
        err = abs(gap - (s0 + v * P[K.P_T_INTER]))
        if (err < P[K.P_JOIN_GAP_TOL] * (s0 + v * P[K.P_T_INTRA])
                and abs(v - F[K.SPEED, lead]) < P[K.P_JOIN_DV_TOL]):
            return Action("join", int(I[K.VID, lead]))
        return Action("approach", int(I[K.VID, lead]))
    for side in range(2):
        cand = NB[2 + 2 * side, s]
        if K.valid_target(F, I, P, s, cand):
            return Action("seek", int(I[K.VID, cand]))
    return Action("none")


@dataclass(frozen=True)
class FallbackState:
    mode: ControlMode = ControlMode.ADS
    misses: int = 0
    ok_time: float = 0.0


def fallback_loop(state: FallbackState, outcomes: Sequence[Optional[bool]], params: PlatoonParams,
                  dt=0.1, in_platoon=True):
    """Run the fallback loop over a sequence of beacon outcomes.

    Each outcome is True (received), False (missed) or None (no sender).
    Returns the final state and the list of ``(beacon index, event)`` pairs
    with events ``"fallback"`` and ``"restore"``.  A vehicle that falls back
    leaves its platoon, so later misses only matter again after it rejoins;
    ``in_platoon`` says whether misses count at the start.
    """
    mode, miss, ok_time = int(state.mode), state.misses, state.ok_time
    counts = in_platoon
    events = []
    for i, rx in enumerate(outcomes):
        link = -1 if rx is None else int(bool(rx))
        mode, miss, ok_time, ev = K.fallback_update(mode, miss, ok_time, counts, link, dt,
                                                    params.fallback_loss_threshold, params.rejoin_hold)
        if ev == 1:
            events.append((i, "fallback"))
            counts = False
        elif ev == 2:
            events.append((i, "restore"))
    return FallbackState(ControlMode(mode), miss, ok_time), events
