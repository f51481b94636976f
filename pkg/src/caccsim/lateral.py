"""Lane-change decisions: MOBIL incentive, clustering target choice and
forced merges.

The functions taking a ``world`` evaluate on its current state with the same
compiled routines the simulation step uses, so what a test sees here is
exactly what the step would decide.
"""
from dataclasses import dataclass
from typing import Optional, Sequence

from . import kernel as K
from .fleet import LANE, P_URGENCY_MAX
from .longitudinal import IdmParams, _eidm


@dataclass(frozen=True)
class LaneChangeParams:
    p: float = 0.9  # politeness
    dth: float = 1.0  # switching threshold [m/s2]
    safe_decel: float = 4.0  # largest braking imposed on the new follower [m/s2]

    def __post_init__(self):
        problems = []
        if not self.p >= 0:
            problems.append("p must be >= 0")
        if not self.dth >= 0:
            problems.append("dth must be >= 0")
        if not self.safe_decel > 0:
            problems.append("safe_decel must be > 0")
        if problems:
            raise ValueError("invalid LaneChangeParams: " + ", ".join(problems))


CACC_LC = LaneChangeParams(p=0.9, dth=1.0, safe_decel=4.0)
HUMAN_LC = LaneChangeParams(p=0.25, dth=0.2, safe_decel=4.0)


@dataclass(frozen=True)
class LaneChangeAssessment:
    lane: int
    incentive: float
    passed: bool
    acc_new: float = 0.0  # ego after the change
    acc_new_follower: float = 0.0  # new follower after the change
    acc_old_follower: float = 0.0  # old follower after the change
    acc_now: float = 0.0
    acc_new_follower_now: float = 0.0
    acc_old_follower_now: float = 0.0
    eligible: bool = True
    gaps_ok: bool = True


def mobil_incentive(acc_now, acc_new, n_now, n_new, o_now, o_new, p):
    """Left-hand side of the MOBIL criterion; absent neighbours pass zeros."""
    return (acc_new - acc_now) + p * ((n_new - n_now) + (o_new - o_now))


def mobil_pass(incentive, acc_new_follower, params: LaneChangeParams, has_follower=True, gaps_ok=True):
    if not gaps_ok or not incentive > params.dth:
        return False
    return (not has_follower) or acc_new_follower >= -params.safe_decel


def _side(world, vid, target_lane):
    lane = world.vehicle(vid).lane
    if target_lane == lane + 1:
        return 0
    if target_lane == lane - 1:
        return 1
    raise ValueError(f"lane {target_lane} is not adjacent to lane {lane}")


def mobil_assess(world, vid, target_lane, params: Optional[LaneChangeParams] = None):
    """MOBIL evaluation of moving vehicle ``vid`` into ``target_lane``.

    ``params`` defaults to the class parameters configured in the world.
    """
    side = _side(world, vid, target_lane)
    F, I, P, NB, s = world._kernel_view(vid)
    if params is None:
        params = world.lane_change_params(vid)
    if not K.lane_allowed(F, I, P, world._elig, world._zones, s, target_lane):
        return LaneChangeAssessment(lane=target_lane, incentive=0.0, passed=False, eligible=False)
    _, gaps_ok, a0, a1, n0, n1, o0, o1, has_fn = K.assess(F, I, P, NB, s, side)
    inc = mobil_incentive(a0, a1, n0, n1, o0, o1, params.p)
    return LaneChangeAssessment(
        lane=target_lane, incentive=inc,
        passed=mobil_pass(inc, n1, params, has_fn, gaps_ok),
        acc_new=a1, acc_new_follower=n1, acc_old_follower=o1,
        acc_now=a0, acc_new_follower_now=n0, acc_old_follower_now=o0,
        gaps_ok=gaps_ok)


def select_cluster_target(current_lane, candidates: Sequence[LaneChangeAssessment], rule="min"):
    """Choose among passing clustering candidates.

    ``rule="min"`` takes the smallest incentive (least disturbance), ``"max"``
    the conventional largest.  Ties go to staying in lane, then to the
    leftmost lane.
    """
    passing = [c for c in candidates if c.passed or c.lane == current_lane]
    if not passing:
        return None
    sign = 1.0 if rule == "min" else -1.0
    if rule not in ("min", "max"):
        raise ValueError("rule must be 'min' or 'max'")
    return min(passing, key=lambda c: (sign * c.incentive, c.lane != current_lane, -c.lane))


def urgency(progress, max_factor=1.5):
    """Linear relaxation of the imposed-braking limit along a merge zone."""
    return 1.0 + (max_factor - 1.0) * min(max(progress, 0.0), 1.0)


def merge_acceptable(v, p: IdmParams, T, lead, follow, follow_p: Optional[IdmParams], follow_T,
                     safe_decel, urgency_factor=1.0, lead_vehicle_v_cap=0.0):
    """Forced-merge gap check from plain kinematics.

    ``lead`` is ``(gap, v_lead, a_lead)`` from ego to its would-be leader,
    ``follow`` is ``(gap, v_follower, a_follower)`` from the would-be
    follower to ego; either may be ``None``.  The ego's own braking must stay
    within ``p.b`` and the follower's within ``safe_decel * urgency``.
    """
    gaps_ok = True
    if lead is not None:
        gaps_ok = lead[0] > 0
    if follow is not None:
        gaps_ok = gaps_ok and follow[0] > 0
    if not gaps_ok:
        return False
    if lead is None:
        acc_new = _eidm(v, 0.0, 0.0, 0.0, False, p.a, p.b, p.c, p.delta, p.v_des, p.s0, T, 0.0)
    else:
        acc_new = _eidm(v, lead[0], lead[1], lead[2], True, p.a, p.b, p.c, p.delta, p.v_des, p.s0, T,
                        lead_vehicle_v_cap)
    n_new = 0.0
    if follow is not None:
        q = follow_p
        n_new = _eidm(follow[1], follow[0], v, 0.0, True, q.a, q.b, q.c, q.delta, q.v_des, q.s0,
                      follow_T, 0.0)
    return K.accept_gap(True, acc_new, p.b, follow is not None, n_new, safe_decel, urgency_factor)


@dataclass(frozen=True)
class MergeCommand:
    accept: bool
    target_lane: int
    urgency: float
    accel: float  # acceleration to apply this step if the gap is refused


def mandatory_merge(world, vid):
    """Forced lane change for a ramp vehicle or an exit-bound vehicle.

    Returns the lane-change command, or the braking the vehicle applies
    toward the end of its zone when no acceptable gap exists.
    """
    F, I, P, NB, s = world._kernel_view(vid)
    lane = int(I[LANE, s])
    x = F[K.POS, s]
    if lane < 0:
        span = F[K.WALL, s] - F[K.RAMP_X, s]
        u = urgency((x - F[K.RAMP_X, s]) / span if span > 0 else 1.0, P[P_URGENCY_MAX])
        target, side = 0, 0
    elif K.exit_bound_prep(F, I, P, s) and lane > 0:
        prep = P[K.P_EXIT_PREP]
        u = urgency(1.0 - (F[K.EXIT_X, s] - x) / prep, P[P_URGENCY_MAX])
        target, side = lane - 1, 1
    else:
        raise ValueError(f"vehicle {vid} has no forced lane change pending")
    allowed = K.lane_allowed(F, I, P, world._elig, world._zones, s, target)
    ok = allowed and K.merge_ok(F, I, P, NB, s, side, u)
    a = K.control_accel(F, I, P, NB, s)
    return MergeCommand(accept=bool(ok), target_lane=target if ok else lane, urgency=u, accel=a)
