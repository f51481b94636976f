"""Longitudinal control: IDM, the constant-acceleration heuristic (CAH) and
the blended E-IDM law.

The scalar cores are numba-compiled so the fleet kernels can call them
directly; the public wrappers below take an :class:`IdmParams` and plain
floats and are what tests and notebooks use.

Sign conventions: ``dv = v - v_lead`` is the approach rate (positive when
closing in), gaps are bumper-to-bumper in metres.
"""
import math
from dataclasses import dataclass, replace

from numba import njit

KMH = 1.0 / 3.6
MIN_GAP = 0.1  # floor applied to gaps inside the acceleration laws
DENOM_EPS = 1e-9


@dataclass(frozen=True)
class IdmParams:
    a: float = 2.0  # maximum acceleration [m/s2]
    b: float = 2.0  # desired deceleration [m/s2]
    c: float = 0.99  # coolness factor
    delta: float = 4.0  # free-acceleration exponent
    v_des: float = 105 * KMH  # desired speed [m/s]
    s0: float = 1.0  # minimum gap [m]
    T: float = 1.0  # desired time gap [s]

    def __post_init__(self):
        problems = []
        if not self.a > 0:
            problems.append("a must be > 0")
        if not self.b > 0:
            problems.append("b must be > 0")
        if not 0.0 <= self.c <= 1.0:
            problems.append("c must lie in [0, 1]")
        if not self.delta > 0:
            problems.append("delta must be > 0")
        if not self.v_des > 0:
            problems.append("v_des must be > 0")
        if not self.s0 >= 0:
            problems.append("s0 must be >= 0")
        if not self.T > 0:
            problems.append("T must be > 0")
        if problems:
            raise ValueError("invalid IdmParams: " + ", ".join(problems))

    def with_time_gap(self, T):
        return replace(self, T=T)


# CACC controller defaults; T is overridden by the gap policy.
CACC_IDM = IdmParams()
# Human drivers: a conventional IDM calibration standing in for Wiedemann.
HUMAN_IDM = IdmParams(a=1.4, b=2.0, c=0.0, delta=4.0, v_des=105 * KMH, s0=2.0, T=1.4)


@njit(cache=True)
def _desired_gap(v, dv, a, b, s0, T):
    s = s0 + v * T + v * dv / (2.0 * math.sqrt(a * b))
    return s if s > s0 else s0


@njit(cache=True)
def _idm(v, gap, v_lead, has_leader, a, b, delta, v_des, s0, T):
    free = (v / v_des) ** delta
    if not has_leader:
        return a * (1.0 - free)
    g = gap if gap > MIN_GAP else MIN_GAP
    s = _desired_gap(v, v - v_lead, a, b, s0, T)
    return a * (1.0 - free - (s / g) ** 2)


@njit(cache=True)
def _cah(v, gap, v_lead, a_lead, a):
    a_hat = a_lead if a_lead < a else a
    g = gap if gap > MIN_GAP else MIN_GAP
    if v_lead * (v - v_lead) <= -2.0 * g * a_hat:
        denom = v_lead * v_lead - 2.0 * g * a_hat
        if abs(denom) >= DENOM_EPS:
            return v * v * a_hat / denom
    dv = v - v_lead
    if dv > 0.0:
        return a_hat - dv * dv / (2.0 * g)
    return a_hat


@njit(cache=True)
def _blend(a_idm, a_cah, b, c):
    if a_idm >= a_cah:
        return a_idm
    return (1.0 - c) * a_idm + c * (a_cah + b * math.tanh((a_idm - a_cah) / b))


@njit(cache=True)
def _eidm(v, gap, v_lead, a_lead, has_leader, a, b, c, delta, v_des, s0, T, v_cap):
    """E-IDM acceleration.

    ``v_cap > 0`` selects gap-regulation mode for a V2V-linked follower: the
    free-road term is replaced by a speed envelope at ``v_cap`` so the
    follower settles exactly on the desired gap instead of the IDM's
    speed-inflated equilibrium.
    """
    if not has_leader:
        return a * (1.0 - (v / v_des) ** delta)
    if v_cap > 0.0:
        g = gap if gap > MIN_GAP else MIN_GAP
        s = _desired_gap(v, v - v_lead, a, b, s0, T)
        a_gap = a * (1.0 - (s / g) ** 2)
        a_env = a * (1.0 - (v / v_cap) ** delta)
        a_idm = a_gap if a_gap < a_env else a_env
    else:
        a_idm = _idm(v, gap, v_lead, True, a, b, delta, v_des, s0, T)
    a_cah = _cah(v, gap, v_lead, a_lead, a)
    return _blend(a_idm, a_cah, b, c)


def desired_gap(v, dv, p: IdmParams):
    """Dynamic desired gap s*(v, dv), never below ``p.s0``."""
    if v < 0:
        raise ValueError("speed must be non-negative")
    return _desired_gap(float(v), float(dv), p.a, p.b, p.s0, p.T)


def _check_gap(gap):
    if gap is None or not gap > 0:
        raise ValueError(f"gap must be > 0 when a leader is present (got {gap})")


def idm_accel(v, p: IdmParams, gap=None, v_lead=None):
    """Plain IDM acceleration; ``v_lead=None`` means no leader."""
    if v_lead is None:
        return _idm(float(v), 0.0, 0.0, False, p.a, p.b, p.delta, p.v_des, p.s0, p.T)
    _check_gap(gap)
    return _idm(float(v), float(gap), float(v_lead), True, p.a, p.b, p.delta, p.v_des, p.s0, p.T)


def cah_accel(v, v_lead, a_lead, gap, p: IdmParams):
    _check_gap(gap)
    return _cah(float(v), float(gap), float(v_lead), float(a_lead), p.a)


def eidm_accel(v, p: IdmParams, gap=None, v_lead=None, a_lead=0.0, v_cap=None):
    """E-IDM acceleration of one vehicle.

    Pass ``v_cap`` (a speed in m/s) for a V2V-linked follower; leave it
    ``None`` for ordinary car following.
    """
    cap = 0.0 if v_cap is None else float(v_cap)
    if v_lead is None:
        return _eidm(float(v), 0.0, 0.0, 0.0, False, p.a, p.b, p.c, p.delta, p.v_des, p.s0, p.T, cap)
    _check_gap(gap)
    return _eidm(float(v), float(gap), float(v_lead), float(a_lead), True,
                 p.a, p.b, p.c, p.delta, p.v_des, p.s0, p.T, cap)


def equilibrium_gap(v, p: IdmParams):
    """Steady-state IDM gap behind a leader cruising at ``v`` (< v_des)."""
    free = (v / p.v_des) ** p.delta
    if free >= 1.0:
        return math.inf
    return (p.s0 + v * p.T) / math.sqrt(1.0 - free)
