"""Compiled simulation step.

Everything that runs once per vehicle per step lives here so a desk-scale
run stays in compiled code end to end.  The Python layer (``core.World``)
owns allocation, random streams and log draining; these functions only read
and write the arrays they are handed.

Slots in the neighbour table ``NB`` are: 0 leader, 1 follower, 2 left
leader, 3 left follower, 4 right leader, 5 right follower (-1 when absent).
"""
import math

import numpy as np
from numba import njit

from .comms import _reception
from .fleet import (
    ACC,
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
    C_PID_NEXT,
    C_PL_N,
    C_STARVED,
    C_STEP,
    C_TK_N,
    C_UCUR,
    CLS,
    DEPTH,
    DEST,
    ENTRY_T,
    EST,
    EV_DISSOLVE,
    EV_ESTABLISH,
    EV_FALLBACK,
    EV_JOIN,
    EV_LEAVE,
    EV_RESTORE,
    EV_SPLIT,
    EXIT_X,
    GPRED,
    GSIZE,
    HV_VDES,
    JOIN_T,
    LANE,
    LC_T,
    LEN,
    LINK,
    M_CACC_S,
    M_DEPTH_N,
    M_DEPTH_SUM,
    M_FUEL_L,
    M_MEAS_S,
    M_PLAT_S,
    M_SHARE_N,
    M_SHARE_SUM,
    M_SPD_M2,
    M_SPD_MEAN,
    M_SPD_N,
    M_VHT_S,
    M_VMT_M,
    MISS,
    MISSED,
    MODE,
    NO_LINK,
    OK_TIME,
    ORIGIN,
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
    P_T_INTER,
    P_T_INTRA,
    P_TICK_EVERY,
    P_URGENCY_MAX,
    P_VCAP,
    P_WARMUP,
    PID,
    POS,
    RAMP_X,
    SPEED,
    STARVED,
    VDES,
    VID,
    WALL,
)
from .longitudinal import _eidm

CACC = 2
STOP_SPEED = 0.1  # m/s, below which a vehicle counts as stopped
ADS = 0
FALLBACK = 1

KIND_DISCRETIONARY = 1
KIND_CLUSTER = 2
KIND_MANDATORY = 3
KIND_RAMP = 4

OK = 0
DRAIN = 1
REFILL = 2
FAULT = 3


# ---------------------------------------------------------------- ordering

@njit(cache=True)
def sort_lanes(F, I, n, nl, order, rank, lstart, lend):
    keys = np.empty(n)
    for s in range(n):
        keys[s] = (I[LANE, s] + 1) * 1.0e7 + F[POS, s]
    o = np.argsort(keys, kind="mergesort")
    for k in range(nl + 1):
        lstart[k] = 0
        lend[k] = 0
    for k in range(n):
        order[k] = o[k]
        rank[o[k]] = k
        lend[I[LANE, o[k]] + 1] += 1
    acc = 0
    for k in range(nl + 1):
        c = lend[k]
        lstart[k] = acc
        acc += c
        lend[k] = acc


@njit(cache=True)
def _first_at_or_ahead(F, order, lo, hi, x):
    while lo < hi:
        mid = (lo + hi) // 2
        if F[POS, order[mid]] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def neighbor_table(F, I, n, nl, order, rank, lstart, lend, NB):
    for s in range(n):
        lane = I[LANE, s]
        li = lane + 1
        k = rank[s]
        NB[0, s] = order[k + 1] if k + 1 < lend[li] else -1
        NB[1, s] = order[k - 1] if k - 1 >= lstart[li] else -1
        for side in range(2):
            tl = lane + 1 if side == 0 else lane - 1
            if tl < 0 or tl >= nl:
                NB[2 + 2 * side, s] = -1
                NB[3 + 2 * side, s] = -1
                continue
            ti = tl + 1
            j = _first_at_or_ahead(F, order, lstart[ti], lend[ti], F[POS, s])
            NB[2 + 2 * side, s] = order[j] if j < lend[ti] else -1
            NB[3 + 2 * side, s] = order[j - 1] if j - 1 >= lstart[ti] else -1


@njit(cache=True)
def refresh(F, I, n, nl, order, rank, lstart, lend, NB):
    sort_lanes(F, I, n, nl, order, rank, lstart, lend)
    neighbor_table(F, I, n, nl, order, rank, lstart, lend, NB)


# ---------------------------------------------------------------- control laws

@njit(cache=True)
def is_human(I, s):
    return I[CLS, s] != CACC or I[MODE, s] == FALLBACK


@njit(cache=True)
def valid_target(F, I, P, s, ld):
    """Can CACC vehicle ``s`` cluster behind ``ld``?"""
    if ld < 0 or I[CLS, ld] != CACC or I[MODE, ld] != ADS or I[LANE, ld] < 0:
        return False
    if F[POS, ld] - F[POS, s] > P[P_DSRC]:
        return False
    return I[DEPTH, ld] == I[GSIZE, ld] and I[GSIZE, ld] < P[P_MAX_SIZE]


@njit(cache=True)
def gap_time(F, I, P, s, ld):
    if I[CLS, s] != CACC:
        return P[P_HT]
    if I[MODE, s] != ADS:
        return P[P_T_INTER]
    if (ld >= 0 and I[GPRED, s] == I[VID, ld] and I[EST, s] == 1
            and I[LINK, s] == 1):
        return P[P_T_INTRA]
    return P[P_T_INTER]


@njit(cache=True)
def speed_cap(F, I, P, s, ld):
    """Envelope speed for gap regulation, 0 when following normally."""
    if I[CLS, s] != CACC or I[MODE, s] != ADS or ld < 0:
        return 0.0
    if I[GPRED, s] == I[VID, ld] or (I[GSIZE, s] == 1 and valid_target(F, I, P, s, ld)):
        return P[P_VCAP] * F[VDES, s]
    return 0.0


@njit(cache=True)
def accel(F, I, P, s, ld, use_wall, T, vcap):
    if is_human(I, s):
        a = P[P_HA]
        b = P[P_HB]
        c = P[P_HC]
        delta = P[P_HDELTA]
        s0 = P[P_HS0]
        vdes = F[HV_VDES, s]
    else:
        a = P[P_CA]
        b = P[P_CB]
        c = P[P_CC]
        delta = P[P_CDELTA]
        s0 = P[P_CS0]
        vdes = F[VDES, s]
    x = F[POS, s]
    has = False
    gap = 0.0
    vl = 0.0
    al = 0.0
    if ld >= 0:
        has = True
        gap = F[POS, ld] - F[LEN, ld] - x
        vl = F[SPEED, ld]
        al = F[ACC, ld]
    if use_wall:
        gw = F[WALL, s] - x
        if (not has) or gw < gap:
            has = True
            gap = gw
            vl = 0.0
            al = 0.0
    return _eidm(F[SPEED, s], gap, vl, al, has, a, b, c, delta, vdes, s0, T, vcap)


@njit(cache=True)
def accel_behind(F, I, P, s, ld, use_wall):
    """Acceleration of ``s`` if ``ld`` were its leader, under its own policy."""
    return accel(F, I, P, s, ld, use_wall, gap_time(F, I, P, s, ld), speed_cap(F, I, P, s, ld))


# ---------------------------------------------------------------- lane changing

@njit(cache=True)
def in_zone(zones, x):
    for z in range(zones.shape[0]):
        if zones[z, 0] <= x <= zones[z, 1]:
            return True
    return False


@njit(cache=True)
def lane_allowed(F, I, P, elig, zones, s, tl):
    lane = I[LANE, s]
    if tl < 0 or tl >= P[P_NLANES]:
        return False
    if lane < 0:
        return tl == 0
    if elig[I[CLS, s], tl] == 0:
        return False
    ml = int(P[P_ML_LANE])
    if P[P_ACCESS_CONTROL] > 0 and ((lane == ml - 1 and tl == ml) or (lane == ml and tl == ml - 1)):
        return in_zone(zones, F[POS, s])
    return True


@njit(cache=True)
def assess(F, I, P, NB, s, side):
    """Projected accelerations for moving ``s`` to its left (0) or right (1) lane.

    Returns (incentive, gaps_ok, acc_now, acc_new, n_now, n_new, o_now, o_new,
    has_new_follower).
    """
    ln = NB[2 + 2 * side, s]
    fn = NB[3 + 2 * side, s]
    lo = NB[0, s]
    fo = NB[1, s]
    on_ramp = I[LANE, s] < 0
    x = F[POS, s]
    gaps_ok = True
    if ln >= 0 and F[POS, ln] - F[LEN, ln] - x <= 0.0:
        gaps_ok = False
    if fn >= 0 and x - F[LEN, s] - F[POS, fn] <= 0.0:
        gaps_ok = False
    acc_now = accel_behind(F, I, P, s, lo, on_ramp)
    acc_new = accel_behind(F, I, P, s, ln, False)
    n_now = 0.0
    n_new = 0.0
    if fn >= 0 and gaps_ok:
        n_now = accel_behind(F, I, P, fn, NB[0, fn], False)
        n_new = accel_behind(F, I, P, fn, s, False)
    o_now = 0.0
    o_new = 0.0
    if fo >= 0:
        o_now = accel_behind(F, I, P, fo, s, on_ramp)
        o_new = accel_behind(F, I, P, fo, lo, on_ramp)
    p = P[P_HP] if is_human(I, s) else P[P_CP]
    incentive = (acc_new - acc_now) + p * ((n_new - n_now) + (o_new - o_now))
    return incentive, gaps_ok, acc_now, acc_new, n_now, n_new, o_now, o_new, fn >= 0


@njit(cache=True)
def mobil_pass(I, P, s, incentive, gaps_ok, n_new, has_fn):
    if is_human(I, s):
        dth = P[P_HDTH]
        safe = P[P_HSAFE]
    else:
        dth = P[P_CDTH]
        safe = P[P_CSAFE]
    if not gaps_ok or incentive <= dth:
        return False
    return (not has_fn) or n_new >= -safe


@njit(cache=True)
def accept_gap(gaps_ok, acc_new, b, has_fn, n_new, safe, urgency):
    """Forced-merge rule: own braking within ``b``, imposed braking within
    ``safe * urgency``."""
    if not gaps_ok or acc_new < -b:
        return False
    return (not has_fn) or n_new >= -safe * urgency


@njit(cache=True)
def merge_ok(F, I, P, NB, s, side, urgency):
    """Gap acceptance for a lane change the vehicle has to make."""
    incentive, gaps_ok, acc_now, acc_new, n_now, n_new, o_now, o_new, has_fn = assess(F, I, P, NB, s, side)
    b = P[P_HB] if is_human(I, s) else P[P_CB]
    safe = P[P_HSAFE] if is_human(I, s) else P[P_CSAFE]
    return accept_gap(gaps_ok, acc_new, b, has_fn, n_new, safe, urgency)


@njit(cache=True)
def _urgency(P, frac):
    if frac < 0.0:
        frac = 0.0
    elif frac > 1.0:
        frac = 1.0
    return 1.0 + (P[P_URGENCY_MAX] - 1.0) * frac


@njit(cache=True)
def exit_bound_prep(F, I, P, s):
    return F[EXIT_X, s] < P[P_LENGTH] and F[EXIT_X, s] - F[POS, s] <= P[P_EXIT_PREP]


@njit(cache=True)
def decide(F, I, P, NB, elig, seek_ml, zones, s):
    """Lane-change proposal for one vehicle: (target lane, kind, incentive)."""
    lane = I[LANE, s]
    x = F[POS, s]
    ml = int(P[P_ML_LANE])
    if lane < 0:
        span = F[WALL, s] - F[RAMP_X, s]
        u = _urgency(P, (x - F[RAMP_X, s]) / span if span > 0 else 1.0)
        if merge_ok(F, I, P, NB, s, 0, u):
            return 0, KIND_RAMP, 0.0
        return lane, 0, 0.0
    exiting = F[EXIT_X, s] < P[P_LENGTH]
    if exit_bound_prep(F, I, P, s):
        if lane == 0:
            return lane, 0, 0.0
        u = _urgency(P, 1.0 - (F[EXIT_X, s] - x) / P[P_EXIT_PREP])
        if lane_allowed(F, I, P, elig, zones, s, lane - 1) and merge_ok(F, I, P, NB, s, 1, u):
            return lane - 1, KIND_MANDATORY, 0.0
        return lane, 0, 0.0
    if I[GSIZE, s] > 1:
        return lane, 0, 0.0  # group members hold their lane
    if seek_ml[I[CLS, s]] != 0 and not exiting:
        if lane == ml:
            return lane, 0, 0.0
        if lane_allowed(F, I, P, elig, zones, s, lane + 1) and merge_ok(F, I, P, NB, s, 0, 1.0):
            return lane + 1, KIND_MANDATORY, 0.0
        return lane, 0, 0.0
    human = is_human(I, s)
    if not human and not valid_target(F, I, P, s, NB[0, s]):
        best = -1
        best_inc = 0.0
        for side in range(2):
            tl = lane + 1 if side == 0 else lane - 1
            if not lane_allowed(F, I, P, elig, zones, s, tl):
                continue
            if not valid_target(F, I, P, s, NB[2 + 2 * side, s]):
                continue
            inc, gok, a0, a1, n0, n1, o0, o1, hfn = assess(F, I, P, NB, s, side)
            if not mobil_pass(I, P, s, inc, gok, n1, hfn):
                continue
            if best < 0:
                better = True
            elif P[P_SELECT_MAX] > 0:
                better = inc > best_inc
            else:
                better = inc < best_inc
            if better:
                best = tl
                best_inc = inc
        if best >= 0:
            return best, KIND_CLUSTER, best_inc
    if not human and valid_target(F, I, P, s, NB[0, s]):
        return lane, 0, 0.0  # approaching a same-lane target
    best = -1
    best_inc = 0.0
    for side in range(2):
        tl = lane + 1 if side == 0 else lane - 1
        if not lane_allowed(F, I, P, elig, zones, s, tl):
            continue
        inc, gok, a0, a1, n0, n1, o0, o1, hfn = assess(F, I, P, NB, s, side)
        if not mobil_pass(I, P, s, inc, gok, n1, hfn):
            continue
        if best < 0 or inc > best_inc:
            best = tl
            best_inc = inc
    if best >= 0:
        return best, KIND_DISCRETIONARY, best_inc
    return lane, 0, 0.0


@njit(cache=True)
def control_accel(F, I, P, NB, s):
    """Applied acceleration of ``s``.

    A vehicle with a forced lane change pending (ramp merge or exit
    preparation) also slots in behind the moving leader of its target lane,
    braking at most at its comfortable rate, so that a gap can open up.
    """
    lane = I[LANE, s]
    a = accel_behind(F, I, P, s, NB[0, s], lane < 0)
    side = -1
    if lane < 0:
        side = 0
    elif lane > 0 and exit_bound_prep(F, I, P, s):
        side = 1
    if side >= 0:
        ln = NB[2 + 2 * side, s]
        # falling in behind a stopped queue cannot open a gap
        if ln >= 0 and F[SPEED, ln] >= STOP_SPEED:
            b = P[P_HB] if is_human(I, s) else P[P_CB]
            a_seek = accel_behind(F, I, P, s, ln, False)
            if a_seek < -b:
                a_seek = -b
            if a_seek < a:
                a = a_seek
    return a


# ---------------------------------------------------------------- logging

@njit(cache=True)
def log_platoon(pl_log, C, t, code, pid, vid, size):
    k = C[C_PL_N]
    pl_log[k, 0] = t
    pl_log[k, 1] = code
    pl_log[k, 2] = pid
    pl_log[k, 3] = vid
    pl_log[k, 4] = size
    C[C_PL_N] = k + 1


@njit(cache=True)
def log_lane_change(lc_log, C, t, vid, cls, frm, to, pos, kind, incentive):
    k = C[C_LC_N]
    lc_log[k, 0] = t
    lc_log[k, 1] = vid
    lc_log[k, 2] = cls
    lc_log[k, 3] = frm
    lc_log[k, 4] = to
    lc_log[k, 5] = pos
    lc_log[k, 6] = kind
    lc_log[k, 7] = incentive
    C[C_LC_N] = k + 1


# ---------------------------------------------------------------- platoons

@njit(cache=True)
def unlink_front(I, slot_of, s, pl_log, C, t, code):
    """Detach ``s`` from its group predecessor."""
    if I[GPRED, s] >= 0:
        log_platoon(pl_log, C, t, code, I[PID, s], I[VID, s], I[GSIZE, s])
        I[GPRED, s] = -1


@njit(cache=True)
def unlink_rear(I, slot_of, n, s, pl_log, C, t, code):
    """Detach whoever follows ``s`` in its group."""
    if I[GSIZE, s] <= 1:
        return
    vid = I[VID, s]
    for k in range(n):
        if I[GPRED, k] == vid:
            log_platoon(pl_log, C, t, code, I[PID, k], I[VID, k], I[GSIZE, k])
            I[GPRED, k] = -1
            return


@njit(cache=True)
def regroup(F, I, P, slot_of, n, gf, pl_log, C, t):
    """Recompute group id, depth, size and established flag from the links."""
    min_size = P[P_MIN_SIZE]
    for s in range(n):
        gf[s] = -1
    for s in range(n):
        p = I[GPRED, s]
        if p >= 0:
            ps = slot_of[p]
            if ps >= 0 and gf[ps] == -1:
                gf[ps] = s
            else:
                I[GPRED, s] = -1
    heads = np.empty(n, dtype=np.int64)
    sizes = np.empty(n, dtype=np.int64)
    nh = 0
    for s in range(n):
        if I[GPRED, s] < 0:
            size = 1
            k = gf[s]
            while k >= 0:
                size += 1
                k = gf[k]
            heads[nh] = s
            sizes[nh] = size
            nh += 1
    old_pid = np.empty(nh, dtype=np.int64)
    old_est = np.empty(nh, dtype=np.int64)
    for h in range(nh):
        old_pid[h] = I[PID, heads[h]]
        old_est[h] = I[EST, heads[h]]
    # the most downstream fragment of a split keeps the group id
    new_pid = np.full(nh, -1, dtype=np.int64)
    for h in range(nh):
        if sizes[h] < 2:
            continue
        keep = old_pid[h] >= 0
        for h2 in range(nh):
            if (keep and h2 != h and sizes[h2] >= 2 and old_pid[h2] == old_pid[h]
                    and F[POS, heads[h2]] > F[POS, heads[h]]):
                keep = False
        if keep:
            new_pid[h] = old_pid[h]
        else:
            new_pid[h] = C[C_PID_NEXT]
            C[C_PID_NEXT] += 1
    for h in range(nh):
        s = heads[h]
        size = sizes[h]
        est = 1 if size >= min_size and size >= 2 else 0
        pid = new_pid[h]
        if est == 1 and (old_est[h] == 0 or pid != old_pid[h]):
            log_platoon(pl_log, C, t, EV_ESTABLISH, pid, I[VID, s], size)
        if est == 0 and old_est[h] == 1 and old_pid[h] >= 0:
            # report each vanished platoon once, at its most downstream fragment
            first = True
            for h2 in range(nh):
                if h2 == h or old_pid[h2] != old_pid[h]:
                    continue
                if sizes[h2] >= min_size and sizes[h2] >= 2 and new_pid[h2] == old_pid[h]:
                    first = False
                if old_est[h2] == 1 and F[POS, heads[h2]] > F[POS, s]:
                    first = False
            if first:
                log_platoon(pl_log, C, t, EV_DISSOLVE, old_pid[h], I[VID, s], size)
        if size == 1:
            F[JOIN_T, s] = -1.0
        k = s
        d = 1
        while k >= 0:
            I[PID, k] = pid
            I[DEPTH, k] = d
            I[GSIZE, k] = size
            I[EST, k] = est
            d += 1
            k = gf[k]


# ---------------------------------------------------------------- step phases

@njit(cache=True)
def sample_links(F, I, P, NB, order, n, ubuf, C, tab_d, tab_p):
    kind = int(P[P_CH_KIND])
    for k in range(n):
        s = order[k]
        if I[CLS, s] != CACC:
            continue
        ld = NB[0, s]
        if ld < 0 or I[CLS, ld] != CACC or I[LANE, s] < 0:
            I[LINK, s] = NO_LINK
            continue
        d = F[POS, ld] - F[POS, s]
        p = _reception(kind, d, P[P_CH_RANGE], P[P_CH_POWER], P[P_CH_LOAD],
                       P[P_CH_MID], P[P_CH_K], tab_d, tab_p)
        u = ubuf[C[C_UCUR]]
        C[C_UCUR] += 1
        I[LINK, s] = 1 if u < p else 0


@njit(cache=True)
def integrity(F, I, slot_of, NB, n, pl_log, C, t):
    for s in range(n):
        p = I[GPRED, s]
        if p < 0:
            continue
        ps = slot_of[p]
        if ps < 0 or NB[0, s] != ps or I[MODE, ps] != ADS or I[MODE, s] != ADS:
            unlink_front(I, slot_of, s, pl_log, C, t, EV_SPLIT)


@njit(cache=True)
def fallback_update(mode, miss, ok_time, counts, link, dt, k_loss, hold):
    """One beacon of the fallback loop; returns (mode, miss, ok_time, event).

    event is 1 on a switch to human control, 2 on a restore, else 0.
    ``counts`` marks a vehicle whose misses matter (a platoon follower).
    ``link`` is 1 on reception, 0 on a miss and -1 when there is no sender.
    """
    if mode == ADS:
        if counts and link != 1:
            miss += 1
            if miss >= k_loss:
                return FALLBACK, 0, 0.0, 1
            return ADS, miss, 0.0, 0
        return ADS, 0, 0.0, 0
    if link == 0:
        ok_time = 0.0
    else:
        ok_time += dt
    if ok_time >= hold - 1e-9:
        return ADS, 0, 0.0, 2
    return FALLBACK, 0, ok_time, 0


@njit(cache=True)
def fallbacks(F, I, P, slot_of, n, pl_log, C, t):
    """Fallback loop for every CACC vehicle on this step's link outcomes.

    All switches are decided first and applied afterwards, so a follower
    whose predecessor also falls back this step is judged on its own misses.
    """
    dt = P[P_DT]
    k_loss = int(P[P_LOSS_K])
    hold = P[P_HOLD]
    fell = np.zeros(n, dtype=np.bool_)
    for s in range(n):
        if I[CLS, s] != CACC:
            continue
        counts = I[GPRED, s] >= 0
        mode, miss, ok_time, ev = fallback_update(I[MODE, s], I[MISS, s], F[OK_TIME, s], counts,
                                                  I[LINK, s], dt, k_loss, hold)
        I[MODE, s] = mode
        I[MISS, s] = miss
        F[OK_TIME, s] = ok_time
        if ev == 1:
            fell[s] = True
        elif ev == 2:
            log_platoon(pl_log, C, t, EV_RESTORE, -1, I[VID, s], 1)
    for s in range(n):
        if fell[s]:
            C[C_FALLBACKS] += 1
            log_platoon(pl_log, C, t, EV_FALLBACK, I[PID, s], I[VID, s], I[GSIZE, s])
            I[GPRED, s] = -1
    for s in range(n):
        if fell[s]:
            unlink_rear(I, slot_of, n, s, pl_log, C, t, EV_SPLIT)


@njit(cache=True)
def joins(F, I, P, slot_of, NB, order, n, joined, t):
    """Rear joins, processed downstream first. Returns the number of joiners."""
    T_inter = P[P_T_INTER]
    T_intra = P[P_T_INTRA]
    s0 = P[P_CS0]
    max_size = P[P_MAX_SIZE]
    nj = 0
    for k in range(n - 1, -1, -1):
        s = order[k]
        if I[CLS, s] != CACC or I[MODE, s] != ADS or I[LANE, s] < 0:
            continue
        if I[GPRED, s] >= 0 or I[GSIZE, s] != 1 or I[LINK, s] != 1:
            continue
        ld = NB[0, s]
        if ld < 0 or I[CLS, ld] != CACC or I[MODE, ld] != ADS:
            continue
        if F[POS, ld] - F[POS, s] > P[P_DSRC]:
            continue
        # the target must be a tail: only s could follow it, and s is free
        depth = 1
        p = I[GPRED, ld]
        while p >= 0:
            depth += 1
            p = I[GPRED, slot_of[p]]
        if depth >= max_size:
            continue
        v = F[SPEED, s]
        gap = F[POS, ld] - F[LEN, ld] - F[POS, s]
        err = abs(gap - (s0 + v * T_inter))
        if err < P[P_JOIN_GAP_TOL] * (s0 + v * T_intra) and abs(v - F[SPEED, ld]) < P[P_JOIN_DV_TOL]:
            if I[GPRED, ld] < 0 and F[JOIN_T, ld] < 0.0:
                F[JOIN_T, ld] = t
            I[GPRED, s] = I[VID, ld]
            F[JOIN_T, s] = t
            joined[nj] = s
            nj += 1
    return nj


@njit(cache=True)
def fuel_rate_kernel(v_kmh, a_kmhps, fuel_k):
    r = 0 if a_kmhps >= 0.0 else 1
    z = 0.0
    vi = 1.0
    for i in range(4):
        aj = 1.0
        for j in range(4):
            z += fuel_k[r, i, j] * vi * aj
            aj *= a_kmhps
        vi *= v_kmh
    return math.exp(z)


@njit(cache=True)
def step(F, I, slot_of, P, elig, seek_ml, zones, off_x, on_x, acc_len,
         arr_t, arr_cls, arr_dest, arr_vdes, arr_hvdes, org_ptr, org_end,
         tab_d, tab_p, fuel_k, lc_log, pl_log, ex_log, tk_log, M, C, ubuf,
         order, rank, lstart, lend, NB, gf, scratch, acc_buf):
    dt = P[P_DT]
    nl = int(P[P_NLANES])
    L = P[P_LENGTH]
    stepno = C[C_STEP]
    t = stepno * dt
    n = C[C_NACTIVE]

    # (1) neighbours and comms
    refresh(F, I, n, nl, order, rank, lstart, lend, NB)
    sample_links(F, I, P, NB, order, n, ubuf, C, tab_d, tab_p)

    # (2) platoon integrity, fallback loop, rear joins
    integrity(F, I, slot_of, NB, n, pl_log, C, t)
    regroup(F, I, P, slot_of, n, gf, pl_log, C, t)
    fallbacks(F, I, P, slot_of, n, pl_log, C, t)
    regroup(F, I, P, slot_of, n, gf, pl_log, C, t)
    nj = joins(F, I, P, slot_of, NB, order, n, scratch, t)
    if nj > 0:
        regroup(F, I, P, slot_of, n, gf, pl_log, C, t)
        for j in range(nj):
            s = scratch[j]
            log_platoon(pl_log, C, t, EV_JOIN, I[PID, s], I[VID, s], I[GSIZE, s])

    # (3) lane changes: decide on the frozen state, execute downstream first
    every = int(P[P_DECIDE_EVERY])
    cooldown = P[P_COOLDOWN]
    nprop = 0
    for k in range(n - 1, -1, -1):
        s = order[k]
        if I[LANE, s] >= 0 and (I[VID, s] + stepno) % every != 0:
            continue
        if t - F[LC_T, s] < cooldown:
            continue
        tl, kind, inc = decide(F, I, P, NB, elig, seek_ml, zones, s)
        if kind == 0:
            continue
        scratch[nprop] = s
        acc_buf[nprop] = inc
        gf[nprop] = tl * 8 + kind  # packed, unpacked below
        nprop += 1
    changed = False
    n_done = 0
    done_lane = np.empty(nprop, dtype=np.int64)
    done_leader = np.empty(nprop, dtype=np.int64)
    for q in range(nprop):
        s = scratch[q]
        tl = gf[q] // 8
        kind = gf[q] % 8
        side = 0 if tl > I[LANE, s] else 1
        ln = NB[2 + 2 * side, s]
        fn = NB[3 + 2 * side, s]
        clash = False
        for r in range(n_done):
            if done_lane[r] == tl and done_leader[r] == ln:
                clash = True
                break
        if clash:
            continue
        done_lane[n_done] = tl
        done_leader[n_done] = ln
        n_done += 1
        # leaving the group, then splitting whichever group the vehicle cuts into
        if I[GSIZE, s] > 1:
            unlink_rear(I, slot_of, n, s, pl_log, C, t, EV_SPLIT)
            unlink_front(I, slot_of, s, pl_log, C, t, EV_LEAVE)
        if fn >= 0 and ln >= 0 and I[GPRED, fn] == I[VID, ln]:
            unlink_front(I, slot_of, fn, pl_log, C, t, EV_SPLIT)
        log_lane_change(lc_log, C, t, I[VID, s], I[CLS, s], I[LANE, s], tl, F[POS, s], kind, acc_buf[q])
        I[LANE, s] = tl
        F[LC_T, s] = t
        changed = True
    if changed:
        refresh(F, I, n, nl, order, rank, lstart, lend, NB)
        regroup(F, I, P, slot_of, n, gf, pl_log, C, t)

    # (4) accelerations from the frozen snapshot, (5) integration
    for s in range(n):
        acc_buf[s] = control_accel(F, I, P, NB, s)
    for s in range(n):
        v = F[SPEED, s]
        v_new = v + acc_buf[s] * dt
        if v_new < 0.0:
            v_new = 0.0
        F[ACC, s] = (v_new - v) / dt
        F[SPEED, s] = v_new
        F[POS, s] += v_new * dt
    for s in range(n):
        ld = NB[0, s]
        if ld >= 0 and F[POS, ld] - F[LEN, ld] - F[POS, s] < 0.0:
            C[C_FAULT_A] = I[VID, ld]
            C[C_FAULT_B] = I[VID, s]
            return FAULT
        if I[LANE, s] < 0 and F[POS, s] > F[WALL, s]:
            C[C_FAULT_A] = -1
            C[C_FAULT_B] = I[VID, s]
            return FAULT

    # (6) exits then entries
    t_new = (stepno + 1) * dt
    n_off = off_x.size
    nexit = 0
    for s in range(n):
        lane = I[LANE, s]
        if lane < 0:
            if (I[STARVED, s] == 0 and F[SPEED, s] < STOP_SPEED
                    and F[WALL, s] - F[POS, s] <= P[P_STARVE_DIST]):
                I[STARVED, s] = 1
                C[C_STARVED] += 1
            continue
        if F[POS, s] < F[EXIT_X, s]:
            continue
        if I[DEST, s] < n_off and lane != 0:
            I[DEST, s] = n_off  # missed the off-ramp, carry on to the end
            I[MISSED, s] = 1
            F[EXIT_X, s] = L
            C[C_MISSED_EXITS] += 1
            continue
        scratch[nexit] = s
        nexit += 1
    for q in range(nexit):
        s = scratch[q]
        fo = NB[1, s]
        if fo >= 0 and I[GPRED, fo] == I[VID, s]:
            log_platoon(pl_log, C, t_new, EV_LEAVE, I[PID, s], I[VID, s], I[GSIZE, s])
            I[GPRED, fo] = -1
        e = C[C_EX_N]
        ex_log[e, 0] = I[VID, s]
        ex_log[e, 1] = I[CLS, s]
        ex_log[e, 2] = I[ORIGIN, s]
        ex_log[e, 3] = I[DEST, s]
        ex_log[e, 4] = F[ENTRY_T, s]
        ex_log[e, 5] = t_new
        ex_log[e, 6] = I[MISSED, s]
        ex_log[e, 7] = I[STARVED, s]
        C[C_EX_N] = e + 1
    # remove from the highest slot down so pending slots stay valid
    for q in range(nexit - 1, -1, -1):
        s = scratch[q]
        slot_of[I[VID, s]] = -1
        last = n - 1
        if s != last:
            F[:, s] = F[:, last]
            I[:, s] = I[:, last]
            slot_of[I[VID, s]] = s
        n -= 1
        C[C_EXITED] += 1
    C[C_NACTIVE] = n
    n = spawn(F, I, slot_of, P, elig, on_x, acc_len, off_x, arr_t, arr_cls, arr_dest,
              arr_vdes, arr_hvdes, org_ptr, org_end, C, t_new)
    regroup(F, I, P, slot_of, n, gf, pl_log, C, t_new)

    # (7) metrics
    C[C_STEP] = stepno + 1
    if C[C_ENTERED] != C[C_EXITED] + n:
        C[C_FAULT_A] = -3
        C[C_FAULT_B] = -3
        return FAULT
    measuring = t_new > P[P_WARMUP] + 1e-9
    if measuring:
        M[M_MEAS_S] += dt
        for s in range(n):
            if I[LANE, s] >= 0:
                M[M_VMT_M] += F[SPEED, s] * dt
                M[M_VHT_S] += dt
    tick_every = int(P[P_TICK_EVERY])
    if (stepno + 1) % tick_every == 0:
        tick_dt = tick_every * dt
        n_cacc = 0
        n_plat = 0
        n_groups = 0
        depth_sum = 0
        violations = 0
        for s in range(n):
            lane = I[LANE, s]
            if lane >= 0 and elig[I[CLS, s], lane] == 0:
                violations += 1
            if I[CLS, s] == CACC:
                n_cacc += 1
                if I[EST, s] == 1:
                    n_plat += 1
                    depth_sum += I[DEPTH, s]
                    if I[DEPTH, s] == 1:
                        n_groups += 1
        latent = 0
        for o in range(org_ptr.size):
            j = org_ptr[o]
            while j < org_end[o] and arr_t[j] <= t_new:
                latent += 1
                j += 1
        if latent > C[C_LATENT_MAX]:
            C[C_LATENT_MAX] = latent
        k = C[C_TK_N]
        tk_log[k, 0] = t_new
        tk_log[k, 1] = n_cacc
        tk_log[k, 2] = n_plat
        tk_log[k, 3] = n_groups
        tk_log[k, 4] = depth_sum
        tk_log[k, 5] = violations
        tk_log[k, 6] = latent
        C[C_TK_N] = k + 1
        if measuring:
            for s in range(n):
                if I[LANE, s] < 0:
                    continue
                v = F[SPEED, s]
                M[M_SPD_N] += 1.0
                d = v - M[M_SPD_MEAN]
                M[M_SPD_MEAN] += d / M[M_SPD_N]
                M[M_SPD_M2] += d * (v - M[M_SPD_MEAN])
                if P[P_FUEL_ON] > 0:
                    M[M_FUEL_L] += fuel_rate_kernel(v * 3.6, F[ACC, s] * 3.6, fuel_k) * tick_dt
            M[M_CACC_S] += n_cacc * tick_dt
            M[M_PLAT_S] += n_plat * tick_dt
            M[M_DEPTH_SUM] += depth_sum
            M[M_DEPTH_N] += n_plat
            if n_cacc > 0:
                M[M_SHARE_SUM] += n_plat / n_cacc
                M[M_SHARE_N] += 1.0
    return OK


@njit(cache=True)
def spawn(F, I, slot_of, P, elig, on_x, acc_len, off_x, arr_t, arr_cls, arr_dest,
          arr_vdes, arr_hvdes, org_ptr, org_end, C, t):
    n = C[C_NACTIVE]
    nl = int(P[P_NLANES])
    cap = F.shape[1]
    look = P[P_SPAWN_LOOKAHEAD]
    n_off = off_x.size
    for o in range(org_ptr.size):
        while org_ptr[o] < org_end[o] and arr_t[org_ptr[o]] <= t + 1e-9 and n < cap:
            j = org_ptr[o]
            cls = arr_cls[j]
            human = cls != CACC
            s0 = P[P_HS0] if human else P[P_CS0]
            T = P[P_HT] if human else P[P_T_INTER]
            vdes = arr_vdes[j]
            if o == 0:
                x0 = 0.0
                lo = 0
                hi = nl
            else:
                x0 = on_x[o - 1]
                lo = -1
                hi = 0
            dest = arr_dest[j]
            exit_x = off_x[dest] if dest < n_off else P[P_LENGTH]
            # traffic bound for a nearby exit enters in the rightmost lane that fits
            near_exit = exit_x - x0 <= P[P_EXIT_PREP]
            best = -2
            best_occ = 0
            best_gap = 0.0
            best_v = 0.0
            for lane in range(lo, hi):
                if lane >= 0 and elig[cls, lane] == 0:
                    continue
                gap = 1.0e12
                v_lead = vdes
                occ = 0
                for s in range(n):
                    if I[LANE, s] != lane:
                        continue
                    xs = F[POS, s]
                    if xs < x0 - 1e-9:
                        if xs > x0 - F[LEN, s] - s0:
                            gap = -1.0  # something still occupies the entry
                        continue
                    if xs - x0 <= look:
                        occ += 1
                    g = xs - F[LEN, s] - x0
                    if g < gap:
                        gap = g
                        v_lead = F[SPEED, s]
                if lane < 0 and acc_len < gap:
                    gap = acc_len
                v = vdes
                if gap < look and v_lead < v:
                    v = v_lead
                if gap < s0 + v * T:
                    continue
                if near_exit and best != -2:
                    continue
                if (best == -2 or occ < best_occ or (occ == best_occ and gap > best_gap)):
                    best = lane
                    best_occ = occ
                    best_gap = gap
                    best_v = v
            if best == -2:
                break
            s = n
            vid = j
            F[:, s] = 0.0
            I[:, s] = -1
            F[POS, s] = x0
            F[SPEED, s] = best_v
            F[ACC, s] = 0.0
            F[LEN, s] = 5.0
            F[VDES, s] = vdes
            F[HV_VDES, s] = arr_hvdes[j]
            F[OK_TIME, s] = 0.0
            F[ENTRY_T, s] = t
            F[EXIT_X, s] = exit_x
            F[WALL, s] = x0 + acc_len if best < 0 else 1.0e12
            F[LC_T, s] = -1.0e9
            F[RAMP_X, s] = x0 if best < 0 else -1.0
            F[JOIN_T, s] = -1.0
            I[VID, s] = vid
            I[LANE, s] = best
            I[CLS, s] = cls
            I[ORIGIN, s] = o
            I[DEST, s] = dest
            I[PID, s] = -1
            I[GPRED, s] = -1
            I[MODE, s] = ADS
            I[MISS, s] = 0
            I[LINK, s] = NO_LINK
            I[STARVED, s] = 0
            I[MISSED, s] = 0
            I[DEPTH, s] = 1
            I[GSIZE, s] = 1
            I[EST, s] = 0
            slot_of[vid] = s
            n += 1
            org_ptr[o] = j + 1
            C[C_ENTERED] += 1
    C[C_NACTIVE] = n
    return n


@njit(cache=True)
def run_steps(F, I, slot_of, P, elig, seek_ml, zones, off_x, on_x, acc_len,
              arr_t, arr_cls, arr_dest, arr_vdes, arr_hvdes, org_ptr, org_end,
              tab_d, tab_p, fuel_k, lc_log, pl_log, ex_log, tk_log, M, C, ubuf,
              order, rank, lstart, lend, NB, gf, scratch, acc_buf, nsteps):
    """Advance up to ``nsteps``; returns (status, steps done)."""
    cap_lc = lc_log.shape[0]
    cap_pl = pl_log.shape[0]
    cap_ex = ex_log.shape[0]
    cap_tk = tk_log.shape[0]
    done = 0
    while done < nsteps:
        n = C[C_NACTIVE]
        margin = 4 * n + 64
        if (C[C_LC_N] + margin > cap_lc or C[C_PL_N] + 2 * margin > cap_pl
                or C[C_EX_N] + margin > cap_ex or C[C_TK_N] + 2 > cap_tk):
            return DRAIN, done
        if C[C_UCUR] + n + 1 > ubuf.size:
            return REFILL, done
        code = step(F, I, slot_of, P, elig, seek_ml, zones, off_x, on_x, acc_len,
                    arr_t, arr_cls, arr_dest, arr_vdes, arr_hvdes, org_ptr, org_end,
                    tab_d, tab_p, fuel_k, lc_log, pl_log, ex_log, tk_log, M, C, ubuf,
                    order, rank, lstart, lend, NB, gf, scratch, acc_buf)
        if code != OK:
            return code, done
        done += 1
    return OK, done
