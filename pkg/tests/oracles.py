"""Independent reference implementations used as test oracles.

Nothing here imports the package under test: every formula is written out
again from its definition in plain Python.
"""
import math

import numpy as np

# ---------------------------------------------------------------- car following

def idm_oracle(v, gap, v_lead, a, b, delta, v_des, s0, T, v_cap=None):
    """IDM term; with ``v_cap`` the gap-regulation variant
    min(a(1 - (s*/gap)^2), a(1 - (v/v_cap)^delta))."""
    s_star = s0 + v * T + v * (v - v_lead) / (2.0 * math.sqrt(a * b))
    s_star = max(s_star, s0)
    g = max(gap, 0.1)
    if v_cap is None:
        return a * (1.0 - (v / v_des) ** delta - (s_star / g) ** 2)
    return min(a * (1.0 - (s_star / g) ** 2), a * (1.0 - (v / v_cap) ** delta))


def cah_oracle(v, gap, v_lead, a_lead, a):
    a_hat = min(a_lead, a)
    g = max(gap, 0.1)
    if v_lead * (v - v_lead) <= -2.0 * g * a_hat:
        den = v_lead ** 2 - 2.0 * g * a_hat
        if abs(den) >= 1e-9:
            return v * v * a_hat / den
    theta = 1.0 if v - v_lead > 0 else 0.0
    return a_hat - theta * (v - v_lead) ** 2 / (2.0 * g)


def eidm_oracle(v, gap, v_lead, a_lead, a, b, c, delta, v_des, s0, T, v_cap=None):
    if gap is None:
        return a * (1.0 - (v / v_des) ** delta)
    ai = idm_oracle(v, gap, v_lead, a, b, delta, v_des, s0, T, v_cap)
    ac = cah_oracle(v, gap, v_lead, a_lead, a)
    if ai >= ac:
        return ai
    return (1.0 - c) * ai + c * (ac + b * math.tanh((ai - ac) / b))


def two_vehicle_trace(lead, follow, dt, steps, lead_params, follow_params, follow_T, follow_vcap=None):
    """Semi-implicit integration of a leader on a free road and one follower.

    ``lead``/``follow`` are dicts with x, v, a, length.  Accelerations are
    computed from the pre-step state; the stored acceleration is the
    effective (v' - v)/dt.  Returns arrays of follower and leader positions.
    """
    xl, vl, al, ll = lead["x"], lead["v"], lead["a"], lead["length"]
    xf, vf = follow["x"], follow["v"]
    pl, pf = lead_params, follow_params
    xs_f, xs_l = [], []
    for _ in range(steps):
        acc_l = eidm_oracle(vl, None, 0.0, 0.0, pl["a"], pl["b"], pl["c"], pl["delta"], pl["v_des"],
                            pl["s0"], pl["T"])
        acc_f = eidm_oracle(vf, xl - ll - xf, vl, al, pf["a"], pf["b"], pf["c"], pf["delta"],
                            pf["v_des"], pf["s0"], follow_T, follow_vcap)
        vl_new = max(0.0, vl + acc_l * dt)
        vf_new = max(0.0, vf + acc_f * dt)
        al = (vl_new - vl) / dt
        vl, vf = vl_new, vf_new
        xl += vl * dt
        xf += vf * dt
        xs_f.append(xf)
        xs_l.append(xl)
    return np.array(xs_f), np.array(xs_l)


def equilibrium_gap_bisection(v, a, b, delta, v_des, s0, T, lo=1e-3, hi=1e4, tol=1e-12):
    """Gap at which the IDM acceleration vanishes for equal speeds."""
    f = lambda g: a * (1.0 - (v / v_des) ** delta - ((s0 + v * T) / g) ** 2)
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- lane changing

def mobil_oracle(acc_now, acc_new, n_now, n_new, o_now, o_new, p):
    return (acc_new - acc_now) + p * ((n_new - n_now) + (o_new - o_now))


def ramp_merge_oracle(stream, ego, ramp_x, acc_len, hp, safe_decel, urgency_max, dt=0.1, t_max=60.0):
    """Standalone single-lane merge: one ramp vehicle beside a stream.

    ``stream`` is a list of (x, v) on the mainline lane, ``ego`` is (x, v)
    on the acceleration lane that starts at ``ramp_x``.  Everyone is a human
    driver with parameter dict ``hp`` (length 5 m).  Each step, on the
    pre-step state: the ramp vehicle merges if both gaps are positive, its
    own acceleration behind the new leader is at least -b and the new
    follower's is at least -safe_decel * urgency, urgency rising linearly
    from 1 to ``urgency_max`` along the lane.  Then every vehicle
    accelerates (ramp vehicle: the lesser of its wall-limited value and the
    value behind a moving target-lane leader floored at -b), integrated
    semi-implicitly.  Returns the distance from the lane start at which the
    merge happened, or inf when none happens within ``t_max``.
    """
    L = 5.0
    wall = ramp_x + acc_len
    xs = [float(x) for x, _ in stream]
    vs = [float(v) for _, v in stream]
    order = sorted(range(len(xs)), key=lambda i: xs[i])
    xs = [xs[i] for i in order]
    vs = [vs[i] for i in order]
    acs = [0.0] * len(xs)
    ex, ev, ea = float(ego[0]), float(ego[1]), 0.0
    a, b = hp["a"], hp["b"]

    def f(v, gap=None, vl=0.0, al=0.0):
        return eidm_oracle(v, gap, vl, al, a, b, hp["c"], hp["delta"], hp["v_des"], hp["s0"], hp["T"])

    def around(x):
        # stream indices of the first vehicle at or ahead of x and the one behind
        ahead = next((i for i in range(len(xs)) if xs[i] >= x), None)
        behind = (ahead - 1 if ahead is not None else len(xs) - 1)
        return ahead, (behind if behind >= 0 else None)

    for step in range(int(round(t_max / dt))):
        ln, fn = around(ex)
        gaps_ok = (ln is None or xs[ln] - L - ex > 0) and (fn is None or ex - L - xs[fn] > 0)
        if gaps_ok:
            acc_new = f(ev) if ln is None else f(ev, xs[ln] - L - ex, vs[ln], acs[ln])
            u = 1.0 + (urgency_max - 1.0) * min(max((ex - ramp_x) / acc_len, 0.0), 1.0)
            ok = acc_new >= -b
            if fn is not None:
                ok = ok and f(vs[fn], ex - L - xs[fn], ev, ea) >= -safe_decel * u
            if ok:
                return ex - ramp_x
        acc = []
        for i in range(len(xs)):
            acc.append(f(vs[i]) if i == len(xs) - 1 else f(vs[i], xs[i + 1] - L - xs[i], vs[i + 1], acs[i + 1]))
        ae = f(ev, wall - ex, 0.0, 0.0)
        if ln is not None and vs[ln] >= 0.1:
            ae = min(ae, max(f(ev, xs[ln] - L - ex, vs[ln], acs[ln]), -b))
        for i in range(len(xs)):
            nv = max(0.0, vs[i] + acc[i] * dt)
            acs[i] = (nv - vs[i]) / dt
            vs[i] = nv
            xs[i] += nv * dt
        nv = max(0.0, ev + ae * dt)
        ea = (nv - ev) / dt
        ev = nv
        ex += nv * dt
    return math.inf


def no_run_count(n, k):
    """Number of binary strings of length n with no run of k ones."""
    # dp[j] = strings ending in exactly j consecutive ones
    dp = [1] + [0] * (k - 1)
    for _ in range(n):
        new = [sum(dp)] + dp[:-1]
        dp = new
    return sum(dp)


def fallback_probability(n_beacons, k, p_rx):
    """P(some run of k consecutive misses in n beacons), miss prob 1 - p_rx."""
    q = 1.0 - p_rx
    # Markov chain over the current miss-run length, absorbing at k
    state = np.zeros(k + 1)
    state[0] = 1.0
    for _ in range(n_beacons):
        new = np.zeros(k + 1)
        new[k] = state[k]
        for j in range(k):
            new[0] += state[j] * p_rx
            new[j + 1] += state[j] * q
        state = new
    return state[k]


# ---------------------------------------------------------------- metrics

def percentile_linear(samples, q):
    """Linear interpolation between order statistics (numpy's default)."""
    xs = sorted(samples)
    n = len(xs)
    pos = (n - 1) * q / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    return xs[lo] + (pos - lo) * (xs[hi] - xs[lo])


def two_pass_std(samples):
    n = len(samples)
    m = sum(samples) / n
    return math.sqrt(sum((x - m) ** 2 for x in samples) / n)


def vtmicro_oracle(v, a, K):
    total = 0.0
    for i in range(4):
        for j in range(4):
            total += K[i][j] * v ** i * a ** j
    return math.exp(total)


def score_oracle(results, baseline, strategies, mps):
    """Scalar recomputation of the score matrix.

    Returns ({(s, mp): {category: score}}, {(s, mp): normalized sum}).
    """
    keys = {"mobility": ("q_kmh", 1), "safety": ("speed_std_ms", -1),
            "equity": ("gp_median_tt_s", -1), "environment": ("fuel_l", -1)}

    def mean_se(xs):
        xs = [x for x in xs if x is not None]
        if not xs:
            return None, None
        m = sum(xs) / len(xs)
        if len(xs) < 2:
            return m, 0.0
        var = sum((x - m) ** 2 for x in xs) / (len(xs) - 1)
        return m, math.sqrt(var) / math.sqrt(len(xs))

    scores = {}
    for s in strategies:
        for mp in mps:
            cell = {}
            reps = results.get((s, mp))
            for cat, (k, sign) in keys.items():
                if not reps:
                    cell[cat] = None
                    continue
                m, se = mean_se([r[k] for r in reps])
                mb, seb = mean_se([r[k] for r in baseline])
                if m is None or mb is None:
                    cell[cat] = None
                    continue
                band = 1.96 * math.sqrt(se * se + seb * seb)
                d = sign * (m - mb)
                cell[cat] = 1 if d > band else (-1 if d < -band else 0)
            scores[(s, mp)] = cell
    for mp in mps:
        present = [s for s in strategies if results.get((s, mp))]
        stat = {}
        for s in present:
            reps = results[(s, mp)]
            stat[s] = (mean_se([r["vhp"] for r in reps])[0] or 0.0,
                       mean_se([r["pct_platooned"] for r in reps])[0] or 0.0)
        for s in strategies:
            if s not in stat:
                scores[(s, mp)]["platooning"] = None
                continue
            rank = len(present)
            for other in present:
                if stat[other] > stat[s]:
                    rank -= 1
            scores[(s, mp)]["platooning"] = rank
    cats = list(keys) + ["platooning"]
    sums = {}
    for key, cell in scores.items():
        total, seen = 0.0, False
        for cat in cats:
            x = cell[cat]
            if x is None:
                continue
            col = [c[cat] for c in scores.values() if c[cat] is not None]
            lo, hi = min(col), max(col)
            total += 0.0 if hi == lo else (x - lo) / (hi - lo)
            seen = True
        sums[key] = total if seen else None
    return scores, sums
