"""Measures of effectiveness and strategy scoring.

Mobility is the network speed Q = VMT / VHT, reliability the planning time
index, safety the spread of sampled speeds, the environment fuel from a
VT-Micro style polynomial, equity the travel-time distribution by class,
and platooning the share of CACC vehicles in platoons, their mean position
and the vehicle-hours spent platooned (VHP).
"""
import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np

from .enums import VehicleClass
from .fleet import (
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
)

KM_PER_MILE = 1.609344
REFERENCE_PTI = 1.50  # calibrated baseline reported for the study corridor
MIN_TRAVERSALS = 20


# ---------------------------------------------------------------- ledger

@dataclass
class MetricsLedger:
    vmt_km: float = 0.0
    vht_h: float = 0.0
    travel_times: Dict[str, np.ndarray] = field(default_factory=dict)
    speed_n: int = 0
    speed_mean: float = 0.0
    speed_m2: float = 0.0
    fuel_l: Optional[float] = None
    cacc_s: float = 0.0  # CACC vehicle-seconds present
    platooned_s: float = 0.0  # platooned vehicle-seconds
    depth_sum: float = 0.0
    depth_n: float = 0.0
    share_sum: float = 0.0
    share_n: float = 0.0
    measured_s: float = 0.0
    free_flow_time: float = float("nan")
    fallbacks: int = 0
    missed_exits: int = 0
    starved: int = 0
    latent_max: int = 0
    violations: int = 0

    @classmethod
    def from_world(cls, world):
        M = world.M
        cfg = world.config
        ex = world.exits
        n_off = len(cfg.geometry.interchanges)
        full = ((ex[:, 2] == 0) & (ex[:, 3] == n_off) & (ex[:, 6] == 0)
                & (ex[:, 4] >= cfg.warmup))
        tt = {}
        for c in VehicleClass:
            sel = full & (ex[:, 1] == int(c))
            tt[c.name] = ex[sel, 5] - ex[sel, 4]
        ticks = world.ticks
        measured = ticks[:, 0] > cfg.warmup + 1e-9 if ticks.size else np.zeros(0, dtype=bool)
        return cls(
            vmt_km=M[M_VMT_M] / 1000.0,
            vht_h=M[M_VHT_S] / 3600.0,
            travel_times=tt,
            speed_n=int(M[M_SPD_N]),
            speed_mean=float(M[M_SPD_MEAN]),
            speed_m2=float(M[M_SPD_M2]),
            fuel_l=float(M[M_FUEL_L]) if world.fuel_enabled else None,
            cacc_s=float(M[M_CACC_S]),
            platooned_s=float(M[M_PLAT_S]),
            depth_sum=float(M[M_DEPTH_SUM]),
            depth_n=float(M[M_DEPTH_N]),
            share_sum=float(M[M_SHARE_SUM]),
            share_n=float(M[M_SHARE_N]),
            measured_s=float(M[M_MEAS_S]),
            free_flow_time=cfg.geometry.length / cfg.free_flow_speed,
            fallbacks=world.fallback_count,
            missed_exits=world.missed_exit_count,
            starved=world.starved_count,
            latent_max=world.latent_max,
            violations=int(ticks[measured, 5].sum()) if ticks.size else 0,
        )

    @property
    def speed_std(self):
        if self.speed_n == 0:
            return None
        return math.sqrt(self.speed_m2 / self.speed_n)


# ---------------------------------------------------------------- mobility

def q_value(ledger_or_vmt, vht_h=None, units="kmh"):
    """Network speed VMT/VHT in km/h (``units="mph"`` for miles per hour).

    Accepts a ledger or a ``(vmt_km, vht_h)`` pair; returns None when no
    vehicle-hours were recorded.
    """
    if vht_h is None:
        vmt, vht = ledger_or_vmt.vmt_km, ledger_or_vmt.vht_h
    else:
        vmt, vht = ledger_or_vmt, vht_h
    if not vht > 0:
        return None
    q = vmt / vht
    if units == "mph":
        return q / KM_PER_MILE
    if units != "kmh":
        raise ValueError("units must be 'kmh' or 'mph'")
    return q


def pti(travel_times, free_flow_time, min_samples=MIN_TRAVERSALS):
    """95th-percentile travel time over the free-flow time.

    The percentile interpolates linearly between order statistics.  Returns
    None with fewer than ``min_samples`` traversals.
    """
    tt = np.asarray(travel_times, dtype=float)
    if tt.size < min_samples:
        return None
    return float(np.percentile(tt, 95.0)) / free_flow_time


# ---------------------------------------------------------------- safety

def speed_stddev(samples):
    """Population standard deviation of speed samples; None if empty."""
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        return None
    return float(np.std(x))


# ---------------------------------------------------------------- environment

@dataclass(frozen=True)
class VTMicroCoefficients:
    """4x4 coefficient matrices ``K[i][j]`` for speed power i and
    acceleration power j, one for acceleration >= 0 and one for < 0."""
    positive: np.ndarray
    negative: np.ndarray

    def as_array(self):
        return np.stack([np.asarray(self.positive, float), np.asarray(self.negative, float)])

    @classmethod
    def zeros(cls):
        return cls(np.zeros((4, 4)), np.zeros((4, 4)))


def fuel_rate(v_kmh, a_kmhps, coeffs: VTMicroCoefficients):
    """Fuel rate exp(sum K[i][j] v^i a^j) with v in km/h and a in km/h/s."""
    K = coeffs.positive if a_kmhps >= 0 else coeffs.negative
    vp = np.array([1.0, v_kmh, v_kmh ** 2, v_kmh ** 3])
    ap = np.array([1.0, a_kmhps, a_kmhps ** 2, a_kmhps ** 3])
    return float(np.exp(vp @ np.asarray(K, float) @ ap))


def load_vtmicro(path) -> VTMicroCoefficients:
    """Read ``regime,i,j,coefficient`` rows; regime is positive or negative."""
    mats = {"positive": np.full((4, 4), np.nan), "negative": np.full((4, 4), np.nan)}
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#") or row[0].strip() == "regime":
                continue
            regime = row[0].strip().lower()
            if regime not in mats:
                raise ValueError(f"unknown regime {row[0]!r}")
            mats[regime][int(row[1]), int(row[2])] = float(row[3])
    for name, m in mats.items():
        if np.isnan(m).any():
            raise ValueError(f"{path}: {name} regime needs all 16 coefficients")
    return VTMicroCoefficients(mats["positive"], mats["negative"])


# ---------------------------------------------------------------- equity

def equity_summary(travel_times: Mapping[str, Sequence[float]], min_samples=MIN_TRAVERSALS):
    """Quartile summary per class.  Classes without enough traversals map to
    ``{"count": n}`` only."""
    out = {}
    for c in VehicleClass:
        tt = np.asarray(travel_times.get(c.name, ()), dtype=float)
        if tt.size < min_samples:
            out[c.name] = {"count": int(tt.size)}
            continue
        q1, med, q3 = np.percentile(tt, [25.0, 50.0, 75.0])
        out[c.name] = {"min": float(tt.min()), "q1": float(q1), "median": float(med),
                       "q3": float(q3), "max": float(tt.max()), "count": int(tt.size)}
    return out


# ---------------------------------------------------------------- platooning

def platoon_measures(ledger: MetricsLedger):
    """Percent platooned, mean platoon depth and VHP per simulated hour.

    Returns None when no CACC vehicle was present.
    """
    if ledger.cacc_s <= 0 or ledger.share_n == 0:
        return None
    hours = ledger.measured_s / 3600.0
    return {
        "pct_platooned": 100.0 * ledger.share_sum / ledger.share_n,
        "mean_depth": ledger.depth_sum / ledger.depth_n if ledger.depth_n > 0 else None,
        "vhp": (ledger.platooned_s / 3600.0) / hours if hours > 0 else None,
    }


def platoon_measures_from_ticks(n_cacc, depths_per_tick, tick_dt, hours):
    """Same measures from raw per-tick data.

    ``depths_per_tick[k]`` lists the depth of every platooned vehicle at
    tick k.
    """
    n_cacc = np.asarray(n_cacc)
    counts = np.array([len(d) for d in depths_per_tick], dtype=float)
    live = n_cacc > 0
    if not live.any():
        return None
    all_depths = [x for d in depths_per_tick for x in d]
    return {
        "pct_platooned": 100.0 * float(np.mean(counts[live] / n_cacc[live])),
        "mean_depth": float(np.mean(all_depths)) if all_depths else None,
        "vhp": float(counts.sum() * tick_dt / 3600.0) / hours,
    }


def summarize(ledger: MetricsLedger):
    """One flat row of every measure for a replication (None where absent)."""
    tt = ledger.travel_times
    all_tt = np.concatenate([np.asarray(v, float) for v in tt.values()]) if tt else np.zeros(0)
    gp = np.asarray(tt.get("GP", ()), dtype=float)
    pm = platoon_measures(ledger) or {}
    return {
        "q_kmh": q_value(ledger),
        "pti": pti(all_tt, ledger.free_flow_time),
        "speed_std_ms": ledger.speed_std,
        "fuel_l": ledger.fuel_l,
        "gp_median_tt_s": float(np.median(gp)) if gp.size >= MIN_TRAVERSALS else None,
        "pct_platooned": pm.get("pct_platooned"),
        "mean_depth": pm.get("mean_depth"),
        "vhp": pm.get("vhp"),
        "vmt_km": ledger.vmt_km,
        "vht_h": ledger.vht_h,
        "traversals": int(all_tt.size),
        "fallbacks": ledger.fallbacks,
        "missed_exits": ledger.missed_exits,
        "starved": ledger.starved,
        "latent_max": ledger.latent_max,
        "violations": ledger.violations,
    }


# ---------------------------------------------------------------- scoring

CATEGORIES = ("mobility", "safety", "equity", "environment", "platooning")
# measure key, +1 if larger is better, -1 if smaller is better
TRADITIONAL = {
    "mobility": ("q_kmh", +1),
    "safety": ("speed_std_ms", -1),
    "equity": ("gp_median_tt_s", -1),
    "environment": ("fuel_l", -1),
}


def _mean_se(values):
    x = np.asarray([v for v in values if v is not None], dtype=float)
    if x.size == 0:
        return None, None
    se = float(np.std(x, ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(np.mean(x)), se


def traditional_score(values, baseline, direction, z=1.96):
    """+1 improved, -1 degraded, 0 inside the noise band, None if absent."""
    m, se = _mean_se(values)
    mb, seb = _mean_se(baseline)
    if m is None or mb is None:
        return None
    band = z * math.sqrt(se ** 2 + seb ** 2)
    diff = direction * (m - mb)
    if diff > band:
        return 1
    if diff < -band:
        return -1
    return 0


def rank_scores(values: Mapping[str, Tuple[float, float]]):
    """Rank strategies by (VHP, percent platooned), best = len(values).

    Ties share the higher rank.
    """
    keys = list(values)
    out = {}
    for k in keys:
        better = sum(1 for j in keys if values[j] > values[k])
        out[k] = len(keys) - better
    return out


@dataclass
class ScoreMatrix:
    strategies: Tuple[str, ...]
    mps: Tuple[float, ...]
    traditional: Dict[Tuple[str, float], Dict[str, Optional[int]]]
    platoon: Dict[Tuple[str, float], Optional[int]]
    normalized: Dict[Tuple[str, float], Optional[float]]

    def rows(self):
        for s in self.strategies:
            for mp in self.mps:
                t = self.traditional.get((s, mp), {})
                yield {
                    "strategy": s, "mp": mp,
                    **{c: t.get(c) for c in TRADITIONAL},
                    "platooning": self.platoon.get((s, mp)),
                    "normalized_sum": self.normalized.get((s, mp)),
                }


def score_matrix(results, baseline, strategies=None, mps=None, z=1.96) -> ScoreMatrix:
    """Score every (strategy, MP) cell against the baseline.

    ``results[(strategy, mp)]`` and ``baseline`` are lists of per-replication
    dicts as produced by :func:`summarize` (keys ``q_kmh``, ``speed_std_ms``,
    ``gp_median_tt_s``, ``fuel_l``, ``vhp``, ``pct_platooned``; None where
    absent).  Missing cells come
    out as None.  Each category is min-max normalised over the whole grid
    before the categories are summed.
    """
    if strategies is None:
        strategies = sorted({s for s, _ in results})
    if mps is None:
        mps = sorted({mp for _, mp in results})
    strategies, mps = tuple(strategies), tuple(mps)
    trad, plat = {}, {}
    for s in strategies:
        for mp in mps:
            reps = results.get((s, mp))
            if not reps:
                trad[(s, mp)] = {c: None for c in TRADITIONAL}
                continue
            trad[(s, mp)] = {c: traditional_score([r.get(key) for r in reps],
                                                  [b.get(key) for b in baseline], d, z)
                             for c, (key, d) in TRADITIONAL.items()}
    for mp in mps:
        vals = {}
        for s in strategies:
            reps = results.get((s, mp))
            if not reps:
                plat[(s, mp)] = None
                continue
            vhp, _ = _mean_se([r.get("vhp") for r in reps])
            pct, _ = _mean_se([r.get("pct_platooned") for r in reps])
            vals[s] = (vhp if vhp is not None else 0.0, pct if pct is not None else 0.0)
        for s, r in rank_scores(vals).items():
            plat[(s, mp)] = r
    grid = {c: {} for c in CATEGORIES}
    for key in trad:
        for c in TRADITIONAL:
            grid[c][key] = trad[key][c]
        grid["platooning"][key] = plat.get(key)
    norm = {}
    for key in trad:
        total, any_present = 0.0, False
        for c in CATEGORIES:
            x = grid[c][key]
            if x is None:
                continue
            present = [v for v in grid[c].values() if v is not None]
            lo, hi = min(present), max(present)
            total += (x - lo) / (hi - lo) if hi > lo else 0.0
            any_present = True
        norm[key] = total if any_present else None
    return ScoreMatrix(strategies, mps, trad, plat, norm)
