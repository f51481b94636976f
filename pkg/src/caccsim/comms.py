"""One-hop V2V reception model.

Three channel kinds are supported: an ideal disc, a logistic curve in
distance whose midpoint shrinks with channel load, and a piecewise-linear
lookup table (for curves digitised from measurements).
"""
import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np
from numba import njit

from .errors import ConfigError


class ChannelKind(IntEnum):
    IDEAL = 0
    PARAMETRIC = 1
    TABLE = 2


@dataclass(frozen=True)
class ChannelModel:
    kind: ChannelKind = ChannelKind.PARAMETRIC
    max_range: float = 500.0  # m
    power: float = 1.0  # relative transmit power, scales the midpoint
    load: float = 0.0  # channel busy ratio
    midpoint: float = 250.0  # m, distance of 50% reception at power 1, load 0
    steepness: float = 0.03  # 1/m
    table_distance: tuple = field(default=())
    table_probability: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "kind", ChannelKind(self.kind))
        problems = self.violations()
        if problems:
            raise ConfigError(problems)

    def violations(self):
        out = []
        if not self.max_range > 0:
            out.append("comms.max_range must be > 0")
        if not 0.0 <= self.load <= 1.0:
            out.append("comms.load must lie in [0, 1]")
        if not self.power > 0:
            out.append("comms.power must be > 0")
        if not self.steepness > 0:
            out.append("comms.steepness must be > 0")
        if self.kind == ChannelKind.TABLE:
            d = np.asarray(self.table_distance, dtype=float)
            p = np.asarray(self.table_probability, dtype=float)
            if d.size < 2 or d.size != p.size:
                out.append("comms.table needs at least two (distance, probability) rows")
            else:
                if np.any(np.diff(d) <= 0):
                    out.append("comms.table distances must be strictly increasing")
                if np.any((p < 0) | (p > 1)):
                    out.append("comms.table probabilities must lie in [0, 1]")
                if np.any(np.diff(p) > 0):
                    out.append("comms.table is not monotone: probability must be non-increasing in distance")
        return out

    def arrays(self):
        """Table columns as float arrays (empty unless kind is TABLE)."""
        return (np.asarray(self.table_distance, dtype=np.float64),
                np.asarray(self.table_probability, dtype=np.float64))

    @classmethod
    def ideal(cls, max_range=500.0):
        return cls(kind=ChannelKind.IDEAL, max_range=max_range)

    @classmethod
    def from_table(cls, distance, probability, max_range=None, **kw):
        distance = tuple(float(x) for x in distance)
        if max_range is None:
            max_range = distance[-1] if distance else 500.0
        return cls(kind=ChannelKind.TABLE, max_range=max_range, table_distance=distance,
                   table_probability=tuple(float(x) for x in probability), **kw)


def load_table_csv(path):
    """Read a two-column ``distance_m,probability`` CSV (header optional)."""
    dist, prob = [], []
    with open(Path(path), newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                d, p = float(row[0]), float(row[1])
            except ValueError:
                continue  # header line
            dist.append(d)
            prob.append(p)
    return dist, prob


@njit(cache=True)
def _reception(kind, d, max_range, power, load, mid, k, tab_d, tab_p):
    if d > max_range:
        return 0.0
    if kind == 0:
        return 1.0
    if kind == 1:
        z = k * (d - mid * power * (1.0 - 0.5 * load))
        if z > 700.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(z))
    if d <= tab_d[0]:
        return tab_p[0]
    n = tab_d.size
    if d >= tab_d[n - 1]:
        return tab_p[n - 1]
    return np.interp(d, tab_d, tab_p)


def reception_probability(model: ChannelModel, distance):
    if distance < 0:
        raise ValueError("distance must be non-negative")
    td, tp = model.arrays()
    return _reception(int(model.kind), float(distance), model.max_range, model.power,
                      model.load, model.midpoint, model.steepness, td, tp)


def _position(v):
    return float(getattr(v, "position", v))


def sample_link(model: ChannelModel, rng: np.random.Generator, sender, receiver):
    """One Bernoulli reception draw for a sender-receiver pair.

    ``sender`` and ``receiver`` are vehicle snapshots or bare positions.
    """
    d = abs(_position(sender) - _position(receiver))
    return bool(rng.random() < reception_probability(model, d))
