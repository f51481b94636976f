"""Small shared vocabularies.

Integer values are stable: they are stored in the fleet's integer columns
and compared inside compiled kernels.
"""
import enum


class VehicleClass(enum.IntEnum):
    GP = 0
    HOV = 1
    CACC = 2


class ControlMode(enum.IntEnum):
    ADS = 0
    FALLBACK_HUMAN = 1


class Strategy(enum.Enum):
    BASE = "BASE"
    UML = "UML"
    MML = "MML"
    DL = "DL"
    DLA = "DLA"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"unknown strategy {value!r}") from None

    @property
    def folds_hov(self):
        """HOV demand is treated as GP under these strategies."""
        return self in (Strategy.UML, Strategy.DL, Strategy.DLA)


class LaneChangeKind(enum.IntEnum):
    NONE = 0
    DISCRETIONARY = 1
    CLUSTER = 2
    MANDATORY = 3
    RAMP_MERGE = 4
