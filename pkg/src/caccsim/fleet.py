"""Structure-of-arrays storage for the vehicle fleet.

Active vehicles live in slots ``0..n-1`` of a float matrix ``F`` and an int
matrix ``I`` (one row per attribute, one column per slot).  Removing a
vehicle moves the last active slot into the hole, and ``slot_of[vid]`` maps
vehicle ids to slots (-1 once a vehicle has left).  Scalar parameters travel
to the kernels in a flat float vector indexed by the ``P_*`` constants.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .enums import ControlMode, VehicleClass

# float rows
POS, SPEED, ACC, LEN, VDES, HV_VDES, OK_TIME, ENTRY_T, EXIT_X, WALL, LC_T, RAMP_X, JOIN_T = range(13)
N_FCOLS = 13

# int rows
VID, LANE, CLS, ORIGIN, DEST, PID, GPRED, MODE, MISS, LINK, STARVED, MISSED, DEPTH, GSIZE, EST = range(15)
N_ICOLS = 15

NO_LINK = -1  # LINK value when the leader is not a CACC sender

# parameter vector layout
(P_DT, P_T_INTRA, P_T_INTER, P_DSRC, P_MAX_SIZE, P_MIN_SIZE, P_LOSS_K, P_HOLD,
 P_CA, P_CB, P_CC, P_CDELTA, P_CS0, P_VCAP,
 P_HA, P_HB, P_HC, P_HDELTA, P_HS0, P_HT,
 P_CP, P_CDTH, P_CSAFE, P_HP, P_HDTH, P_HSAFE,
 P_COOLDOWN, P_DECIDE_EVERY, P_SELECT_MAX, P_URGENCY_MAX,
 P_CH_KIND, P_CH_RANGE, P_CH_POWER, P_CH_LOAD, P_CH_MID, P_CH_K,
 P_LENGTH, P_NLANES, P_STRATEGY, P_EXIT_PREP, P_WARMUP, P_TICK_EVERY,
 P_JOIN_GAP_TOL, P_JOIN_DV_TOL, P_ML_LANE, P_ACCESS_CONTROL, P_FUEL_ON,
 P_STARVE_DIST, P_SPAWN_LOOKAHEAD) = range(49)
N_PARAMS = 49

# counters (int64 vector)
(C_STEP, C_NACTIVE, C_PID_NEXT, C_UCUR, C_LC_N, C_PL_N, C_EX_N, C_TK_N,
 C_ENTERED, C_EXITED, C_FAULT_A, C_FAULT_B, C_FALLBACKS, C_MISSED_EXITS,
 C_STARVED, C_LATENT_MAX, C_NEXT_VID) = range(17)
N_COUNTERS = 17

# metric accumulators (float vector)
(M_VMT_M, M_VHT_S, M_SPD_N, M_SPD_MEAN, M_SPD_M2, M_FUEL_L, M_CACC_S,
 M_PLAT_S, M_DEPTH_SUM, M_DEPTH_N, M_SHARE_SUM, M_SHARE_N, M_MEAS_S) = range(13)
N_METRICS = 13

# platoon event codes
EV_JOIN, EV_ESTABLISH, EV_SPLIT, EV_DISSOLVE, EV_LEAVE, EV_FALLBACK, EV_RESTORE = range(7)
EVENT_NAMES = ("join", "establish", "split", "dissolve", "leave", "fallback", "restore")

# log widths
LC_WIDTH = 8  # t, vid, cls, from, to, pos, kind, incentive
PL_WIDTH = 5  # t, code, pid, vid, size
EX_WIDTH = 8  # vid, cls, origin, dest, entry_t, exit_t, missed, starved
TK_WIDTH = 7  # t, n_cacc, n_platooned, n_platoons, depth_sum, violations, latent


@dataclass(frozen=True)
class VehicleState:
    """Snapshot of one vehicle, detached from the fleet arrays."""
    id: int
    cls: VehicleClass
    lane: int
    position: float
    speed: float
    accel: float
    length: float
    origin: int
    dest: int
    control_mode: ControlMode
    platoon: Optional[Tuple[int, int]]  # (platoon id, depth), None if free
    platoon_size: int = 1
    established: bool = False


class Fleet:
    """Growable slot storage; the kernels only ever see the raw arrays."""

    def __init__(self, capacity, n_vids):
        self.F = np.zeros((N_FCOLS, capacity))
        self.I = np.full((N_ICOLS, capacity), -1, dtype=np.int64)
        self.slot_of = np.full(max(n_vids, 1), -1, dtype=np.int64)

    @property
    def capacity(self):
        return self.F.shape[1]

    def ensure_vids(self, n_vids):
        if n_vids > self.slot_of.size:
            grown = np.full(max(n_vids, 2 * self.slot_of.size), -1, dtype=np.int64)
            grown[: self.slot_of.size] = self.slot_of
            self.slot_of = grown

    def snapshot(self, slot):
        F, I = self.F, self.I
        pid = int(I[PID, slot])
        return VehicleState(
            id=int(I[VID, slot]),
            cls=VehicleClass(int(I[CLS, slot])),
            lane=int(I[LANE, slot]),
            position=float(F[POS, slot]),
            speed=float(F[SPEED, slot]),
            accel=float(F[ACC, slot]),
            length=float(F[LEN, slot]),
            origin=int(I[ORIGIN, slot]),
            dest=int(I[DEST, slot]),
            control_mode=ControlMode(int(I[MODE, slot])),
            platoon=None if pid < 0 else (pid, int(I[DEPTH, slot])),
            platoon_size=int(I[GSIZE, slot]),
            established=bool(I[EST, slot]),
        )
