"""State and input vector layouts for the drag-free satellite plant.

The physical state is a flat 34-vector and the actuation a flat 20-vector;
all numerical code works on these. The dataclasses below give named,
block-structured views with bit-exact round-tripping to the flat layout.

State layout (SI units):
    [0:3]   theta_SI     satellite attitude, rad (small-angle, SRF wrt IRF)
    [3:6]   omega_SI     satellite angular rate, rad/s
    [6:8]   zeta         MOSA deviation angles, rad
    [8:10]  zeta_dot     MOSA deviation rates, rad/s
    then per test mass i in {1, 2}:
    [10+12i : 13+12i]    r_MO_i       relative TM position in ORF_i, m
    [13+12i : 16+12i]    r_dot_MO_i   relative TM velocity, m/s
    [16+12i : 19+12i]    theta_MO_i   TM attitude wrt ORF_i, rad
    [19+12i : 22+12i]    omega_MO_i   TM angular rate, rad/s

Input layout (SI units):
    [0:3]   M_T      thruster torque, N*m
    [3:6]   F_T      thruster force, N
    [6:9]   F_E_1    electrostatic force on TM 1, N
    [9:12]  M_E_1    electrostatic torque on TM 1, N*m
    [12:15] F_E_2    electrostatic force on TM 2, N
    [15:18] M_E_2    electrostatic torque on TM 2, N*m
    [18:20] M_MOSA   MOSA drive torques about z, N*m
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 34
INPUT_DIM = 20

STATE_BLOCKS: dict[str, slice] = {
    "theta_SI": slice(0, 3),
    "omega_SI": slice(3, 6),
    "zeta": slice(6, 8),
    "zeta_dot": slice(8, 10),
    "r_MO_1": slice(10, 13),
    "r_dot_MO_1": slice(13, 16),
    "theta_MO_1": slice(16, 19),
    "omega_MO_1": slice(19, 22),
    "r_MO_2": slice(22, 25),
    "r_dot_MO_2": slice(25, 28),
    "theta_MO_2": slice(28, 31),
    "omega_MO_2": slice(31, 34),
}

INPUT_BLOCKS: dict[str, slice] = {
    "M_T": slice(0, 3),
    "F_T": slice(3, 6),
    "F_E_1": slice(6, 9),
    "M_E_1": slice(9, 12),
    "F_E_2": slice(12, 15),
    "M_E_2": slice(15, 18),
    "M_MOSA": slice(18, 20),
}


def _component_names(blocks: dict[str, slice]) -> list[str]:
    names = []
    for name, sl in blocks.items():
        width = sl.stop - sl.start
        suffixes = ("x", "y", "z") if width == 3 else ("1", "2")
        names.extend(f"{name}_{s}" for s in suffixes[:width])
    return names


STATE_NAMES: list[str] = _component_names(STATE_BLOCKS)
INPUT_NAMES: list[str] = _component_names(INPUT_BLOCKS)


def _as_float_array(value, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite component")
    return arr


@dataclass
class PlantState:
    """Structured view of the 34-dimensional physical state.

    Per-TM quantities are stored as (2, 3) arrays indexed by TM (0-based).
    """

    theta_si: np.ndarray = field(default_factory=lambda: np.zeros(3))
    omega_si: np.ndarray = field(default_factory=lambda: np.zeros(3))
    zeta: np.ndarray = field(default_factory=lambda: np.zeros(2))
    zeta_dot: np.ndarray = field(default_factory=lambda: np.zeros(2))
    r_mo: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    r_dot_mo: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    theta_mo: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    omega_mo: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))

    def __post_init__(self):
        self.theta_si = _as_float_array(self.theta_si, (3,))
        self.omega_si = _as_float_array(self.omega_si, (3,))
        self.zeta = _as_float_array(self.zeta, (2,))
        self.zeta_dot = _as_float_array(self.zeta_dot, (2,))
        self.r_mo = _as_float_array(self.r_mo, (2, 3))
        self.r_dot_mo = _as_float_array(self.r_dot_mo, (2, 3))
        self.theta_mo = _as_float_array(self.theta_mo, (2, 3))
        self.omega_mo = _as_float_array(self.omega_mo, (2, 3))

    def to_vector(self) -> np.ndarray:
        x = np.empty(STATE_DIM)
        x[0:3] = self.theta_si
        x[3:6] = self.omega_si
        x[6:8] = self.zeta
        x[8:10] = self.zeta_dot
        for i in range(2):
            base = 10 + 12 * i
            x[base : base + 3] = self.r_mo[i]
            x[base + 3 : base + 6] = self.r_dot_mo[i]
            x[base + 6 : base + 9] = self.theta_mo[i]
            x[base + 9 : base + 12] = self.omega_mo[i]
        return x

    @classmethod
    def from_vector(cls, x) -> "PlantState":
        x = _as_float_array(x, (STATE_DIM,))
        per_tm = [x[10 + 12 * i : 22 + 12 * i] for i in range(2)]
        return cls(
            theta_si=x[0:3].copy(),
            omega_si=x[3:6].copy(),
            zeta=x[6:8].copy(),
            zeta_dot=x[8:10].copy(),
            r_mo=np.stack([blk[0:3] for blk in per_tm]),
            r_dot_mo=np.stack([blk[3:6] for blk in per_tm]),
            theta_mo=np.stack([blk[6:9] for blk in per_tm]),
            omega_mo=np.stack([blk[9:12] for blk in per_tm]),
        )


@dataclass
class ControlInput:
    """Structured view of the 20-dimensional actuation vector."""

    m_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_t: np.ndarray = field(default_factory=lambda: np.zeros(3))
    f_e: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    m_e: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    m_mosa: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def __post_init__(self):
        self.m_t = _as_float_array(self.m_t, (3,))
        self.f_t = _as_float_array(self.f_t, (3,))
        self.f_e = _as_float_array(self.f_e, (2, 3))
        self.m_e = _as_float_array(self.m_e, (2, 3))
        self.m_mosa = _as_float_array(self.m_mosa, (2,))

    def to_vector(self) -> np.ndarray:
        u = np.empty(INPUT_DIM)
        u[0:3] = self.m_t
        u[3:6] = self.f_t
        u[6:9] = self.f_e[0]
        u[9:12] = self.m_e[0]
        u[12:15] = self.f_e[1]
        u[15:18] = self.m_e[1]
        u[18:20] = self.m_mosa
        return u

    @classmethod
    def from_vector(cls, u) -> "ControlInput":
        u = _as_float_array(u, (INPUT_DIM,))
        return cls(
            m_t=u[0:3].copy(),
            f_t=u[3:6].copy(),
            f_e=np.stack([u[6:9], u[12:15]]),
            m_e=np.stack([u[9:12], u[15:18]]),
            m_mosa=u[18:20].copy(),
        )
