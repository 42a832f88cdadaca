"""Nonlinear multibody dynamics of the drag-free satellite.

Implements the exact state-derivative of the coupled satellite / MOSA /
test-mass system: rigid-body attitude dynamics of the spacecraft, the two
moving optical sub-assemblies (MOSAs) as damped torsional oscillators about
the shared z-axis, and each test mass (TM) as a free body inside its
electrostatic suspension cage, expressed relative to the rotating optical
reference frame.

Frames: IRF (inertial), SRF (satellite body), ORF_i (optical, one per
MOSA/TM, rotated about z by gamma_i = +/-(gamma_nominal_i + zeta_i)), and
MRF_i (test mass). Attitudes are small-angle vectors throughout, so the
kinematics are theta_dot = omega and the ORF->MRF rotation is
I - skew(theta_MO).

The satellite angular acceleration and the MOSA angular accelerations are
mutually coupled (the MOSA reaction torque enters the satellite equation
while the satellite acceleration enters the MOSA equation); they are solved
jointly as one 5x5 linear system, after which the TM translational and
rotational accelerations are evaluated using the fresh values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .states import INPUT_DIM, STATE_DIM

_E3 = np.array([0.0, 0.0, 1.0])
_ZERO3 = np.zeros(3)

# Rotation sense of the two optical assemblies about +z: MOSA 1 at
# +gamma_1, MOSA 2 at -gamma_2, symmetric about the SRF x-axis.
TM_SIGN = (1.0, -1.0)

DisturbanceTerm = Union[np.ndarray, float, Callable[[float, np.ndarray], np.ndarray]]


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric cross-product matrix: skew(v) @ w == cross(v, w)."""
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def omega_big(x: np.ndarray, x_dot: np.ndarray) -> np.ndarray:
    """Angular transport operator skew(x_dot) + skew(x) @ skew(x).

    Applied to a lever arm it yields the Euler plus centripetal
    acceleration contributed by a frame rotating at rate ``x``.
    """
    sx = skew(x)
    return skew(x_dot) + sx @ sx


def rotation_z(angle: float) -> np.ndarray:
    """Proper rotation about the z-axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass
class SatelliteParams:
    """Physical parameters of the satellite, MOSAs, and test masses.

    All quantities in SI units. Per-TM values are stacked along axis 0.
    Inertia matrices must be symmetric positive definite; their inverses
    are cached at construction so the derivative evaluation never
    factorizes per call.
    """

    m_s: float = 1500.0
    j_s: np.ndarray = field(default_factory=lambda: np.diag([800.0, 800.0, 1000.0]))
    m_m: np.ndarray = field(default_factory=lambda: np.array([1.9369, 1.9369]))
    j_m: np.ndarray = field(
        default_factory=lambda: np.stack([np.eye(3) * 6.9e-4, np.eye(3) * 6.9e-4])
    )
    i_zz: np.ndarray = field(default_factory=lambda: np.array([5.0, 5.0]))
    omega_n: np.ndarray = field(default_factory=lambda: np.array([72.76, 72.76]))
    xi: np.ndarray = field(default_factory=lambda: np.array([0.0323, 0.0323]))
    b_s: np.ndarray = field(
        default_factory=lambda: np.array([[0.1074, 0.3216, 0.0], [0.1074, -0.3216, 0.0]])
    )
    b_m: np.ndarray = field(
        default_factory=lambda: np.array([[0.25, 0.0, 0.0], [0.25, 0.0, 0.0]])
    )
    gamma_nominal: np.ndarray = field(
        default_factory=lambda: np.array([np.pi / 6.0, np.pi / 6.0])
    )

    def __post_init__(self):
        self.j_s = np.asarray(self.j_s, dtype=float)
        self.m_m = np.asarray(self.m_m, dtype=float)
        self.j_m = np.asarray(self.j_m, dtype=float)
        self.i_zz = np.asarray(self.i_zz, dtype=float)
        self.omega_n = np.asarray(self.omega_n, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.b_s = np.asarray(self.b_s, dtype=float)
        self.b_m = np.asarray(self.b_m, dtype=float)
        self.gamma_nominal = np.asarray(self.gamma_nominal, dtype=float)
        self._validate()
        self._j_s_inv = np.linalg.inv(self.j_s)
        self._j_m_inv = np.stack([np.linalg.inv(self.j_m[i]) for i in range(2)])

    def _validate(self):
        if not self.m_s > 0:
            raise ValueError("satellite mass must be positive")
        if self.m_m.shape != (2,) or not np.all(self.m_m > 0):
            raise ValueError("TM masses must be two positive scalars")
        if not np.all(self.i_zz > 0):
            raise ValueError("MOSA inertias must be positive")
        if not np.all((self.xi > 0) & (self.xi < 1)):
            raise ValueError("MOSA damping ratios must lie in (0, 1)")
        for name, mat in [("j_s", self.j_s)] + [
            (f"j_m[{i}]", self.j_m[i]) for i in range(2)
        ]:
            if mat.shape != (3, 3) or not np.allclose(mat, mat.T):
                raise ValueError(f"{name} must be a symmetric 3x3 matrix")
            if np.any(np.linalg.eigvalsh(mat) <= 0):
                raise ValueError(f"{name} must be positive definite")

    def to_dict(self) -> dict:
        return {
            "m_s": self.m_s,
            "j_s": self.j_s.tolist(),
            "m_m": self.m_m.tolist(),
            "j_m": self.j_m.tolist(),
            "i_zz": self.i_zz.tolist(),
            "omega_n": self.omega_n.tolist(),
            "xi": self.xi.tolist(),
            "b_s": self.b_s.tolist(),
            "b_m": self.b_m.tolist(),
            "gamma_nominal": self.gamma_nominal.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SatelliteParams":
        kwargs = {k: np.asarray(v, dtype=float) if k != "m_s" else float(v) for k, v in data.items()}
        return cls(**kwargs)


@dataclass
class DisturbanceModel:
    """External disturbance, stiffness, and gravity-gradient terms.

    Every field is either a constant array (broadcast over time) or a
    callable ``(t, x) -> array`` evaluated at each derivative call. The
    default model is identically zero.

    Fields follow the plant equations: ``d_s_torque`` acts on the satellite
    attitude, ``d_s_force`` on its translation (entering the relative TM
    dynamics), the per-TM pairs act on each test mass, and ``d_zeta`` is
    the scalar torque disturbance on each MOSA hinge.
    """

    d_s_torque: DisturbanceTerm = 0.0
    d_s_force: DisturbanceTerm = 0.0
    d_m_force: DisturbanceTerm = 0.0
    d_m_torque: DisturbanceTerm = 0.0
    f_stiffness: DisturbanceTerm = 0.0
    m_stiffness: DisturbanceTerm = 0.0
    g_gradient: DisturbanceTerm = 0.0
    d_zeta: DisturbanceTerm = 0.0

    @staticmethod
    def _eval(term: DisturbanceTerm, t: float, x: np.ndarray, shape: tuple) -> np.ndarray:
        if callable(term):
            return np.broadcast_to(np.asarray(term(t, x), dtype=float), shape)
        return np.broadcast_to(np.asarray(term, dtype=float), shape)

    def resolve(self, t: float, x: np.ndarray) -> dict:
        return {
            "d_s_torque": self._eval(self.d_s_torque, t, x, (3,)),
            "d_s_force": self._eval(self.d_s_force, t, x, (3,)),
            "d_m_force": self._eval(self.d_m_force, t, x, (2, 3)),
            "d_m_torque": self._eval(self.d_m_torque, t, x, (2, 3)),
            "f_stiffness": self._eval(self.f_stiffness, t, x, (2, 3)),
            "m_stiffness": self._eval(self.m_stiffness, t, x, (2, 3)),
            "g_gradient": self._eval(self.g_gradient, t, x, (2, 3)),
            "d_zeta": self._eval(self.d_zeta, t, x, (2,)),
        }


def rotation_orf_to_srf(i: int, zeta_i: float, params: SatelliteParams) -> np.ndarray:
    """Rotation matrix from ORF_i to the SRF.

    The optical assembly i sits at signed angle +/-(gamma_nominal_i +
    zeta_i) about the common z-axis (+ for i=1, - for i=2).
    """
    if i not in (1, 2):
        raise ValueError("TM index must be 1 or 2")
    angle = TM_SIGN[i - 1] * (params.gamma_nominal[i - 1] + zeta_i)
    return rotation_z(angle)


def plant_derivative(
    x: np.ndarray,
    u: np.ndarray,
    params: SatelliteParams,
    disturbances: Optional[DisturbanceModel] = None,
    t: float = 0.0,
) -> np.ndarray:
    """Exact state derivative of the full 34-state plant.

    Parameters
    ----------
    x : (34,) array
        Physical state, layout per :mod:`dfacs.states`.
    u : (20,) array
        Actuation vector.
    params : SatelliteParams
    disturbances : DisturbanceModel, optional
        Defaults to the all-zero model.
    t : float
        Time, forwarded to time-dependent disturbances.

    Returns
    -------
    (34,) array
        Stacked derivative in the same layout.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (STATE_DIM,):
        raise ValueError(f"state must have shape ({STATE_DIM},)")
    if u.shape != (INPUT_DIM,):
        raise ValueError(f"input must have shape ({INPUT_DIM},)")

    om = x[3:6]
    ze = x[6:8]
    zed = x[8:10]
    m_t, f_t = u[0:3], u[3:6]
    f_e = (u[6:9], u[12:15])
    m_e = (u[9:12], u[15:18])
    m_mosa = u[18:20]

    if disturbances is None:
        d_s_torque = d_s_force = _ZERO3
        d_m_force = d_m_torque = f_stiff = m_stiff = g_grad = np.zeros((2, 3))
        d_zeta = np.zeros(2)
    else:
        d = disturbances.resolve(t, x)
        d_s_torque, d_s_force = d["d_s_torque"], d["d_s_force"]
        d_m_force, d_m_torque = d["d_m_force"], d["d_m_torque"]
        f_stiff, m_stiff = d["f_stiffness"], d["m_stiffness"]
        g_grad, d_zeta = d["g_gradient"], d["d_zeta"]

    j_s_inv = params._j_s_inv

    # ORF->SRF rotations and cage-center lever arms at the current MOSA angles
    rot = [rotation_orf_to_srf(i + 1, ze[i], params) for i in range(2)]
    b = [params.b_s[i] + rot[i] @ params.b_m[i] for i in range(2)]

    # Satellite attitude and MOSA hinge accelerations are linearly coupled:
    # the MOSA reaction torque I_zz*zeta_ddot enters the satellite equation,
    # and the satellite acceleration enters each hinge equation. Solve the
    # 5x5 system [omega_dot_SI; zeta_ddot_1; zeta_ddot_2] exactly.
    c_w = -skew(om) @ (params.j_s @ om) + m_t + d_s_torque
    mat = np.eye(5)
    rhs = np.empty(5)
    for i in range(2):
        c_w = c_w - rot[i] @ m_e[i] - skew(b[i]) @ (rot[i] @ f_e[i])
        r_e3 = rot[i] @ _E3
        mat[0:3, 3 + i] = params.i_zz[i] * (j_s_inv @ r_e3)
        mat[3 + i, 0:3] = r_e3
        rhs[3 + i] = (
            -2.0 * params.omega_n[i] * params.xi[i] * zed[i]
            - params.omega_n[i] ** 2 * ze[i]
            + (m_mosa[i] - m_e[i][2] + d_zeta[i]) / params.i_zz[i]
        )
    rhs[0:3] = j_s_inv @ c_w
    sol = np.linalg.solve(mat, rhs)
    om_dot = sol[0:3]
    ze_ddot = sol[3:5]

    out = np.empty(STATE_DIM)
    out[0:3] = om
    out[3:6] = om_dot
    out[6:8] = zed
    out[8:10] = ze_ddot

    om_s_transport = omega_big(om, om_dot)

    for i in range(2):
        base = 10 + 12 * i
        r = x[base : base + 3]
        r_dot = x[base + 3 : base + 6]
        th_m = x[base + 6 : base + 9]
        om_m = x[base + 9 : base + 12]

        r_s_o = rot[i].T
        r_o_m = np.eye(3) - skew(th_m)
        om_oi = r_s_o @ om + zed[i] * _E3
        om_oi_dot = r_s_o @ om_dot + ze_ddot[i] * _E3
        om_o_transport = omega_big(om_oi, om_oi_dot)

        # Thruster/electrostatic reactions accelerate the satellite (mass
        # m_s), which appears as relative acceleration of the free TM.
        other = 1 - i
        r_acc = (
            r_o_m.T @ g_grad[i]
            + (f_e[i] + d_m_force[i] + f_stiff[i]) / params.m_m[i]
            - r_o_m @ (f_t + d_s_force) / params.m_s
            + (r_o_m @ f_e[i] + (r_o_m @ r_s_o @ rot[other]) @ f_e[other]) / params.m_s
            - r_s_o @ (om_s_transport @ params.b_s[i])
            - om_o_transport @ params.b_m[i]
            - om_o_transport @ r
            - 2.0 * skew(om_oi) @ r_dot
        )

        # TM rotation: gyroscopic term with the absolute TM rate, the applied
        # torques, minus the angular-acceleration transport of ORF_i
        # (= R_S^Oi @ omega_dot_SI + zeta_ddot_i * e3 rotated into the MRF).
        om_mi = r_o_m @ (om_m + om_oi)
        j_m_i = params.j_m[i]
        om_m_dot = (
            -params._j_m_inv[i] @ (skew(om_mi) @ (j_m_i @ om_mi))
            + params._j_m_inv[i] @ (r_o_m @ (m_e[i] + d_m_torque[i] + m_stiff[i]))
            - r_o_m @ om_oi_dot
        )

        out[base : base + 3] = r_dot
        out[base + 3 : base + 6] = r_acc
        out[base + 6 : base + 9] = om_m
        out[base + 9 : base + 12] = om_m_dot

    return out


def make_rhs(
    params: SatelliteParams,
    disturbances: Optional[DisturbanceModel] = None,
    input_func: Optional[Callable[[float], np.ndarray]] = None,
) -> Callable[[float, np.ndarray], np.ndarray]:
    """Bind parameters, disturbances, and an input schedule into f(t, x)."""
    zero_u = np.zeros(INPUT_DIM)
    if input_func is None:
        return lambda t, x: plant_derivative(x, zero_u, params, disturbances, t)
    return lambda t, x: plant_derivative(x, input_func(t), params, disturbances, t)
