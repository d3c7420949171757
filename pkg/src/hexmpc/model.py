"""Kinematics and centroidal quantities of the six-legged telescopic-wheeled model.

Each leg has a hip revolute joint pitching about the base lateral (y) axis and a
prismatic knee along the leg axis, with a wheel at the tip.  The foot point is
the wheel-ground contact: wheel center minus the wheel radius along world z.

Frames / layouts:
  - configuration tangent ordering: [base linear (3), base angular (3), joints (12)];
  - joints are interleaved per leg: (hip, knee) for LF, MF, RF, LR, MR, RR;
  - leg axis in the base frame: a(theta) = (sin theta, 0, -cos theta), so a
    positive hip angle moves the foot forward;
  - centroidal momentum [linear; angular] is expressed in the world-aligned
    frame at the robot COM.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import geometry as geo

NUM_LEGS = 6
NUM_JOINTS = 12
NV = 18  # configuration tangent dimension


class FootId(IntEnum):
    LF = 0
    MF = 1
    RF = 2
    LR = 3
    MR = 4
    RR = 5


FOOT_NAMES = [f.name for f in FootId]

# lateral pairs for the stance-constraint deduplication heuristic; the first
# member of each pair is the one that keeps its constraint rows
SIDE_BY_SIDE_PAIRS = (
    (FootId.LF, FootId.RF),
    (FootId.MF, FootId.MR),
    (FootId.LR, FootId.RR),
)

PAIR_OF = {}
for _a, _b in SIDE_BY_SIDE_PAIRS:
    PAIR_OF[_a] = _b
    PAIR_OF[_b] = _a


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class Configuration:
    """Base pose (world_from_base) plus the 12 joint positions."""

    pos: np.ndarray  # (3,)
    rot: np.ndarray  # (3,3)
    joints: np.ndarray  # (12,) interleaved (hip, knee) per leg

    def __post_init__(self):
        object.__setattr__(self, "pos", np.array(self.pos, dtype=float).reshape(3))
        object.__setattr__(self, "rot", np.array(self.rot, dtype=float).reshape(3, 3))
        object.__setattr__(self, "joints", np.array(self.joints, dtype=float).reshape(NUM_JOINTS))
        if not geo.is_rotation(self.rot, tol=1e-6):
            raise ModelError("rotation part is not orthonormal with det +1")
        for a in (self.pos, self.rot, self.joints):
            a.setflags(write=False)

    @staticmethod
    def identity(joints=None) -> "Configuration":
        j = np.zeros(NUM_JOINTS) if joints is None else joints
        return Configuration(np.zeros(3), np.eye(3), j)


@dataclass(frozen=True)
class GeneralizedVelocity:
    """Base spatial velocity [linear; angular] in the base frame + joint rates."""

    base: np.ndarray  # (6,)
    joints: np.ndarray  # (12,)

    def __post_init__(self):
        object.__setattr__(self, "base", np.array(self.base, dtype=float).reshape(6))
        object.__setattr__(self, "joints", np.array(self.joints, dtype=float).reshape(NUM_JOINTS))
        if not (np.all(np.isfinite(self.base)) and np.all(np.isfinite(self.joints))):
            raise ModelError("non-finite velocity")
        self.base.setflags(write=False)
        self.joints.setflags(write=False)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.base, self.joints])


class RobotModel:
    """Immutable model parameters loaded from a JSON model file."""

    def __init__(self, data: dict):
        self.name = data.get("name", "unnamed")
        self.gravity = float(data.get("gravity", 9.81))
        self.wheel_radius = float(data["wheel_radius"])
        self.nominal_knee = float(data["nominal_knee_extension"])

        base = data["base"]
        self.base_mass = float(base["mass"])
        self.base_com = np.array(base["com"], dtype=float)
        self.base_inertia = np.array(base["inertia"], dtype=float)

        legs = data["legs"]
        missing = [n for n in FOOT_NAMES if n not in legs]
        if missing:
            raise ModelError(f"model file missing legs: {missing}")

        self.hip_offset = np.zeros((NUM_LEGS, 3))
        self.drive_wheel = np.zeros(NUM_LEGS, dtype=bool)
        self.thigh_mass = np.zeros(NUM_LEGS)
        self.thigh_com = np.zeros(NUM_LEGS)   # distance from hip along the leg axis
        self.thigh_inertia = np.zeros((NUM_LEGS, 3, 3))
        self.shank_mass = np.zeros(NUM_LEGS)
        self.shank_com_offset = np.zeros(NUM_LEGS)  # along leg axis, relative to wheel center
        self.shank_inertia = np.zeros((NUM_LEGS, 3, 3))
        self.hip_limits = np.zeros((NUM_LEGS, 2))
        self.knee_limits = np.zeros((NUM_LEGS, 2))
        self.hip_vel_limit = np.zeros(NUM_LEGS)
        self.knee_vel_limit = np.zeros(NUM_LEGS)
        self.hip_torque_limit = np.zeros(NUM_LEGS)
        self.knee_force_limit = np.zeros(NUM_LEGS)

        for i, name in enumerate(FOOT_NAMES):
            leg = legs[name]
            self.hip_offset[i] = leg["hip_offset"]
            self.drive_wheel[i] = bool(leg["drive_wheel"])
            self.thigh_mass[i] = leg["thigh"]["mass"]
            self.thigh_com[i] = leg["thigh"]["com_along_leg"]
            self.thigh_inertia[i] = leg["thigh"]["inertia"]
            self.shank_mass[i] = leg["shank"]["mass"]
            self.shank_com_offset[i] = leg["shank"].get("com_offset_from_wheel", 0.0)
            self.shank_inertia[i] = leg["shank"]["inertia"]
            self.hip_limits[i] = np.deg2rad(leg["hip_limits_deg"])
            self.knee_limits[i] = leg["knee_limits"]
            self.hip_vel_limit[i] = leg["hip_vel_limit"]
            self.knee_vel_limit[i] = leg["knee_vel_limit"]
            self.hip_torque_limit[i] = leg["hip_torque_limit"]
            self.knee_force_limit[i] = leg["knee_force_limit"]

        self.total_mass = self.base_mass + float(np.sum(self.thigh_mass + self.shank_mass))
        self._validate()

        # joint-space limit boxes in tangent/joint ordering (hip, knee) x 6
        self.joint_pos_min = np.empty(NUM_JOINTS)
        self.joint_pos_max = np.empty(NUM_JOINTS)
        self.joint_vel_max = np.empty(NUM_JOINTS)
        self.joint_torque_max = np.empty(NUM_JOINTS)
        for i in range(NUM_LEGS):
            self.joint_pos_min[2 * i] = self.hip_limits[i, 0]
            self.joint_pos_max[2 * i] = self.hip_limits[i, 1]
            self.joint_pos_min[2 * i + 1] = self.knee_limits[i, 0]
            self.joint_pos_max[2 * i + 1] = self.knee_limits[i, 1]
            self.joint_vel_max[2 * i] = self.hip_vel_limit[i]
            self.joint_vel_max[2 * i + 1] = self.knee_vel_limit[i]
            self.joint_torque_max[2 * i] = self.hip_torque_limit[i]
            self.joint_torque_max[2 * i + 1] = self.knee_force_limit[i]

    def _validate(self):
        if self.total_mass <= 0:
            raise ModelError("total mass must be positive")
        for name, I in [("base", self.base_inertia)] + [
            (FOOT_NAMES[i] + suffix, arr[i])
            for suffix, arr in (("/thigh", self.thigh_inertia), ("/shank", self.shank_inertia))
            for i in range(NUM_LEGS)
        ]:
            if not np.allclose(I, I.T, atol=1e-12):
                raise ModelError(f"inertia of {name} not symmetric")
            if np.any(np.linalg.eigvalsh(I) <= 0):
                raise ModelError(f"inertia of {name} not positive definite")
        spans = np.rad2deg(self.hip_limits[:, 1] - self.hip_limits[:, 0])
        for i in (FootId.MF, FootId.MR):
            if not np.isclose(spans[i], 50.0, atol=1e-6):
                raise ModelError(f"{FOOT_NAMES[i]} hip range must span 50 degrees, got {spans[i]}")
        for i in (FootId.LF, FootId.RF, FootId.LR, FootId.RR):
            if not np.isclose(spans[i], 90.0, atol=1e-6):
                raise ModelError(f"{FOOT_NAMES[i]} hip range must span 90 degrees, got {spans[i]}")

    @staticmethod
    def load(path) -> "RobotModel":
        with open(path) as f:
            return RobotModel(json.load(f))

    def nominal_configuration(self) -> Configuration:
        joints = np.zeros(NUM_JOINTS)
        joints[1::2] = self.nominal_knee
        # hips at zero: feet directly below the hips, base height puts feet at z=0
        base_height = -float(self.hip_offset[0, 2]) + self.nominal_knee + self.wheel_radius
        return Configuration(np.array([0.0, 0.0, base_height]), np.eye(3), joints)


def default_model_path() -> Path:
    return Path(__file__).resolve().parents[2] / "configs" / "model_hexapod.json"


# ---------------------------------------------------------------------------
# configuration manifold


def integrate_configuration(q: Configuration, dq: np.ndarray, dt: float) -> Configuration:
    """Compose q with the tangent increment dq*dt (group exp on the base pose)."""
    if dt < 0:
        raise ModelError("dt must be nonnegative")
    dq = np.asarray(dq, dtype=float).reshape(NV)
    dR, dp = geo.se3_exp(dt * dq[:6])
    rot, pos = geo.transform_compose(q.rot, q.pos, dR, dp)
    return Configuration(pos, geo.project_rotation(rot), q.joints + dt * dq[6:])


def difference_configuration(q1: Configuration, q2: Configuration) -> np.ndarray:
    """Tangent dq with integrate_configuration(q1, dq, 1) == q2."""
    dR, dp = geo.transform_inv_compose(q1.rot, q1.pos, q2.rot, q2.pos)
    xi = geo.se3_log(dR, dp)
    return np.concatenate([xi, q2.joints - q1.joints])


# ---------------------------------------------------------------------------
# batched kinematics engine
#
# All arrays carry a leading batch shape; a single configuration is batch ().


class Kinematics:
    """All configuration-dependent quantities for a batch of configurations.

    Built once per configuration batch and queried by the dynamics, the OCP
    evaluators and the solver; every member broadcasts over the batch shape.
    """

    def __init__(self, model: RobotModel, rot: np.ndarray, pos: np.ndarray, joints: np.ndarray):
        self.model = model
        rot = np.asarray(rot, dtype=float)
        pos = np.asarray(pos, dtype=float)
        joints = np.asarray(joints, dtype=float)
        self.batch = joints.shape[:-1]
        self.rot = np.broadcast_to(rot, self.batch + (3, 3))
        self.pos = np.broadcast_to(pos, self.batch + (3,))
        self.joints = joints

        m = model
        theta = joints[..., 0::2]  # (...,6)
        d = joints[..., 1::2]
        sin, cos = np.sin(theta), np.cos(theta)
        zero = np.zeros_like(sin)
        # leg axis and its theta-derivative in the base frame
        self.a = np.stack([sin, zero, -cos], axis=-1)          # (...,6,3)
        self.ap = np.stack([cos, zero, sin], axis=-1)          # (...,6,3)
        self.theta = theta
        self.d = d

        hip = m.hip_offset  # (6,3)
        self.wheel_c = hip + d[..., None] * self.a                       # base frame
        self.s_thigh = hip + m.thigh_com[:, None] * self.a               # (...,6,3)
        self.s_shank = hip + (d + m.shank_com_offset)[..., None] * self.a

        # world foot contact points: wheel center minus wheel radius along world z
        wc_w = self.pos[..., None, :] + np.einsum("...ij,...kj->...ki", self.rot, self.wheel_c)
        self.wheel_center_world = wc_w
        self.foot_w = wc_w - np.array([0.0, 0.0, m.wheel_radius])

        # base-frame COM offset and world COM
        msum = (
            m.base_mass * m.base_com
            + np.einsum("k,...kj->...j", m.thigh_mass, self.s_thigh)
            + np.einsum("k,...kj->...j", m.shank_mass, self.s_shank)
        )
        self.sbar = msum / m.total_mass
        self.com_w = self.pos + np.einsum("...ij,...j->...i", self.rot, self.sbar)

        # leg-frame rotations Q = R_y(-theta) and base-frame link inertias Q I Q^T
        Q = np.zeros(self.batch + (6, 3, 3))
        Q[..., 0, 0] = cos
        Q[..., 0, 2] = -sin
        Q[..., 1, 1] = 1.0
        Q[..., 2, 0] = sin
        Q[..., 2, 2] = cos
        self.Q = Q
        self.I_thigh = Q @ m.thigh_inertia @ np.swapaxes(Q, -1, -2)
        self.I_shank = Q @ m.shank_inertia @ np.swapaxes(Q, -1, -2)

        self._contact_jac = None
        self._cmm = None
        self._com_jac = None

    # -- first-order quantities -------------------------------------------

    def contact_jacobians(self) -> np.ndarray:
        """World-frame linear velocity Jacobians of the foot points, (...,6,3,18)."""
        if self._contact_jac is not None:
            return self._contact_jac
        J = np.zeros(self.batch + (6, 3, NV))
        R = self.rot[..., None, :, :]
        J[..., :, :, 0:3] = np.broadcast_to(R, self.batch + (6, 3, 3))
        J[..., :, :, 3:6] = -R @ geo.hat(self.wheel_c)
        col_th = np.einsum("...ij,...kj->...ki", self.rot, self.d[..., None] * self.ap)
        col_d = np.einsum("...ij,...kj->...ki", self.rot, self.a)
        for i in range(NUM_LEGS):
            J[..., i, :, 6 + 2 * i] = col_th[..., i, :]
            J[..., i, :, 7 + 2 * i] = col_d[..., i, :]
        self._contact_jac = J
        return J

    def com_jacobian(self) -> np.ndarray:
        """(...,3,18) world COM Jacobian w.r.t. the configuration tangent."""
        if self._com_jac is not None:
            return self._com_jac
        m = self.model
        J = np.zeros(self.batch + (3, NV))
        J[..., :, 0:3] = self.rot
        J[..., :, 3:6] = -self.rot @ geo.hat(self.sbar)
        # joint columns: sum of link mass times d s_link / d q_j, over total mass
        dth = (m.thigh_mass[:, None] * m.thigh_com[:, None] + m.shank_mass[:, None] * (self.d + m.shank_com_offset)[..., None]) * self.ap
        dd = m.shank_mass[:, None] * self.a
        for i in range(NUM_LEGS):
            J[..., :, 6 + 2 * i] = np.einsum("...ij,...j->...i", self.rot, dth[..., i, :]) / m.total_mass
            J[..., :, 7 + 2 * i] = np.einsum("...ij,...j->...i", self.rot, dd[..., i, :]) / m.total_mass
        self._com_jac = J
        return J

    def centroidal_momentum_matrix(self) -> np.ndarray:
        """A(q), (...,6,18): h_com = A(q) [v_b; v_J] in the world-aligned COM frame."""
        if self._cmm is not None:
            return self._cmm
        m = self.model
        Ab = np.zeros(self.batch + (6, NV))  # base-frame assembly

        # linear rows
        Ab[..., 0:3, 0:3] = m.total_mass * np.eye(3)
        Ab[..., 0:3, 3:6] = -m.total_mass * geo.hat(self.sbar)
        dth = (m.thigh_mass[:, None] * m.thigh_com[:, None] + m.shank_mass[:, None] * (self.d + m.shank_com_offset)[..., None]) * self.ap
        dd = m.shank_mass[:, None] * self.a
        for i in range(NUM_LEGS):
            Ab[..., 0:3, 6 + 2 * i] = dth[..., i, :]
            Ab[..., 0:3, 7 + 2 * i] = dd[..., i, :]

        # angular rows, link by link: I_l J_ang + m_l hat(s_l - sbar) J_lin
        ey = np.array([0.0, 1.0, 0.0])
        rel_t = self.s_thigh - self.sbar[..., None, :]
        rel_s = self.s_shank - self.sbar[..., None, :]
        # base link
        rel_b = m.base_com - self.sbar
        Ab[..., 3:6, 3:6] = m.base_inertia + m.base_mass * (geo.hat(rel_b) @ (-geo.hat(m.base_com)))
        Ab[..., 3:6, 0:3] += m.base_mass * geo.hat(rel_b)
        for i in range(NUM_LEGS):
            for mass, rel, s, Ibar, ds_th, ds_d in (
                (m.thigh_mass[i], rel_t[..., i, :], self.s_thigh[..., i, :], self.I_thigh[..., i, :, :],
                 m.thigh_com[i] * self.ap[..., i, :], None),
                (m.shank_mass[i], rel_s[..., i, :], self.s_shank[..., i, :], self.I_shank[..., i, :, :],
                 (self.d + m.shank_com_offset)[..., i, None] * self.ap[..., i, :], self.a[..., i, :]),
            ):
                hrel = geo.hat(rel)
                Ab[..., 3:6, 0:3] += mass * hrel
                Ab[..., 3:6, 3:6] += Ibar + mass * (hrel @ (-geo.hat(s)))
                Ab[..., 3:6, 6 + 2 * i] += (Ibar @ (-ey)) + mass * np.einsum("...ij,...j->...i", hrel, ds_th)
                if ds_d is not None:
                    Ab[..., 3:6, 7 + 2 * i] += mass * np.einsum("...ij,...j->...i", hrel, ds_d)

        # rotate the base-frame rows into the world-aligned COM frame
        A = np.empty_like(Ab)
        A[..., 0:3, :] = self.rot @ Ab[..., 0:3, :]
        A[..., 3:6, :] = self.rot @ Ab[..., 3:6, :]
        self._cmm = A
        return A

    def gravity(self) -> np.ndarray:
        """Tangent-space gradient of the total potential energy, (...,18)."""
        return self.model.total_mass * self.model.gravity * self.com_jacobian()[..., 2, :]

    # -- velocity-dependent directional derivatives ------------------------

    def _base_frame_velocities(self, w: np.ndarray):
        """Per-link base-frame COM velocities for generalized velocity w (...,18)."""
        nu, om, qd = w[..., 0:3], w[..., 3:6], w[..., 6:]
        thd, dd = qd[..., 0::2], qd[..., 1::2]
        m = self.model
        v_t = (
            nu[..., None, :]
            + np.cross(om[..., None, :], self.s_thigh)
            + m.thigh_com[:, None] * self.ap * thd[..., None]
        )
        v_s = (
            nu[..., None, :]
            + np.cross(om[..., None, :], self.s_shank)
            + (self.d + m.shank_com_offset)[..., None] * self.ap * thd[..., None]
            + self.a * dd[..., None]
        )
        v_b = nu + np.cross(om, np.broadcast_to(m.base_com, nu.shape))
        return v_b, v_t, v_s, thd, dd, nu, om

    def momentum_map_derivative(self, w: np.ndarray) -> np.ndarray:
        """D = d(A(q) w)/dq at fixed w, (...,6,18), tangent-basis convention."""
        m = self.model
        w = np.asarray(w, dtype=float)
        v_b, v_t, v_s, thd, dd, nu, om = self._base_frame_velocities(w)
        ey = np.array([0.0, 1.0, 0.0])

        # base-frame momenta
        Pbar = (
            m.base_mass * v_b
            + np.einsum("k,...kj->...j", m.thigh_mass, v_t)
            + np.einsum("k,...kj->...j", m.shank_mass, v_s)
        )
        kappa = -thd[..., None] * ey  # per-leg relative angular velocity
        om_t = om[..., None, :] + kappa
        rel_b = m.base_com - self.sbar
        rel_t = self.s_thigh - self.sbar[..., None, :]
        rel_s = self.s_shank - self.sbar[..., None, :]
        Lbar = (
            np.einsum("...ij,...j->...i", np.broadcast_to(m.base_inertia, self.batch + (3, 3)), om)
            + m.base_mass * np.cross(rel_b, v_b)
            + np.einsum("k,...kj->...j", m.thigh_mass, np.cross(rel_t, v_t))
            + np.einsum("k,...kj->...j", m.shank_mass, np.cross(rel_s, v_s))
            + np.einsum("...kij,...kj->...i", self.I_thigh, om_t)
            + np.einsum("...kij,...kj->...i", self.I_shank, om_t)
        )

        D = np.zeros(self.batch + (6, NV))
        D[..., 0:3, 3:6] = -self.rot @ geo.hat(Pbar)
        D[..., 3:6, 3:6] = -self.rot @ geo.hat(Lbar)

        # joint columns
        dc = m.shank_com_offset
        for i in range(NUM_LEGS):
            a_i, ap_i = self.a[..., i, :], self.ap[..., i, :]
            di = self.d[..., i]
            th_d = thd[..., i, None]
            d_d = dd[..., i, None]
            mt, ms = m.thigh_mass[i], m.shank_mass[i]
            rt, rs = m.thigh_com[i], (di + dc[i])[..., None]

            # d s / d theta and d sdot / d theta per link
            dst = rt * ap_i
            dss = rs * ap_i
            dsdot_t = -rt * a_i * th_d
            dsdot_s = -rs * a_i * th_d + ap_i * d_d

            dP_th = mt * (np.cross(om, dst) + dsdot_t) + ms * (np.cross(om, dss) + dsdot_s)
            dP_d = ms * (np.cross(om, a_i) + ap_i * th_d)

            dsbar_th = (mt * dst + ms * dss) / m.total_mass
            dsbar_d = (ms * a_i) / m.total_mass

            It, Is = self.I_thigh[..., i, :, :], self.I_shank[..., i, :, :]
            hey = geo.hat(ey)
            dI_t = It @ hey - hey @ It
            dI_s = Is @ hey - hey @ Is
            omk = om_t[..., i, :]

            dL_th = (
                -np.cross(dsbar_th, Pbar)
                + np.einsum("...ij,...j->...i", dI_t + dI_s, omk)
                + mt * (np.cross(dst, v_t[..., i, :]) + np.cross(rel_t[..., i, :], np.cross(om, dst) + dsdot_t))
                + ms * (np.cross(dss, v_s[..., i, :]) + np.cross(rel_s[..., i, :], np.cross(om, dss) + dsdot_s))
            )
            dL_d = (
                -np.cross(dsbar_d, Pbar)
                + ms * (np.cross(a_i, v_s[..., i, :]) + np.cross(rel_s[..., i, :], np.cross(om, a_i) + ap_i * th_d))
            )

            D[..., 0:3, 6 + 2 * i] = np.einsum("...ij,...j->...i", self.rot, dP_th)
            D[..., 0:3, 7 + 2 * i] = np.einsum("...ij,...j->...i", self.rot, dP_d)
            D[..., 3:6, 6 + 2 * i] = np.einsum("...ij,...j->...i", self.rot, dL_th)
            D[..., 3:6, 7 + 2 * i] = np.einsum("...ij,...j->...i", self.rot, dL_d)
        return D

    def foot_velocity_derivative(self, w: np.ndarray) -> np.ndarray:
        """Gamma = d(J_i(q) w)/dq at fixed w, (...,6,3,18)."""
        w = np.asarray(w, dtype=float)
        nu, om, qd = w[..., 0:3], w[..., 3:6], w[..., 6:]
        thd, dd = qd[..., 0::2], qd[..., 1::2]
        beta = (
            nu[..., None, :]
            + np.cross(om[..., None, :], self.wheel_c)
            + self.d[..., None] * self.ap * thd[..., None]
            + self.a * dd[..., None]
        )
        G = np.zeros(self.batch + (6, 3, NV))
        G[..., :, :, 3:6] = -self.rot[..., None, :, :] @ geo.hat(beta)
        dbeta_th = (
            self.d[..., None] * np.cross(om[..., None, :], self.ap)
            - self.d[..., None] * self.a * thd[..., None]
            + self.ap * dd[..., None]
        )
        dbeta_d = np.cross(om[..., None, :], self.a) + self.ap * thd[..., None]
        col_th = np.einsum("...ij,...kj->...ki", self.rot, dbeta_th)
        col_d = np.einsum("...ij,...kj->...ki", self.rot, dbeta_d)
        for i in range(NUM_LEGS):
            G[..., i, :, 6 + 2 * i] = col_th[..., i, :]
            G[..., i, :, 7 + 2 * i] = col_d[..., i, :]
        return G

    def foot_velocities(self, w: np.ndarray) -> np.ndarray:
        """(...,6,3) world linear velocities of the foot points."""
        J = self.contact_jacobians()
        return np.einsum("...kij,...j->...ki", J, np.asarray(w, dtype=float))

    # -- static torque rows -------------------------------------------------

    def actuated_torque(self, forces: np.ndarray):
        """tau = S(g(q) + J^T f) for stacked per-foot forces (...,6,3).

        Returns (tau (...,12), d tau/d tangent (...,12,18), d tau/d f (...,12,6,3)).
        """
        m = self.model
        forces = np.asarray(forces, dtype=float)
        Rt = np.swapaxes(self.rot, -1, -2)
        u = np.einsum("...ij,...kj->...ki", Rt, forces)       # R^T f_i, (...,6,3)
        uz = np.einsum("...ij,...j->...i", Rt, np.broadcast_to(np.array([0.0, 0.0, 1.0]), self.batch + (3,)))  # R^T e_z
        gc = m.gravity

        tau = np.zeros(self.batch + (NUM_JOINTS,))
        dtau_dx = np.zeros(self.batch + (NUM_JOINTS, NV))
        dtau_df = np.zeros(self.batch + (NUM_JOINTS, NUM_LEGS, 3))

        for i in range(NUM_LEGS):
            a_i, ap_i = self.a[..., i, :], self.ap[..., i, :]
            di = self.d[..., i, None]
            u_i = u[..., i, :]
            mt, ms = m.thigh_mass[i], m.shank_mass[i]
            w_th = (mt * m.thigh_com[i] + ms * (self.d[..., i] + m.shank_com_offset[i]))[..., None] * ap_i
            w_d = ms * a_i

            dot = lambda x, y: np.einsum("...j,...j->...", x, y)
            tau[..., 2 * i] = gc * dot(uz, w_th) + dot(u_i, di * ap_i)
            tau[..., 2 * i + 1] = gc * dot(uz, w_d) + dot(u_i, a_i)

            # angular tangent columns
            dtau_dx[..., 2 * i, 3:6] = -gc * np.cross(uz, w_th) - np.cross(u_i, di * ap_i)
            dtau_dx[..., 2 * i + 1, 3:6] = -gc * np.cross(uz, w_d) - np.cross(u_i, a_i)
            # own-joint columns
            coef = gc * (mt * m.thigh_com[i] + ms * (self.d[..., i] + m.shank_com_offset[i]))
            dtau_dx[..., 2 * i, 6 + 2 * i] = -(coef * dot(uz, a_i) + self.d[..., i] * dot(u_i, a_i))
            cross_term = gc * ms * dot(uz, ap_i) + dot(u_i, ap_i)
            dtau_dx[..., 2 * i, 7 + 2 * i] = cross_term
            dtau_dx[..., 2 * i + 1, 6 + 2 * i] = cross_term
            # forces
            dtau_df[..., 2 * i, i, :] = np.einsum("...ij,...j->...i", self.rot, di * ap_i)
            dtau_df[..., 2 * i + 1, i, :] = np.einsum("...ij,...j->...i", self.rot, a_i)
        return tau, dtau_dx, dtau_df


# ---------------------------------------------------------------------------
# public single-configuration operations


def kinematics(model: RobotModel, q: Configuration) -> Kinematics:
    return Kinematics(model, q.rot, q.pos, q.joints)


def forward_kinematics(model: RobotModel, q: Configuration, foot: FootId):
    """Foot contact point in the world frame and the foot yaw rotation."""
    kin = kinematics(model, q)
    yaw = geo.yaw_of(q.rot)  # planar-pitch legs: foot heading equals base heading
    return kin.foot_w[int(foot)], geo.rot_z(yaw)


def foot_velocity(model: RobotModel, q: Configuration, v: GeneralizedVelocity, foot: FootId) -> np.ndarray:
    kin = kinematics(model, q)
    return kin.foot_velocities(v.stacked())[int(foot)]


def contact_jacobian(model: RobotModel, q: Configuration, foot: FootId) -> np.ndarray:
    return kinematics(model, q).contact_jacobians()[int(foot)]


def centroidal_momentum_matrix(model: RobotModel, q: Configuration) -> np.ndarray:
    return kinematics(model, q).centroidal_momentum_matrix()


def com_position(model: RobotModel, q: Configuration) -> np.ndarray:
    return kinematics(model, q).com_w


def gravity_term(model: RobotModel, q: Configuration) -> np.ndarray:
    return kinematics(model, q).gravity()


@dataclass(frozen=True)
class ModelDerivatives:
    """First derivatives of the kinematic maps w.r.t. the configuration tangent."""

    fk: np.ndarray            # (6,3,18) foot position Jacobians
    foot_velocity: np.ndarray  # (6,3,18) d(J_i v)/dq at fixed v
    momentum: np.ndarray       # (6,18)   d(A(q) v)/dq at fixed v
    com: np.ndarray            # (3,18)


def model_derivatives(model: RobotModel, q: Configuration, v: GeneralizedVelocity) -> ModelDerivatives:
    kin = kinematics(model, q)
    w = v.stacked()
    return ModelDerivatives(
        fk=kin.contact_jacobians(),
        foot_velocity=kin.foot_velocity_derivative(w),
        momentum=kin.momentum_map_derivative(w),
        com=kin.com_jacobian(),
    )
