"""Full-centroidal state equation, base-velocity map and state integration.

State: configuration (base pose + joints) plus the 6-D centroidal momentum
[linear; angular] about the COM in the world-aligned frame.  Input: 12 joint
velocities and six 3-D world-frame contact forces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .model import (
    NUM_JOINTS,
    NUM_LEGS,
    NV,
    Configuration,
    Kinematics,
    RobotModel,
    integrate_configuration,
    kinematics,
)

NX = NV + 6   # state tangent dimension (24)
NU = NUM_JOINTS + 3 * NUM_LEGS  # input dimension (30)


class SingularBaseMomentumError(RuntimeError):
    """A_b(q) could not be inverted; never regularized silently."""


@dataclass(frozen=True)
class RobotState:
    config: Configuration
    momentum: np.ndarray  # (6,) [linear; angular]

    def __post_init__(self):
        object.__setattr__(self, "momentum", np.array(self.momentum, dtype=float).reshape(6))
        if not np.all(np.isfinite(self.momentum)):
            raise ValueError("non-finite momentum")
        self.momentum.setflags(write=False)


@dataclass(frozen=True)
class ControlInput:
    joint_velocities: np.ndarray  # (12,)
    forces: np.ndarray            # (6,3) world frame, one row per foot

    def __post_init__(self):
        object.__setattr__(self, "joint_velocities", np.array(self.joint_velocities, dtype=float).reshape(NUM_JOINTS))
        object.__setattr__(self, "forces", np.array(self.forces, dtype=float).reshape(NUM_LEGS, 3))
        if not (np.all(np.isfinite(self.joint_velocities)) and np.all(np.isfinite(self.forces))):
            raise ValueError("non-finite control input")
        self.joint_velocities.setflags(write=False)
        self.forces.setflags(write=False)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.joint_velocities, self.forces.ravel()])

    @staticmethod
    def from_stacked(u: np.ndarray) -> "ControlInput":
        u = np.asarray(u, dtype=float).reshape(NU)
        return ControlInput(u[:NUM_JOINTS], u[NUM_JOINTS:].reshape(NUM_LEGS, 3))


def zero_input() -> ControlInput:
    return ControlInput(np.zeros(NUM_JOINTS), np.zeros((NUM_LEGS, 3)))


# ---------------------------------------------------------------------------
# batched core (used by the solver); leading batch dims broadcast


def solve_base_velocity(kin: Kinematics, momentum: np.ndarray, v_joints: np.ndarray) -> np.ndarray:
    """v_b = A_b^{-1} (h - A_J v_J); raises on a singular base block."""
    A = kin.centroidal_momentum_matrix()
    Ab = A[..., :, :6]
    rhs = np.asarray(momentum, dtype=float) - np.einsum("...ij,...j->...i", A[..., :, 6:], v_joints)
    try:
        vb = np.linalg.solve(Ab, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise SingularBaseMomentumError(f"base momentum block singular: {exc}") from exc
    if not np.all(np.isfinite(vb)):
        raise SingularBaseMomentumError("base momentum solve produced non-finite values")
    return vb


def batch_state_rate(model: RobotModel, kin: Kinematics, momentum, u, gravity: float | None = None):
    """State rate for stacked states/inputs.

    Returns (xi, hdot, vb, w): configuration tangent rate (...,18), momentum
    rate (...,6), base velocity (...,6) and generalized velocity (...,18).
    """
    u = np.asarray(u, dtype=float)
    momentum = np.asarray(momentum, dtype=float)
    v_joints = u[..., :NUM_JOINTS]
    forces = u[..., NUM_JOINTS:].reshape(u.shape[:-1] + (NUM_LEGS, 3))
    vb = solve_base_velocity(kin, momentum, v_joints)
    w = np.concatenate([vb, v_joints], axis=-1)
    gc = model.gravity if gravity is None else float(gravity)
    hdot = np.empty(momentum.shape[:-1] + (6,))
    hdot[..., 0:3] = forces.sum(axis=-2)
    hdot[..., 2] += -model.total_mass * gc
    lever = kin.foot_w - kin.com_w[..., None, :]
    hdot[..., 3:6] = np.cross(lever, forces).sum(axis=-2)
    return w.copy(), hdot, vb, w


def batch_dynamics_derivatives(model: RobotModel, kin: Kinematics, momentum, u, w):
    """fx (...,24,24) and fu (...,24,30) of the state rate, tangent convention."""
    u = np.asarray(u, dtype=float)
    batch = u.shape[:-1]
    forces = u[..., NUM_JOINTS:].reshape(batch + (NUM_LEGS, 3))

    A = kin.centroidal_momentum_matrix()
    Ab, AJ = A[..., :, :6], A[..., :, 6:]
    D = kin.momentum_map_derivative(w)          # d(A w)/dq at the realized w
    J = kin.contact_jacobians()
    Jcom = kin.com_jacobian()

    AbinvD = np.linalg.solve(Ab, D)
    AbinvAJ = np.linalg.solve(Ab, AJ)
    Abinv = np.linalg.solve(Ab, np.broadcast_to(np.eye(6), Ab.shape).copy())

    fx = np.zeros(batch + (NX, NX))
    fu = np.zeros(batch + (NX, NU))

    # configuration rate rows: [v_b; v_J]
    fx[..., 0:6, 0:NV] = -AbinvD
    fx[..., 0:6, NV:NX] = Abinv
    fu[..., 0:6, 0:NUM_JOINTS] = -AbinvAJ
    fu[..., 6:NV, 0:NUM_JOINTS] = np.eye(NUM_JOINTS)

    # momentum rate rows
    lever = kin.foot_w - kin.com_w[..., None, :]
    for i in range(NUM_LEGS):
        fi = forces[..., i, :]
        fx[..., NV + 3:NX, 0:NV] += -geo.hat(fi) @ (J[..., i, :, :] - Jcom)
        fu[..., NV + 0:NV + 3, NUM_JOINTS + 3 * i:NUM_JOINTS + 3 * (i + 1)] = np.eye(3)
        fu[..., NV + 3:NX, NUM_JOINTS + 3 * i:NUM_JOINTS + 3 * (i + 1)] = geo.hat(lever[..., i, :])
    return fx, fu


# ---------------------------------------------------------------------------
# public single-state API


def base_velocity(model: RobotModel, x: RobotState, u: ControlInput) -> np.ndarray:
    kin = kinematics(model, x.config)
    vb = solve_base_velocity(kin, x.momentum, u.joint_velocities)
    A = kin.centroidal_momentum_matrix()
    residual = A @ np.concatenate([vb, u.joint_velocities]) - x.momentum
    res_max = float(np.abs(residual).max())
    if not np.isfinite(res_max) or res_max > 1e-9 * max(1.0, float(np.abs(x.momentum).max())):
        raise SingularBaseMomentumError(
            f"momentum map solve residual {np.abs(residual).max():.3e}; A_b close to singular"
        )
    return vb


def state_equation(model: RobotModel, x: RobotState, u: ControlInput, gravity: float | None = None):
    """Returns (configuration tangent rate (18,), momentum rate (6,))."""
    kin = kinematics(model, x.config)
    xi, hdot, _, _ = batch_state_rate(model, kin, x.momentum, u.stacked(), gravity=gravity)
    return xi, hdot


def _dexpinv_correction(sigma: np.ndarray, rate: np.ndarray) -> np.ndarray:
    """Truncated dexp^{-1} on the base twist: rate + [sigma,rate]/2 + [sigma,[sigma,rate]]/12.

    Joints and momentum live in a vector space and need no correction.  The
    commutator terms are what keep the one-step method genuinely 4th order on
    the pose manifold.
    """
    out = rate.copy()
    b = geo.se3_bracket(sigma[..., :6], rate[..., :6])
    out[..., :6] += 0.5 * b + geo.se3_bracket(sigma[..., :6], b) / 12.0
    return out


def integrate_state(model: RobotModel, x: RobotState, u: ControlInput, dt: float,
                    gravity: float | None = None) -> RobotState:
    """Explicit 4th-order one-step integration on the state manifold."""
    if not (0.0 < dt <= 0.1):
        raise ValueError("dt must lie in (0, 0.1]")

    def rate(state: RobotState) -> np.ndarray:
        xi, hdot = state_equation(model, state, u, gravity=gravity)
        return np.concatenate([xi, hdot])

    def step(state: RobotState, sigma: np.ndarray) -> RobotState:
        q = integrate_configuration(state.config, sigma[:NV], 1.0)
        return RobotState(q, state.momentum + sigma[NV:])

    k1 = rate(x)
    g1 = k1
    s2 = 0.5 * dt * g1
    g2 = _dexpinv_correction(s2, rate(step(x, s2)))
    s3 = 0.5 * dt * g2
    g3 = _dexpinv_correction(s3, rate(step(x, s3)))
    s4 = dt * g3
    g4 = _dexpinv_correction(s4, rate(step(x, s4)))
    sigma = (dt / 6.0) * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
    return step(x, sigma)


def dynamics_derivatives(model: RobotModel, x: RobotState, u: ControlInput):
    """fx (24x24 tangent), fu (24x30); matches finite differences to 1e-5 rel."""
    kin = kinematics(model, x.config)
    vb = solve_base_velocity(kin, x.momentum, u.joint_velocities)
    w = np.concatenate([vb, u.joint_velocities])
    return batch_dynamics_derivatives(model, kin, x.momentum, u.stacked(), w)


def state_difference(x1: RobotState, x2: RobotState) -> np.ndarray:
    """24-D tangent with x2 = x1 (+) result."""
    from .model import difference_configuration

    return np.concatenate([difference_configuration(x1.config, x2.config), x2.momentum - x1.momentum])


def state_retract(x: RobotState, dx: np.ndarray) -> RobotState:
    dx = np.asarray(dx, dtype=float).reshape(NX)
    return RobotState(integrate_configuration(x.config, dx[:NV], 1.0), x.momentum + dx[NV:])
