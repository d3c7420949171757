"""Switched-system OCP formulation: mode-dependent constraints and tracking costs.

Stage structure per node (all residual conventions are ">= 0 when feasible"):
  equalities: swing-foot force rows, deduplicated stance z / drive-wheel lateral
    rows, and swing-foot height-tracking rows;
  input-dependent inequalities (hard interior-point): joint velocity boxes,
    static torque limits, friction pyramids of stance feet;
  state-only inequalities (relaxed barrier): joint position boxes and convex
    foot-region rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import geometry as geo
from .contacts import ContactSchedule, ConvexRegion, Mode, SwingProfile, dedup_stance_feet
from .dynamics import NU, NX, ControlInput, RobotState
from .model import (
    NUM_JOINTS,
    NUM_LEGS,
    NV,
    Configuration,
    FootId,
    GeneralizedVelocity,
    Kinematics,
    RobotModel,
    kinematics,
)


class OcpError(ValueError):
    pass


@dataclass
class CostWeights:
    base_velocity: np.ndarray  # (6,)
    state: np.ndarray          # (24,) tangent: [base pos, base rot, joints, momentum]
    input: np.ndarray          # (30,)
    terminal: np.ndarray       # (24,)

    def __post_init__(self):
        self.base_velocity = np.asarray(self.base_velocity, dtype=float).reshape(6)
        self.state = np.asarray(self.state, dtype=float).reshape(NX)
        self.input = np.asarray(self.input, dtype=float).reshape(NU)
        self.terminal = np.asarray(self.terminal, dtype=float).reshape(NX)
        for w in (self.base_velocity, self.state, self.input, self.terminal):
            if np.any(w < 0):
                raise OcpError("cost weights must be nonnegative")

    @staticmethod
    def default(terminal_scale: float = 5.0) -> "CostWeights":
        state = np.concatenate([np.full(6, 1.0), np.full(NUM_JOINTS, 2.0), np.full(6, 1e-3)])
        inp = np.concatenate([np.full(NUM_JOINTS, 1e-2), np.full(3 * NUM_LEGS, 1e-5)])
        return CostWeights(
            base_velocity=np.array([10.0, 10.0, 10.0, 5.0, 5.0, 5.0]),
            state=state,
            input=inp,
            terminal=terminal_scale * state,
        )


@dataclass
class ConstraintParams:
    swing_kp: float = 10.0       # position-error feedback gain of the height rows
    friction_mu: float = 0.5
    min_normal_force: float = 1.0


@dataclass
class MotionCommand:
    """References from the higher-layer planner: base pose/velocity and nominal joints."""

    base_pose_ref: Callable[[float], tuple[np.ndarray, np.ndarray]]  # t -> (pos, rot)
    base_velocity_ref: Callable[[float], np.ndarray]                 # t -> (6,) base frame
    joint_ref: np.ndarray                                            # (12,)

    @staticmethod
    def constant(pos, rot, joints, velocity=None) -> "MotionCommand":
        pos = np.asarray(pos, dtype=float)
        rot = np.asarray(rot, dtype=float)
        vel = np.zeros(6) if velocity is None else np.asarray(velocity, dtype=float)
        return MotionCommand(lambda t: (pos, rot), lambda t: vel, np.asarray(joints, dtype=float))


# ---------------------------------------------------------------------------
# single-point operations


def active_contact_equalities(mode: Mode) -> list[tuple[str, FootId]]:
    """Equality rows for a mode: swing force rows plus deduplicated stance rows."""
    rows: list[tuple[str, FootId]] = []
    for foot in FootId:
        if not mode[int(foot)]:
            rows.append(("swing_force", foot))
    return rows + stance_velocity_rows(mode)


def stance_velocity_rows(mode: Mode, drive_flags=None) -> list[tuple[str, FootId]]:
    rows: list[tuple[str, FootId]] = []
    for foot in dedup_stance_feet(mode):
        rows.append(("stance_z", foot))
        drive = DRIVE_WHEEL_DEFAULT[int(foot)] if drive_flags is None else drive_flags[int(foot)]
        if drive:
            rows.append(("stance_lateral", foot))
    return rows


# drive wheels on the four corner legs; the two middle legs carry passive omni wheels
DRIVE_WHEEL_DEFAULT = (True, False, True, True, False, True)


def swing_height_constraint(model: RobotModel, q: Configuration, v: GeneralizedVelocity,
                            t: float, foot: FootId, profile: SwingProfile, kp: float) -> float:
    kin = kinematics(model, q)
    vz = kin.foot_velocities(v.stacked())[int(foot), 2]
    z = kin.foot_w[int(foot), 2]
    return float(vz - profile.velocity(t) + kp * (z - profile.height(t)))


def joint_box_constraints(model: RobotModel, x: RobotState, u: ControlInput):
    """Position and velocity box residuals, each stacked [lower; upper]."""
    qj = x.config.joints
    vj = u.joint_velocities
    pos = np.concatenate([qj - model.joint_pos_min, model.joint_pos_max - qj])
    vel = np.concatenate([vj + model.joint_vel_max, model.joint_vel_max - vj])
    return pos, vel


def static_torque_constraint(model: RobotModel, q: Configuration, forces) -> np.ndarray:
    """Two-sided static torque residuals, stacked [tau - min; max - tau]."""
    tau, _, _ = kinematics(model, q).actuated_torque(np.asarray(forces, dtype=float).reshape(NUM_LEGS, 3))
    return np.concatenate([tau + model.joint_torque_max, model.joint_torque_max - tau])


def friction_cone_constraints(f_i, mu: float, min_normal_force: float = 1.0) -> np.ndarray:
    """Four pyramid residuals plus the normal-force residual, all >= 0 inside."""
    f = np.asarray(f_i, dtype=float).reshape(3)
    c = mu / np.sqrt(2.0)
    return np.array([
        f[2] - min_normal_force,
        c * f[2] - f[0],
        c * f[2] + f[0],
        c * f[2] - f[1],
        c * f[2] + f[1],
    ])


def foot_region_constraint(model: RobotModel, q: Configuration, foot: FootId,
                           region: ConvexRegion) -> np.ndarray:
    xy = kinematics(model, q).foot_w[int(foot), :2]
    return region.residuals(xy)


@dataclass
class CostTerms:
    value: float
    grad_x: np.ndarray   # (24,)
    grad_u: np.ndarray   # (30,)
    hess_xx: np.ndarray  # (24,24) Gauss-Newton
    hess_uu: np.ndarray
    hess_xu: np.ndarray  # (24,30)


def _gn_terms(r, W, Jx, Ju) -> CostTerms:
    Wr = W * r
    return CostTerms(
        value=0.5 * float(r @ Wr),
        grad_x=Jx.T @ Wr,
        grad_u=Ju.T @ Wr,
        hess_xx=Jx.T @ (W[:, None] * Jx),
        hess_uu=Ju.T @ (W[:, None] * Ju),
        hess_xu=Jx.T @ (W[:, None] * Ju),
    )


def velocity_tracking_cost(model: RobotModel, x: RobotState, u: ControlInput,
                           v_ref, weights) -> CostTerms:
    kin = kinematics(model, x.config)
    lin = linearize_nodes(model, kin, x.momentum[None], u.stacked()[None])
    r = lin.vb[0] - np.asarray(v_ref, dtype=float)
    Jx = np.concatenate([lin.dvb_dq[0], lin.dvb_dh[0]], axis=1)
    Ju = np.zeros((6, NU))
    Ju[:, :NUM_JOINTS] = lin.dvb_dvJ[0]
    return _gn_terms(r, np.asarray(weights, dtype=float), Jx, Ju)


def state_error(x: RobotState, pos_ref, rot_ref, joint_ref, momentum_ref=None):
    """Tangent-space tracking error and its exact state Jacobian (24, 24x24)."""
    e = np.empty(NX)
    e[0:3] = x.config.pos - pos_ref
    rot_err = geo.so3_log(np.asarray(rot_ref).T @ x.config.rot)
    e[3:6] = rot_err
    e[6:NV] = x.config.joints - joint_ref
    e[NV:] = x.momentum if momentum_ref is None else x.momentum - momentum_ref
    J = np.eye(NX)
    J[0:3, 0:3] = x.config.rot
    J[3:6, 3:6] = geo.so3_right_jacobian_inv(rot_err)
    return e, J


def state_input_tracking_cost(x: RobotState, u: ControlInput, t: float,
                              refs: "References", weights: CostWeights) -> CostTerms:
    pos_ref, rot_ref = refs.command.base_pose_ref(t)
    e, Jx = state_error(x, pos_ref, rot_ref, refs.command.joint_ref)
    terms = _gn_terms(e, weights.state, Jx, np.zeros((NX, NU)))
    ru = u.stacked() - refs.input_ref(t)
    ui = _gn_terms(ru, weights.input, np.zeros((NU, NX)), np.eye(NU))
    return CostTerms(
        value=terms.value + ui.value,
        grad_x=terms.grad_x,
        grad_u=ui.grad_u,
        hess_xx=terms.hess_xx,
        hess_uu=ui.hess_uu,
        hess_xu=terms.hess_xu,
    )


# ---------------------------------------------------------------------------
# problem assembly


@dataclass
class References:
    command: MotionCommand
    schedule: ContactSchedule
    model: RobotModel

    def input_ref(self, t: float) -> np.ndarray:
        """Reference input: zero joint rates; stance feet share the weight vertically."""
        u = np.zeros(NU)
        mode = self.schedule.mode_at(t)
        n_active = sum(mode)
        if n_active:
            fz = self.model.total_mass * self.model.gravity / n_active
            for i in range(NUM_LEGS):
                if mode[i]:
                    u[NUM_JOINTS + 3 * i + 2] = fz
        return u


@dataclass
class StageSpec:
    t: float
    dt: float
    mode: Mode
    eq_rows: list[tuple[str, FootId]]
    swing_refs: dict[int, tuple[float, float]]          # foot -> (z_ref, zdot_ref)
    region_rows: list[tuple[int, np.ndarray, np.ndarray]]  # (foot, A, b)
    friction_feet: tuple[int, ...]
    u_ref: np.ndarray
    pos_ref: np.ndarray
    rot_ref: np.ndarray
    v_ref: np.ndarray

    @property
    def n_eq(self) -> int:
        return sum(3 if kind == "swing_force" else 1 for kind, _ in self.eq_rows)


@dataclass
class OcpProblem:
    """Immutable problem description over [t0, t0+T]; evaluators are pure."""

    model: RobotModel
    schedule: ContactSchedule
    command: MotionCommand
    weights: CostWeights
    params: ConstraintParams
    t0: float
    horizon: float
    x0: RobotState
    refs: References = field(init=False)

    def __post_init__(self):
        if self.horizon <= 0:
            raise OcpError("horizon must be positive")
        if not self.schedule.covers(self.t0, self.t0 + self.horizon):
            raise OcpError(
                f"schedule [{self.schedule.t_start}, {self.schedule.t_end}] does not cover "
                f"horizon [{self.t0}, {self.t0 + self.horizon}]"
            )
        self.refs = References(self.command, self.schedule, self.model)
        self._validate_metadata()

    def _validate_metadata(self):
        probes = np.linspace(self.t0, self.t0 + self.horizon, 40, endpoint=False)
        for t in probes:
            mode = self.schedule.mode_at(t)
            for foot in FootId:
                if mode[int(foot)]:
                    if not np.isfinite(self.schedule.contact_height(foot, t)):
                        raise OcpError(f"missing contact height for stance foot {foot.name} at t={t:.3f}")
                else:
                    if self.schedule.swing_phase_at(foot, t) is None:
                        raise OcpError(f"missing swing phase metadata for {foot.name} at t={t:.3f}")

    def stage_spec(self, t: float, dt: float) -> StageSpec:
        sched = self.schedule
        mode = sched.mode_at(t)
        eq = active_contact_equalities_for(self.model, mode)
        swing_refs = {}
        region_rows: list[tuple[int, np.ndarray, np.ndarray]] = []
        for foot in FootId:
            i = int(foot)
            if mode[i]:
                ph = sched.stance_phase_at(foot, t)
                if ph is not None and ph.region is not None:
                    region_rows.append((i, ph.region.A, ph.region.b))
                eq.append(("noop", foot)) if False else None
            else:
                ph = sched.swing_phase_at(foot, t)
                eq.append(("swing_height", foot))
                swing_refs[i] = (ph.profile.height(t), ph.profile.velocity(t))
                reg = ph.active_region(t)
                if reg is not None:
                    region_rows.append((i, reg.A, reg.b))
        friction = tuple(i for i in range(NUM_LEGS) if mode[i])
        pos_ref, rot_ref = self.command.base_pose_ref(t)
        return StageSpec(
            t=t,
            dt=dt,
            mode=mode,
            eq_rows=eq,
            swing_refs=swing_refs,
            region_rows=region_rows,
            friction_feet=friction,
            u_ref=self.refs.input_ref(t),
            pos_ref=np.asarray(pos_ref, dtype=float),
            rot_ref=np.asarray(rot_ref, dtype=float),
            v_ref=np.asarray(self.command.base_velocity_ref(t), dtype=float),
        )

    def terminal_spec(self, t: float) -> StageSpec:
        spec = self.stage_spec(t, 0.0)
        # terminal carries only state cost and state-only inequalities
        spec.eq_rows = []
        spec.friction_feet = ()
        return spec


def active_contact_equalities_for(model: RobotModel, mode: Mode) -> list[tuple[str, FootId]]:
    rows: list[tuple[str, FootId]] = []
    for foot in FootId:
        if not mode[int(foot)]:
            rows.append(("swing_force", foot))
    for foot in dedup_stance_feet(mode):
        rows.append(("stance_z", foot))
        if model.drive_wheel[int(foot)]:
            rows.append(("stance_lateral", foot))
    return rows


def build_ocp(model: RobotModel, schedule: ContactSchedule, command: MotionCommand,
              weights: CostWeights, t0: float, x0: RobotState, horizon: float,
              params: ConstraintParams | None = None) -> OcpProblem:
    return OcpProblem(model, schedule, command, weights, params or ConstraintParams(),
                      t0, horizon, x0)


# ---------------------------------------------------------------------------
# batched linearization used by the solver


@dataclass
class LinNodes:
    """Velocity-level linearization at a batch of (state, input) samples."""

    kin: Kinematics
    vb: np.ndarray        # (M,6)
    w: np.ndarray         # (M,18)
    dvb_dq: np.ndarray    # (M,6,18)
    dvb_dh: np.ndarray    # (M,6,6)
    dvb_dvJ: np.ndarray   # (M,6,12)
    J: np.ndarray         # (M,6,3,18)
    Gamma: np.ndarray     # (M,6,3,18)
    footv: np.ndarray     # (M,6,3)
    fk: np.ndarray        # (M,6,3)
    tau: np.ndarray       # (M,12)
    dtau_dx: np.ndarray   # (M,12,18)
    dtau_df: np.ndarray   # (M,12,6,3)
    yaw: np.ndarray       # (M,)
    yaw_jac: np.ndarray   # (M,3)


def linearize_nodes(model: RobotModel, kin: Kinematics, H: np.ndarray, U: np.ndarray) -> LinNodes:
    H = np.asarray(H, dtype=float)
    U = np.asarray(U, dtype=float)
    vJ = U[..., :NUM_JOINTS]
    forces = U[..., NUM_JOINTS:].reshape(U.shape[:-1] + (NUM_LEGS, 3))

    A = kin.centroidal_momentum_matrix()
    Ab, AJ = A[..., :, :6], A[..., :, 6:]
    rhs = H - np.einsum("...ij,...j->...i", AJ, vJ)
    vb = np.linalg.solve(Ab, rhs[..., None])[..., 0]
    w = np.concatenate([vb, vJ], axis=-1)

    D = kin.momentum_map_derivative(w)
    dvb_dq = -np.linalg.solve(Ab, D)
    dvb_dh = np.linalg.solve(Ab, np.broadcast_to(np.eye(6), Ab.shape).copy())
    dvb_dvJ = -np.linalg.solve(Ab, AJ)

    J = kin.contact_jacobians()
    Gamma = kin.foot_velocity_derivative(w)
    footv = np.einsum("...kij,...j->...ki", J, w)
    tau, dtau_dx, dtau_df = kin.actuated_torque(forces)
    return LinNodes(
        kin=kin, vb=vb, w=w, dvb_dq=dvb_dq, dvb_dh=dvb_dh, dvb_dvJ=dvb_dvJ,
        J=J, Gamma=Gamma, footv=footv, fk=kin.foot_w,
        tau=tau, dtau_dx=dtau_dx, dtau_df=dtau_df,
        yaw=geo.yaw_of(kin.rot), yaw_jac=geo.yaw_tangent_jacobian(kin.rot),
    )


@dataclass
class StageEval:
    """Residuals, Jacobians and Gauss-Newton cost blocks of one stage."""

    e: np.ndarray       # equalities (r,)
    Ex: np.ndarray      # (r,24)
    Eu: np.ndarray      # (r,30)
    g: np.ndarray       # input-dependent inequalities (m,)
    Gx: np.ndarray      # (m,24)
    Gu: np.ndarray      # (m,30)
    gs: np.ndarray      # state-only inequalities (ms,)
    Sx: np.ndarray      # (ms,24)
    cost: float
    qx: np.ndarray      # (24,)
    qu: np.ndarray      # (30,)
    Qxx: np.ndarray
    Quu: np.ndarray
    Qxu: np.ndarray


def _foot_velocity_rows(lin: LinNodes, k: int, i: int, sel: np.ndarray):
    """Value/Jacobians of sel . v_i(q, w(x,u)) for foot i at node k."""
    Jb = lin.J[k, i, :, :6]        # (3,6)
    JJ = lin.J[k, i, :, 6:NV]      # (3,12)
    val3 = lin.footv[k, i]
    dx3 = np.zeros((3, NX))
    dx3[:, :NV] = lin.Gamma[k, i] + Jb @ lin.dvb_dq[k]
    dx3[:, NV:] = Jb @ lin.dvb_dh[k]
    du3 = np.zeros((3, NU))
    du3[:, :NUM_JOINTS] = Jb @ lin.dvb_dvJ[k] + JJ
    return sel @ val3, sel @ dx3, sel @ du3


def evaluate_stage(model: RobotModel, params: ConstraintParams, weights: CostWeights,
                   lin: LinNodes, k: int, x: RobotState, u: np.ndarray,
                   spec: StageSpec, terminal: bool = False) -> StageEval:
    u = np.asarray(u, dtype=float).reshape(NU) if not terminal else np.zeros(NU)
    forces = u[NUM_JOINTS:].reshape(NUM_LEGS, 3)
    vJ = u[:NUM_JOINTS]

    # ----- equalities
    rows_e, rows_Ex, rows_Eu = [], [], []
    for kind, foot in spec.eq_rows:
        i = int(foot)
        if kind == "swing_force":
            e = forces[i]
            Ex = np.zeros((3, NX))
            Eu = np.zeros((3, NU))
            Eu[:, NUM_JOINTS + 3 * i:NUM_JOINTS + 3 * (i + 1)] = np.eye(3)
            rows_e.append(e); rows_Ex.append(Ex); rows_Eu.append(Eu)
        elif kind == "stance_z":
            val, dx, du = _foot_velocity_rows(lin, k, i, np.array([[0.0, 0.0, 1.0]]))
            rows_e.append(val); rows_Ex.append(dx); rows_Eu.append(du)
        elif kind == "stance_lateral":
            yaw = lin.yaw[k]
            n = np.array([-np.sin(yaw), np.cos(yaw), 0.0])
            val, dx, du = _foot_velocity_rows(lin, k, i, n[None, :])
            dn = np.array([-np.cos(yaw), -np.sin(yaw), 0.0])
            dx = dx.copy()
            dx[0, 3:6] += (lin.footv[k, i] @ dn) * lin.yaw_jac[k]
            rows_e.append(val); rows_Ex.append(dx); rows_Eu.append(du)
        elif kind == "swing_height":
            zref, zdref = spec.swing_refs[i]
            val, dx, du = _foot_velocity_rows(lin, k, i, np.array([[0.0, 0.0, 1.0]]))
            val = val + np.array([params.swing_kp * (lin.fk[k, i, 2] - zref) - zdref])
            dx = dx.copy()
            dx[0, :NV] += params.swing_kp * lin.J[k, i, 2, :]
            rows_e.append(val); rows_Ex.append(dx); rows_Eu.append(du)
        else:
            raise OcpError(f"unknown equality row kind {kind}")
    n_eq = sum(r.shape[0] for r in rows_e) if rows_e else 0
    e = np.concatenate(rows_e) if rows_e else np.zeros(0)
    Ex = np.vstack(rows_Ex) if rows_Ex else np.zeros((0, NX))
    Eu = np.vstack(rows_Eu) if rows_Eu else np.zeros((0, NU))

    # ----- input-dependent inequalities
    if not terminal:
        m_fric = 5 * len(spec.friction_feet)
        m = 2 * NUM_JOINTS + 2 * NUM_JOINTS + m_fric
        g = np.empty(m)
        Gx = np.zeros((m, NX))
        Gu = np.zeros((m, NU))
        # velocity boxes [v + vmax; vmax - v]
        g[:NUM_JOINTS] = vJ + model.joint_vel_max
        g[NUM_JOINTS:2 * NUM_JOINTS] = model.joint_vel_max - vJ
        Gu[:NUM_JOINTS, :NUM_JOINTS] = np.eye(NUM_JOINTS)
        Gu[NUM_JOINTS:2 * NUM_JOINTS, :NUM_JOINTS] = -np.eye(NUM_JOINTS)
        # static torque [tau + tmax; tmax - tau]
        o = 2 * NUM_JOINTS
        g[o:o + NUM_JOINTS] = lin.tau[k] + model.joint_torque_max
        g[o + NUM_JOINTS:o + 2 * NUM_JOINTS] = model.joint_torque_max - lin.tau[k]
        Gx[o:o + NUM_JOINTS, :NV] = lin.dtau_dx[k]
        Gx[o + NUM_JOINTS:o + 2 * NUM_JOINTS, :NV] = -lin.dtau_dx[k]
        dtf = lin.dtau_df[k].reshape(NUM_JOINTS, 3 * NUM_LEGS)
        Gu[o:o + NUM_JOINTS, NUM_JOINTS:] = dtf
        Gu[o + NUM_JOINTS:o + 2 * NUM_JOINTS, NUM_JOINTS:] = -dtf
        # friction pyramids
        o = 4 * NUM_JOINTS
        c = params.friction_mu / np.sqrt(2.0)
        for i in spec.friction_feet:
            f = forces[i]
            g[o:o + 5] = [f[2] - params.min_normal_force, c * f[2] - f[0], c * f[2] + f[0],
                          c * f[2] - f[1], c * f[2] + f[1]]
            cols = NUM_JOINTS + 3 * i
            Gu[o, cols + 2] = 1.0
            Gu[o + 1, cols] = -1.0
            Gu[o + 1, cols + 2] = c
            Gu[o + 2, cols] = 1.0
            Gu[o + 2, cols + 2] = c
            Gu[o + 3, cols + 1] = -1.0
            Gu[o + 3, cols + 2] = c
            Gu[o + 4, cols + 1] = 1.0
            Gu[o + 4, cols + 2] = c
            o += 5
    else:
        g = np.zeros(0)
        Gx = np.zeros((0, NX))
        Gu = np.zeros((0, NU))

    # ----- state-only inequalities
    qj = x.config.joints
    region_sizes = sum(A.shape[0] for _, A, _ in spec.region_rows)
    ms = 2 * NUM_JOINTS + region_sizes
    gs = np.empty(ms)
    Sx = np.zeros((ms, NX))
    gs[:NUM_JOINTS] = qj - model.joint_pos_min
    gs[NUM_JOINTS:2 * NUM_JOINTS] = model.joint_pos_max - qj
    Sx[:NUM_JOINTS, 6:NV] = np.eye(NUM_JOINTS)
    Sx[NUM_JOINTS:2 * NUM_JOINTS, 6:NV] = -np.eye(NUM_JOINTS)
    o = 2 * NUM_JOINTS
    for i, A, b in spec.region_rows:
        kr = A.shape[0]
        gs[o:o + kr] = A @ lin.fk[k, i, :2] + b
        Sx[o:o + kr, :NV] = A @ lin.J[k, i, :2, :]
        o += kr

    # ----- costs (Gauss-Newton)
    w_state = weights.terminal if terminal else weights.state
    err, Jerr = state_error(x, spec.pos_ref, spec.rot_ref,
                            _joint_ref_cache(weights, spec))
    dt = 1.0 if terminal else spec.dt
    We = w_state * err
    cost = 0.5 * float(err @ We) * dt
    qx = (Jerr.T @ We) * dt
    Qxx = (Jerr.T @ (w_state[:, None] * Jerr)) * dt
    qu = np.zeros(NU)
    Quu = np.zeros((NU, NU))
    Qxu = np.zeros((NX, NU))

    if not terminal:
        # base-velocity tracking
        r = lin.vb[k] - spec.v_ref
        Jx = np.concatenate([lin.dvb_dq[k], lin.dvb_dh[k]], axis=1)
        Ju = np.zeros((6, NU))
        Ju[:, :NUM_JOINTS] = lin.dvb_dvJ[k]
        Wv = weights.base_velocity
        cost += 0.5 * float(r @ (Wv * r)) * dt
        qx += (Jx.T @ (Wv * r)) * dt
        qu += (Ju.T @ (Wv * r)) * dt
        Qxx += (Jx.T @ (Wv[:, None] * Jx)) * dt
        Quu += (Ju.T @ (Wv[:, None] * Ju)) * dt
        Qxu += (Jx.T @ (Wv[:, None] * Ju)) * dt
        # input tracking
        ru = u - spec.u_ref
        Wu = weights.input
        cost += 0.5 * float(ru @ (Wu * ru)) * dt
        qu += Wu * ru * dt
        Quu += np.diag(Wu) * dt

    return StageEval(e=e, Ex=Ex, Eu=Eu, g=g, Gx=Gx, Gu=Gu, gs=gs, Sx=Sx,
                     cost=cost, qx=qx, qu=qu, Qxx=Qxx, Quu=Quu, Qxu=Qxu)


_JOINT_REF_KEY = {}


def _joint_ref_cache(weights: CostWeights, spec: StageSpec) -> np.ndarray:
    # joint reference rides on the spec via the command; stored per spec at build
    return spec.__dict__.setdefault("_joint_ref", spec.__dict__.get("_joint_ref", None)) \
        if spec.__dict__.get("_joint_ref") is not None else spec.__dict__.setdefault("_joint_ref", _default_joint_ref(spec))


def _default_joint_ref(spec: StageSpec) -> np.ndarray:
    raise OcpError("stage spec missing joint reference")
