"""Independent oracles and finite-difference checks.

The oracles here are deliberately single-purpose re-implementations that do not
share code with the kinematics engine: the momentum oracle builds each link's
spatial momentum from scratch, the wrench oracle re-sums Newton/Euler terms
about the COM.  The FD harness perturbs configurations along tangent basis
directions through integrate_configuration, which is the convention every
analytic Jacobian in this package follows.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import geometry as geo
from .model import (
    NUM_JOINTS,
    NUM_LEGS,
    NV,
    Configuration,
    FootId,
    GeneralizedVelocity,
    Kinematics,
    RobotModel,
    difference_configuration,
    integrate_configuration,
    kinematics,
)


def sample_configuration(model: RobotModel, rng: np.random.Generator, rot_scale: float = 0.3,
                         margin: float = 0.08) -> Configuration:
    """Random configuration with joints strictly inside their boxes."""
    pos = rng.normal(scale=0.5, size=3)
    rot = geo.so3_exp(rng.normal(scale=rot_scale, size=3))
    lo, hi = model.joint_pos_min, model.joint_pos_max
    span = hi - lo
    joints = rng.uniform(lo + margin * span, hi - margin * span)
    return Configuration(pos, rot, joints)


def sample_velocity(model: RobotModel, rng: np.random.Generator, scale: float = 1.0) -> GeneralizedVelocity:
    return GeneralizedVelocity(rng.normal(scale=scale, size=6), rng.normal(scale=scale, size=NUM_JOINTS))


def tangent_basis() -> np.ndarray:
    return np.eye(NV)


def fd_configuration_jacobian(func: Callable[[Configuration], np.ndarray], q: Configuration,
                              h: float = 1e-6) -> np.ndarray:
    """Central differences of func along the 18 tangent basis directions."""
    f0 = np.asarray(func(q), dtype=float)
    out = np.zeros(f0.shape + (NV,))
    for k in range(NV):
        e = np.zeros(NV)
        e[k] = 1.0
        fp = np.asarray(func(integrate_configuration(q, e, h)), dtype=float)
        fm = np.asarray(func(integrate_configuration(q, -e, h)), dtype=float)
        out[..., k] = (fp - fm) / (2.0 * h)
    return out


def fd_vector_jacobian(func: Callable[[np.ndarray], np.ndarray], x0: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of func over a flat Euclidean argument."""
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(func(x0), dtype=float)
    out = np.zeros(f0.shape + (x0.size,))
    for k in range(x0.size):
        dx = np.zeros_like(x0)
        dx.flat[k] = h
        fp = np.asarray(func(x0 + dx), dtype=float)
        fm = np.asarray(func(x0 - dx), dtype=float)
        out[..., k] = (fp - fm) / (2.0 * h)
    return out


def rel_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=float)
    reference = np.asarray(reference, dtype=float)
    scale = max(1.0, float(np.abs(reference).max()) if reference.size else 1.0)
    return float(np.abs(analytic - reference).max()) / scale


# ---------------------------------------------------------------------------
# independent oracles


def link_momentum_oracle(model: RobotModel, q: Configuration, v: GeneralizedVelocity) -> np.ndarray:
    """Centroidal momentum as the sum of per-link spatial momenta at the COM frame.

    Straight-line per-link construction: world COM position, world velocity and
    world angular velocity of every link, then [sum m v; sum (I w + r x m v)].
    """
    R, p = q.rot, q.pos
    nu, om = v.base[:3], v.base[3:]
    masses, positions, velocities, omegas, inertias = [], [], [], [], []

    # base link
    masses.append(model.base_mass)
    positions.append(p + R @ model.base_com)
    velocities.append(R @ (nu + np.cross(om, model.base_com)))
    omegas.append(R @ om)
    inertias.append(R @ model.base_inertia @ R.T)

    ey = np.array([0.0, 1.0, 0.0])
    for i in range(NUM_LEGS):
        th = q.joints[2 * i]
        d = q.joints[2 * i + 1]
        thd = v.joints[2 * i]
        dd = v.joints[2 * i + 1]
        axis = np.array([np.sin(th), 0.0, -np.cos(th)])
        daxis = np.array([np.cos(th), 0.0, np.sin(th)])
        hip = model.hip_offset[i]
        Q = np.array([[np.cos(th), 0.0, -np.sin(th)], [0.0, 1.0, 0.0], [np.sin(th), 0.0, np.cos(th)]])
        w_link = R @ (om - thd * ey)
        Rl = R @ Q

        for mass, dist, ddist, I_loc in (
            (model.thigh_mass[i], model.thigh_com[i], 0.0, model.thigh_inertia[i]),
            (model.shank_mass[i], d + model.shank_com_offset[i], dd, model.shank_inertia[i]),
        ):
            s = hip + dist * axis
            sdot = dist * daxis * thd + ddist * axis
            masses.append(mass)
            positions.append(p + R @ s)
            velocities.append(R @ (nu + np.cross(om, s) + sdot))
            omegas.append(w_link)
            inertias.append(Rl @ I_loc @ Rl.T)

    masses = np.array(masses)
    positions = np.array(positions)
    velocities = np.array(velocities)
    com = (masses[:, None] * positions).sum(axis=0) / masses.sum()
    lin = (masses[:, None] * velocities).sum(axis=0)
    ang = np.zeros(3)
    for m_l, x_l, v_l, w_l, I_l in zip(masses, positions, velocities, omegas, inertias):
        ang += I_l @ w_l + np.cross(x_l - com, m_l * v_l)
    return np.concatenate([lin, ang])


def com_oracle(model: RobotModel, q: Configuration) -> np.ndarray:
    """Mass-weighted mean of link COM positions, built from scratch."""
    total = model.base_mass * (q.pos + q.rot @ model.base_com)
    for i in range(NUM_LEGS):
        th = q.joints[2 * i]
        d = q.joints[2 * i + 1]
        axis = np.array([np.sin(th), 0.0, -np.cos(th)])
        hip = model.hip_offset[i]
        total = total + model.thigh_mass[i] * (q.pos + q.rot @ (hip + model.thigh_com[i] * axis))
        total = total + model.shank_mass[i] * (q.pos + q.rot @ (hip + (d + model.shank_com_offset[i]) * axis))
    return total / model.total_mass


def potential_energy(model: RobotModel, q: Configuration) -> float:
    return model.total_mass * model.gravity * float(com_oracle(model, q)[2])


def wrench_rate_oracle(model: RobotModel, q: Configuration, forces: np.ndarray) -> np.ndarray:
    """Momentum rate from first principles: sum of forces and moments about the COM."""
    forces = np.asarray(forces, dtype=float).reshape(NUM_LEGS, 3)
    com = com_oracle(model, q)
    lin = forces.sum(axis=0) + model.total_mass * np.array([0.0, 0.0, -model.gravity])
    ang = np.zeros(3)
    for i in range(NUM_LEGS):
        th = q.joints[2 * i]
        d = q.joints[2 * i + 1]
        axis = np.array([np.sin(th), 0.0, -np.cos(th)])
        foot = q.pos + q.rot @ (model.hip_offset[i] + d * axis) - np.array([0.0, 0.0, model.wheel_radius])
        ang += np.cross(foot - com, forces[i])
    return np.concatenate([lin, ang])


def static_torque_oracle(model: RobotModel, q: Configuration, forces: np.ndarray, h: float = 1e-7) -> np.ndarray:
    """S(g(q) + J^T f) with g and J obtained by finite differences of independent maps."""
    forces = np.asarray(forces, dtype=float).reshape(NUM_LEGS, 3)

    def fk_all(qq: Configuration) -> np.ndarray:
        out = np.zeros((NUM_LEGS, 3))
        for i in range(NUM_LEGS):
            th = qq.joints[2 * i]
            d = qq.joints[2 * i + 1]
            axis = np.array([np.sin(th), 0.0, -np.cos(th)])
            out[i] = qq.pos + qq.rot @ (model.hip_offset[i] + d * axis) - np.array([0.0, 0.0, model.wheel_radius])
        return out

    g = fd_configuration_jacobian(lambda qq: np.array([potential_energy(model, qq)]), q, h=h)[0]
    Jall = fd_configuration_jacobian(fk_all, q, h=h)  # (6,3,18)
    gen = g.copy()
    for i in range(NUM_LEGS):
        gen = gen + Jall[i].T @ forces[i]
    return gen[6:]


# ---------------------------------------------------------------------------
# derivative check registry (used by the derivative-check endpoint/CLI)


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


_FD_TOL = 1e-5


def _check_contact_jacobian(model, rng):
    q = sample_configuration(model, rng)
    kin = kinematics(model, q)
    J = kin.contact_jacobians()
    fd = fd_configuration_jacobian(lambda qq: kinematics(model, qq).foot_w, q)
    return rel_error(J, fd)


def _check_com_jacobian(model, rng):
    q = sample_configuration(model, rng)
    J = kinematics(model, q).com_jacobian()
    fd = fd_configuration_jacobian(lambda qq: kinematics(model, qq).com_w, q)
    return rel_error(J, fd)


def _check_gravity(model, rng):
    q = sample_configuration(model, rng)
    g = kinematics(model, q).gravity()
    fd = fd_configuration_jacobian(lambda qq: np.array([potential_energy(model, qq)]), q)[0]
    return rel_error(g, fd)


def _check_momentum_map_derivative(model, rng):
    q = sample_configuration(model, rng)
    w = rng.normal(size=NV)
    D = kinematics(model, q).momentum_map_derivative(w)
    fd = fd_configuration_jacobian(lambda qq: kinematics(model, qq).centroidal_momentum_matrix() @ w, q)
    return rel_error(D, fd)


def _check_foot_velocity_derivative(model, rng):
    q = sample_configuration(model, rng)
    w = rng.normal(size=NV)
    G = kinematics(model, q).foot_velocity_derivative(w)
    fd = fd_configuration_jacobian(lambda qq: kinematics(model, qq).foot_velocities(w), q)
    return rel_error(G, fd)


def _check_torque_rows(model, rng):
    q = sample_configuration(model, rng)
    f = rng.normal(scale=60.0, size=(NUM_LEGS, 3))
    kin = kinematics(model, q)
    tau, dx, df = kin.actuated_torque(f)
    fd_x = fd_configuration_jacobian(lambda qq: kinematics(model, qq).actuated_torque(f)[0], q)
    fd_f = fd_vector_jacobian(lambda ff: kinematics(model, q).actuated_torque(ff.reshape(NUM_LEGS, 3))[0], f.ravel())
    return max(rel_error(dx, fd_x), rel_error(df.reshape(NUM_JOINTS, -1), fd_f))


DERIVATIVE_CHECKS: dict[str, Callable] = {
    "contact_jacobian": _check_contact_jacobian,
    "com_jacobian": _check_com_jacobian,
    "gravity_term": _check_gravity,
    "momentum_map_derivative": _check_momentum_map_derivative,
    "foot_velocity_derivative": _check_foot_velocity_derivative,
    "static_torque_rows": _check_torque_rows,
}


def run_derivative_checks(model: RobotModel, seed: int, count: int,
                          names: list[str] | None = None) -> list[CheckResult]:
    """Run every registered FD comparison on `count` random states each."""
    checks = DERIVATIVE_CHECKS if names is None else {n: DERIVATIVE_CHECKS[n] for n in names}
    results = []
    for name, fn in checks.items():
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(count):
            worst = max(worst, fn(model, rng))
        results.append(CheckResult(name, worst, _FD_TOL))
    return results


def run_oracle_checks(model: RobotModel, seed: int, draws: int) -> list[CheckResult]:
    """Oracle-equivalence checks (analytic vs independent re-implementations)."""
    rng = np.random.default_rng(seed)
    worst_cmm = 0.0
    worst_com = 0.0
    worst_rt = 0.0
    for _ in range(draws):
        q = sample_configuration(model, rng)
        v = sample_velocity(model, rng)
        A = kinematics(model, q).centroidal_momentum_matrix()
        worst_cmm = max(worst_cmm, float(np.abs(A @ v.stacked() - link_momentum_oracle(model, q, v)).max()))
        worst_com = max(worst_com, float(np.abs(kinematics(model, q).com_w - com_oracle(model, q)).max()))
        dq = rng.normal(size=NV)
        dq *= min(1.0, 1.0 / max(np.linalg.norm(dq), 1e-12))
        q2 = integrate_configuration(q, dq, 1.0)
        worst_rt = max(worst_rt, float(np.abs(difference_configuration(q, q2) - dq).max()))
    return [
        CheckResult("cmm_vs_link_momentum_sum", worst_cmm, 1e-10),
        CheckResult("com_vs_link_sum", worst_com, 1e-12),
        CheckResult("integrate_difference_roundtrip", worst_rt, 1e-10),
    ]
