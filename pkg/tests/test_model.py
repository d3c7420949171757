import copy
import json

import numpy as np
import pytest

from hexmpc import geometry as geo
from hexmpc import validation as val
from hexmpc.model import (
    NV,
    Configuration,
    FootId,
    GeneralizedVelocity,
    ModelError,
    PAIR_OF,
    RobotModel,
    centroidal_momentum_matrix,
    com_position,
    contact_jacobian,
    default_model_path,
    difference_configuration,
    forward_kinematics,
    foot_velocity,
    gravity_term,
    integrate_configuration,
    kinematics,
    model_derivatives,
)


def test_pairing_is_involution():
    for foot in FootId:
        assert PAIR_OF[PAIR_OF[foot]] == foot


def test_model_invariants_enforced(model):
    with open(default_model_path()) as f:
        data = json.load(f)
    bad = copy.deepcopy(data)
    bad["legs"]["MF"]["hip_limits_deg"] = [-45.0, 45.0]
    with pytest.raises(ModelError, match="50 degrees"):
        RobotModel(bad)
    bad = copy.deepcopy(data)
    bad["base"]["inertia"] = [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 1.0]]
    with pytest.raises(ModelError, match="positive definite"):
        RobotModel(bad)
    assert model.total_mass > 0


# ---------------------------------------------------------------------------
# configuration manifold


def test_integrate_identity(model):
    q = model.nominal_configuration()
    q2 = integrate_configuration(q, np.zeros(NV), 0.015)
    assert np.allclose(q2.pos, q.pos)
    assert np.allclose(q2.rot, q.rot)
    assert np.allclose(q2.joints, q.joints)


def test_integrate_pure_translation():
    q = Configuration.identity()
    dq = np.zeros(NV)
    dq[0] = 1.0  # 1 m/s along x
    q2 = integrate_configuration(q, dq, 0.5)
    assert np.allclose(q2.pos, [0.5, 0.0, 0.0], atol=1e-12)
    assert np.allclose(q2.rot, np.eye(3), atol=1e-12)


def test_integrate_difference_small_dt(model, rng):
    for _ in range(20):
        q = val.sample_configuration(model, rng)
        dq = rng.normal(size=NV)
        dt = 1e-3
        q2 = integrate_configuration(q, dq, dt)
        assert np.allclose(difference_configuration(q, q2) / dt, dq, atol=1e-6)


def test_difference_zero_and_yaw():
    q = Configuration.identity()
    assert np.allclose(difference_configuration(q, q), 0.0)
    q2 = Configuration(np.zeros(3), geo.rot_z(np.pi / 2), np.zeros(12))
    d = difference_configuration(q, q2)
    assert np.isclose(d[5], np.pi / 2)
    assert np.allclose(d[:5], 0.0, atol=1e-12)


def test_roundtrip_property(model, rng):
    worst = 0.0
    for _ in range(1000):
        q = val.sample_configuration(model, rng)
        dq = rng.normal(size=NV)
        n = np.linalg.norm(dq)
        if n > 1.0:
            dq /= n
        q2 = integrate_configuration(q, dq, 1.0)
        worst = max(worst, float(np.abs(difference_configuration(q, q2) - dq).max()))
    assert worst <= 1e-10


# ---------------------------------------------------------------------------
# forward kinematics


def test_fk_nominal_stance(model):
    q = model.nominal_configuration()
    for foot in FootId:
        p, ryaw = forward_kinematics(model, q, foot)
        hip_world = q.pos + q.rot @ model.hip_offset[int(foot)]
        assert np.allclose(p[:2], hip_world[:2], atol=1e-12)
        assert np.isclose(p[2], 0.0, atol=1e-12)
        assert np.allclose(ryaw, np.eye(3))


def test_fk_pitched_hip_matches_planar_two_link(model):
    # closed-form 2-dof planar oracle: hip pitch moves the wheel center on a circle
    q0 = model.nominal_configuration()
    joints = q0.joints.copy()
    theta = np.deg2rad(10.0)
    joints[2 * int(FootId.LF)] = theta
    q = Configuration(q0.pos, q0.rot, joints)
    p, _ = forward_kinematics(model, q, FootId.LF)
    hip = q0.pos + model.hip_offset[int(FootId.LF)]
    d = model.nominal_knee
    expected = hip + d * np.array([np.sin(theta), 0.0, -np.cos(theta)]) - [0, 0, model.wheel_radius]
    assert np.allclose(p, expected, atol=1e-12)
    assert p[0] > hip[0]  # displaced forward
    assert p[2] > 0.0     # raised per the circular arc


def test_fk_yaw_follows_base(model):
    q0 = model.nominal_configuration()
    q = Configuration(q0.pos, geo.rot_z(np.pi / 2), q0.joints)
    _, ryaw = forward_kinematics(model, q, FootId.RR)
    assert np.allclose(ryaw, geo.rot_z(np.pi / 2), atol=1e-12)


# ---------------------------------------------------------------------------
# velocities and jacobians


def test_foot_velocity_zero(model, rng):
    q = val.sample_configuration(model, rng)
    v = GeneralizedVelocity(np.zeros(6), np.zeros(12))
    for foot in FootId:
        assert np.allclose(foot_velocity(model, q, v, foot), 0.0)


def test_foot_velocity_rigid_translation(model):
    q = model.nominal_configuration()
    v = GeneralizedVelocity(np.array([0.3, 0, 0, 0, 0, 0]), np.zeros(12))
    for foot in FootId:
        assert np.allclose(foot_velocity(model, q, v, foot), [0.3, 0, 0], atol=1e-12)


def test_foot_velocity_matches_fd(model, rng):
    for _ in range(5):
        q = val.sample_configuration(model, rng)
        v = val.sample_velocity(model, rng)
        got = np.array([foot_velocity(model, q, v, f) for f in FootId])
        h = 1e-6
        qp = integrate_configuration(q, v.stacked(), h)
        qm = integrate_configuration(q, -v.stacked(), h)
        fd = (kinematics(model, qp).foot_w - kinematics(model, qm).foot_w) / (2 * h)
        assert np.abs(got - fd).max() < 1e-5


def test_contact_jacobian_structure(model, rng):
    q = val.sample_configuration(model, rng)
    for foot in FootId:
        J = contact_jacobian(model, q, foot)
        assert J.shape == (3, NV)
        assert np.allclose(J[:, 0:3], q.rot)  # base-translation block is world_from_base
        for other in FootId:
            if other != foot:
                assert np.allclose(J[:, 6 + 2 * int(other):8 + 2 * int(other)], 0.0)


def test_contact_jacobian_matches_fd(model, rng):
    err = val.run_derivative_checks(model, seed=7, count=10, names=["contact_jacobian"])[0]
    assert err.passed, err


# ---------------------------------------------------------------------------
# centroidal momentum and COM


def test_cmm_total_mass_property(model, rng):
    q = val.sample_configuration(model, rng)
    w = rng.normal(size=3)
    vb = np.concatenate([q.rot.T @ w, np.zeros(3)])  # pure world translation w
    A = centroidal_momentum_matrix(model, q)
    h = A @ np.concatenate([vb, np.zeros(12)])
    assert np.allclose(h[:3], model.total_mass * w, atol=1e-10)
    assert np.allclose(h[3:], 0.0, atol=1e-10)


def test_cmm_matches_link_momentum_oracle(model, rng):
    for _ in range(50):
        q = val.sample_configuration(model, rng)
        v = val.sample_velocity(model, rng)
        A = centroidal_momentum_matrix(model, q)
        href = val.link_momentum_oracle(model, q, v)
        assert np.abs(A @ v.stacked() - href).max() < 1e-10


def test_cmm_knee_extension_momentum(model):
    q = model.nominal_configuration()
    vj = np.zeros(12)
    vj[2 * int(FootId.MR) + 1] = 1.0  # unit knee extension rate on MR
    v = GeneralizedVelocity(np.zeros(6), vj)
    h = centroidal_momentum_matrix(model, q) @ v.stacked()
    assert np.isclose(h[2], -model.shank_mass[int(FootId.MR)])  # distal mass moves down


def test_com_symmetry_oracle_equivariance(model, rng):
    q = model.nominal_configuration()
    assert np.isclose(com_position(model, q)[1], 0.0, atol=1e-12)
    qr = val.sample_configuration(model, rng)
    assert np.abs(com_position(model, qr) - val.com_oracle(model, qr)).max() < 1e-12
    d = np.array([0.3, -0.2, 0.5])
    q2 = Configuration(qr.pos + d, qr.rot, qr.joints)
    assert np.allclose(com_position(model, q2), com_position(model, qr) + d, atol=1e-12)
    # FK equivariance under the same rigid displacement
    for foot in (FootId.LF, FootId.MR):
        assert np.allclose(
            forward_kinematics(model, q2, foot)[0],
            forward_kinematics(model, qr, foot)[0] + d,
            atol=1e-12,
        )


def test_ab_invertible_over_joint_box(model):
    # grid over hip/knee extremes applied to all legs simultaneously
    for hip_frac in (0.02, 0.5, 0.98):
        for knee_frac in (0.02, 0.5, 0.98):
            joints = np.empty(12)
            joints[0::2] = model.joint_pos_min[0::2] + hip_frac * (model.joint_pos_max[0::2] - model.joint_pos_min[0::2])
            joints[1::2] = model.joint_pos_min[1::2] + knee_frac * (model.joint_pos_max[1::2] - model.joint_pos_min[1::2])
            q = Configuration(np.array([0, 0, 0.5]), np.eye(3), joints)
            Ab = centroidal_momentum_matrix(model, q)[:, :6]
            c = np.linalg.cond(Ab)
            assert np.isfinite(c) and c < 1e6


# ---------------------------------------------------------------------------
# gravity


def test_gravity_knee_entries_nominal(model):
    q = model.nominal_configuration()
    g = gravity_term(model, q)
    fd = val.fd_configuration_jacobian(lambda qq: np.array([val.potential_energy(model, qq)]), q)[0]
    assert np.abs(g - fd).max() < 1e-6
    for i in range(6):
        # supported weight component along the (vertical) leg axis, with minus sign
        assert np.isclose(g[6 + 2 * i + 1], -model.shank_mass[i] * model.gravity, atol=1e-9)


def test_gravity_fd_and_zero_gravity(model, rng):
    err = val.run_derivative_checks(model, seed=3, count=10, names=["gravity_term"])[0]
    assert err.passed, err
    with open(default_model_path()) as f:
        data = json.load(f)
    data["gravity"] = 0.0
    zero_g = RobotModel(data)
    q = val.sample_configuration(zero_g, rng)
    assert np.allclose(gravity_term(zero_g, q), 0.0)


# ---------------------------------------------------------------------------
# derivative bundle


def test_model_derivatives_fd(model):
    for name in ("momentum_map_derivative", "foot_velocity_derivative", "com_jacobian", "static_torque_rows"):
        res = val.run_derivative_checks(model, seed=11, count=10, names=[name])[0]
        assert res.passed, res


def test_momentum_derivative_zero_velocity(model, rng):
    q = val.sample_configuration(model, rng)
    v = GeneralizedVelocity(np.zeros(6), np.zeros(12))
    der = model_derivatives(model, q, v)
    assert np.allclose(der.momentum, 0.0)


def test_fk_derivative_base_translation_identity(model):
    q = model.nominal_configuration()  # identity base rotation
    der = model_derivatives(model, q, GeneralizedVelocity(np.zeros(6), np.zeros(12)))
    for i in range(6):
        assert np.allclose(der.fk[i, :, 0:3], np.eye(3))


def test_run_oracle_checks(model):
    for res in val.run_oracle_checks(model, seed=5, draws=50):
        assert res.passed, res
