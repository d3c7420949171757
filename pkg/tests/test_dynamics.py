import numpy as np
import pytest

from hexmpc import validation as val
from hexmpc.dynamics import (
    NU,
    NX,
    ControlInput,
    RobotState,
    SingularBaseMomentumError,
    base_velocity,
    dynamics_derivatives,
    integrate_state,
    state_difference,
    state_equation,
    state_retract,
    zero_input,
)
from hexmpc.model import NV, GeneralizedVelocity, centroidal_momentum_matrix


def random_state(model, rng, momentum_scale=5.0) -> RobotState:
    q = val.sample_configuration(model, rng)
    return RobotState(q, rng.normal(scale=momentum_scale, size=6))


def random_input(rng, force_scale=50.0) -> ControlInput:
    return ControlInput(rng.normal(scale=0.5, size=12), rng.normal(scale=force_scale, size=(6, 3)))


# ---------------------------------------------------------------------------
# base velocity map


def test_base_velocity_zero(model):
    x = RobotState(model.nominal_configuration(), np.zeros(6))
    assert np.allclose(base_velocity(model, x, zero_input()), 0.0)


def test_base_velocity_roundtrip(model, rng):
    for _ in range(20):
        q = val.sample_configuration(model, rng)
        A = centroidal_momentum_matrix(model, q)
        vb_star = rng.normal(size=6)
        vj_star = rng.normal(size=12)
        h = A @ np.concatenate([vb_star, vj_star])
        x = RobotState(q, h)
        u = ControlInput(vj_star, np.zeros((6, 3)))
        vb = base_velocity(model, x, u)
        assert np.abs(vb - vb_star).max() < 1e-9
        # exact solve of the momentum map
        res = A @ np.concatenate([vb, vj_star]) - h
        assert np.abs(res).max() <= 1e-9


def test_base_velocity_basis(model, rng):
    q = val.sample_configuration(model, rng)
    A = centroidal_momentum_matrix(model, q)
    for k in range(6):
        h = A[:, :6] @ np.eye(6)[k]
        vb = base_velocity(model, RobotState(q, h), zero_input())
        assert np.allclose(vb, np.eye(6)[k], atol=1e-10)


def test_base_velocity_singular_raises(model, rng, monkeypatch):
    import hexmpc.dynamics as dyn

    def fake_solve(kin, momentum, v_joints):
        return np.full(6, np.nan)

    x = random_state(model, rng)
    monkeypatch.setattr(dyn, "solve_base_velocity", fake_solve)
    with pytest.raises(SingularBaseMomentumError):
        dyn.base_velocity(model, x, zero_input())


# ---------------------------------------------------------------------------
# state equation


def test_state_equation_free_fall(model, rng):
    x = random_state(model, rng)
    u = ControlInput(rng.normal(scale=0.3, size=12), np.zeros((6, 3)))
    _, hdot = state_equation(model, x, u)
    assert np.allclose(hdot[:3], [0, 0, -model.total_mass * model.gravity])
    assert np.allclose(hdot[3:], 0.0)


def test_state_equation_static_equilibrium(model):
    q = model.nominal_configuration()
    x = RobotState(q, np.zeros(6))
    f = np.zeros((6, 3))
    f[:, 2] = model.total_mass * model.gravity / 6.0
    u = ControlInput(np.zeros(12), f)
    xi, hdot = state_equation(model, x, u)
    assert np.abs(hdot).max() < 1e-10
    assert np.allclose(xi, 0.0)


def test_state_equation_matches_wrench_oracle(model, rng):
    for _ in range(20):
        x = random_state(model, rng)
        u = random_input(rng)
        _, hdot = state_equation(model, x, u)
        ref = val.wrench_rate_oracle(model, x.config, u.forces)
        assert np.abs(hdot - ref).max() < 1e-10


def test_angular_rate_translation_invariant(model, rng):
    x = random_state(model, rng)
    u = random_input(rng)
    _, hdot = state_equation(model, x, u)
    q2 = val.Configuration(x.config.pos + [1.5, -2.0, 0.7], x.config.rot, x.config.joints)
    _, hdot2 = state_equation(model, RobotState(q2, x.momentum), u)
    assert np.abs(hdot - hdot2).max() < 1e-9


# ---------------------------------------------------------------------------
# integration


def test_momentum_conserved_zero_force_zero_gravity(model, rng):
    x = random_state(model, rng, momentum_scale=2.0)
    u = ControlInput(rng.normal(scale=0.2, size=12), np.zeros((6, 3)))
    h0 = x.momentum.copy()
    for _ in range(67):  # ~1 s at dt = 0.015
        x = integrate_state(model, x, u, 0.015, gravity=0.0)
    assert np.abs(x.momentum - h0).max() <= 1e-8


def test_integration_fourth_order(model, rng):
    # Richardson: halving dt twice should shrink the error ~16x per halving
    x0 = random_state(model, rng, momentum_scale=3.0)
    u = random_input(rng, force_scale=30.0)
    T = 0.12

    def rollout(n):
        x = x0
        for _ in range(n):
            x = integrate_state(model, x, u, T / n)
        return x

    ref = rollout(64)
    errs = []
    for n in (4, 8, 16):
        errs.append(np.linalg.norm(state_difference(ref, rollout(n))))
    r1 = errs[0] / errs[1]
    r2 = errs[1] / errs[2]
    assert 10.0 < r1 < 25.0, (errs, r1, r2)
    assert 10.0 < r2 < 25.0, (errs, r1, r2)


def test_static_equilibrium_rollout(model):
    q = model.nominal_configuration()
    x = RobotState(q, np.zeros(6))
    f = np.zeros((6, 3))
    f[:, 2] = model.total_mass * model.gravity / 6.0
    u = ControlInput(np.zeros(12), f)
    x1 = x
    for _ in range(67):
        x1 = integrate_state(model, x1, u, 0.015)
    assert np.abs(state_difference(x, x1)).max() < 1e-9


def test_integrate_state_dt_domain(model, rng):
    x = random_state(model, rng)
    with pytest.raises(ValueError):
        integrate_state(model, x, zero_input(), 0.0)
    with pytest.raises(ValueError):
        integrate_state(model, x, zero_input(), 0.2)


# ---------------------------------------------------------------------------
# derivatives


def fd_dynamics(model, x, u, h=1e-6):
    u0 = u.stacked()

    def f_of(state, uu):
        xi, hdot = state_equation(model, state, ControlInput.from_stacked(uu))
        return np.concatenate([xi, hdot])

    fx = np.zeros((NX, NX))
    for k in range(NX):
        e = np.zeros(NX)
        e[k] = h
        fp = f_of(state_retract(x, e), u0)
        fm = f_of(state_retract(x, -e), u0)
        fx[:, k] = (fp - fm) / (2 * h)
    fu = np.zeros((NX, NU))
    for k in range(NU):
        e = np.zeros(NU)
        e[k] = h
        fu[:, k] = (f_of(x, u0 + e) - f_of(x, u0 - e)) / (2 * h)
    return fx, fu


def test_dynamics_derivatives_fd(model, rng):
    for _ in range(5):
        x = random_state(model, rng)
        u = random_input(rng)
        fx, fu = dynamics_derivatives(model, x, u)
        fx_fd, fu_fd = fd_dynamics(model, x, u)
        assert val.rel_error(fx, fx_fd) < 1e-5
        assert val.rel_error(fu, fu_fd) < 1e-5


def test_dynamics_derivative_structure(model, rng):
    x = random_state(model, rng)
    u = random_input(rng)
    fx, fu = dynamics_derivatives(model, x, u)
    from hexmpc.model import kinematics

    kin = kinematics(model, x.config)
    A = kin.centroidal_momentum_matrix()
    Abinv = np.linalg.inv(A[:, :6])
    # d(config rate)/dh = [A_b^{-1}; 0]
    assert np.allclose(fx[0:6, NV:], Abinv, atol=1e-12)
    assert np.allclose(fx[6:NV, NV:], 0.0)
    # d(momentum rate)/df_i: identity upper blocks
    for i in range(6):
        assert np.allclose(fu[NV:NV + 3, 12 + 3 * i:15 + 3 * i], np.eye(3))
