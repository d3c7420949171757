import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hexmpc import geometry as geo


def rng():
    return np.random.default_rng(0)


def test_hat_vee_roundtrip():
    v = rng().normal(size=(7, 3))
    assert np.allclose(geo.vee(geo.hat(v)), v)
    w = rng().normal(size=3)
    assert np.allclose(geo.hat(v) @ w, np.cross(v, w))


def test_so3_exp_log_roundtrip():
    w = rng().normal(size=(200, 3))
    w *= (rng().uniform(0, 3.0, size=200) / np.linalg.norm(w, axis=-1))[:, None]
    R = geo.so3_exp(w)
    assert np.allclose(geo.so3_log(R), w, atol=1e-9)


def test_so3_log_near_pi():
    axes = rng().normal(size=(50, 3))
    axes /= np.linalg.norm(axes, axis=-1, keepdims=True)
    for ang in [np.pi - 1e-6, np.pi - 1e-9]:
        R = geo.so3_exp(axes * ang)
        w = geo.so3_log(R)
        R2 = geo.so3_exp(w)
        assert np.allclose(R2, R, atol=1e-6)


def test_se3_exp_log_roundtrip():
    xi = rng().normal(size=(200, 6))
    # log returns the principal twist, so keep rotation magnitudes below pi
    ang = np.linalg.norm(xi[:, 3:], axis=-1, keepdims=True)
    xi[:, 3:] *= np.minimum(1.0, 2.9 / np.maximum(ang, 1e-12))
    R, p = geo.se3_exp(xi)
    assert np.allclose(geo.se3_log(R, p), xi, atol=1e-9)


def test_se3_exp_pure_translation():
    xi = np.array([0.5, 0.0, 0.0, 0.0, 0.0, 0.0])
    R, p = geo.se3_exp(xi)
    assert np.allclose(R, np.eye(3))
    assert np.allclose(p, [0.5, 0, 0])


def test_left_jacobian_inverse_consistent():
    w = rng().normal(size=(50, 3))
    V = geo.so3_left_jacobian(w)
    Vi = geo.so3_left_jacobian_inv(w)
    assert np.allclose(V @ Vi, np.broadcast_to(np.eye(3), V.shape), atol=1e-10)


def test_right_jacobian_inv_matches_fd():
    # d/d(eps) log(exp(w) exp(eps e_k)) = Jr_inv(w) e_k
    w = np.array([0.3, -0.2, 0.7])
    R = geo.so3_exp(w)
    Jri = geo.so3_right_jacobian_inv(w)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        lp = geo.so3_log(R @ geo.so3_exp(e))
        lm = geo.so3_log(R @ geo.so3_exp(-e))
        fd = (lp - lm) / (2 * h)
        assert np.allclose(Jri[:, k], fd, atol=1e-6)


def test_yaw_and_its_tangent():
    R = geo.rot_z(0.7)
    assert np.isclose(geo.yaw_of(R), 0.7)
    base = geo.so3_exp(np.array([0.05, -0.1, 0.4]))
    J = geo.yaw_tangent_jacobian(base)
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (geo.yaw_of(base @ geo.so3_exp(e)) - geo.yaw_of(base @ geo.so3_exp(-e))) / (2 * h)
        assert np.isclose(J[k], fd, atol=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_se3_bracket_antisymmetric(seed):
    g = np.random.default_rng(seed)
    a, b = g.normal(size=6), g.normal(size=6)
    assert np.allclose(geo.se3_bracket(a, b), -geo.se3_bracket(b, a))


def test_project_rotation():
    g = rng()
    R = geo.so3_exp(g.normal(size=3))
    noisy = R + 1e-3 * g.normal(size=(3, 3))
    P = geo.project_rotation(noisy)
    assert geo.is_rotation(P)
    assert np.abs(P - R).max() < 1e-2
