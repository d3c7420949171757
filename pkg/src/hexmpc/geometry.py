"""Rotation/rigid-transform helpers.

Conventions used throughout the package:
  - rotations are 3x3 matrices, world_from_base;
  - base twists are [linear; angular], expressed in the base-local frame;
  - all functions broadcast over leading batch dimensions.
"""

from __future__ import annotations

import numpy as np

_EPS = 1e-12
# below this angle the closed forms switch to their Taylor expansions
_SMALL = 1e-8


def hat(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(v) @ w = v x w."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    x, y, z = v[..., 0], v[..., 1], v[..., 2]
    out[..., 0, 1] = -z
    out[..., 0, 2] = y
    out[..., 1, 0] = z
    out[..., 1, 2] = -x
    out[..., 2, 0] = -y
    out[..., 2, 1] = x
    return out


def vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _sinc_terms(angle: np.ndarray):
    """Return (sin a / a, (1 - cos a)/a^2, (a - sin a)/a^3) with Taylor guards."""
    a2 = angle * angle
    small = angle < _SMALL
    safe = np.where(small, 1.0, angle)
    s = np.where(small, 1.0 - a2 / 6.0, np.sin(safe) / safe)
    c = np.where(small, 0.5 - a2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    t = np.where(small, 1.0 / 6.0 - a2 / 120.0, (safe - np.sin(safe)) / (safe ** 3))
    return s, c, t


def so3_exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula, exp of a rotation vector."""
    w = np.asarray(w, dtype=float)
    angle = np.linalg.norm(w, axis=-1)
    s, c, _ = _sinc_terms(angle)
    K = hat(w)
    K2 = K @ K
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + s[..., None, None] * K + c[..., None, None] * K2


def so3_log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; robust near 0 and pi."""
    R = np.asarray(R, dtype=float)
    tr = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) * 0.5, -1.0, 1.0)
    angle = np.arccos(tr)
    w_skew = vee(R - np.swapaxes(R, -1, -2)) * 0.5  # = sin(angle) * axis

    s, _, _ = _sinc_terms(angle)
    generic = w_skew / np.where(s < _EPS, 1.0, s)[..., None]

    # near pi the skew part degenerates; recover the axis from (R + I)/2 = aa^T + O(pi - angle)
    near_pi = angle > np.pi - 1e-4
    if np.any(near_pi):
        B = (R + np.swapaxes(R, -1, -2)) * 0.5 + np.eye(3)  # ~ 2 aa^T at angle pi
        diag = np.stack([B[..., 0, 0], B[..., 1, 1], B[..., 2, 2]], axis=-1)
        k = np.argmax(diag, axis=-1)
        idx = np.indices(k.shape)
        col = np.stack([B[(*idx, 0, k)], B[(*idx, 1, k)], B[(*idx, 2, k)]], axis=-1)
        axis = col / (np.linalg.norm(col, axis=-1, keepdims=True) + _EPS)
        # pick the sign consistent with the (small) skew part when available
        flip = np.sum(axis * w_skew, axis=-1) < 0.0
        axis = axis * np.where(flip, -1.0, 1.0)[..., None]
        pi_branch = axis * angle[..., None]
        generic = np.where(near_pi[..., None], pi_branch, generic)
    return generic


def so3_left_jacobian(w: np.ndarray) -> np.ndarray:
    """V(w): exp chart translation coupling, so3 left Jacobian."""
    w = np.asarray(w, dtype=float)
    angle = np.linalg.norm(w, axis=-1)
    _, c, t = _sinc_terms(angle)
    K = hat(w)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + c[..., None, None] * K + t[..., None, None] * (K @ K)


def so3_left_jacobian_inv(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    angle = np.linalg.norm(w, axis=-1)
    a2 = angle * angle
    small = angle < _SMALL
    safe = np.where(small, 1.0, angle)
    # 1/a^2 - (1 + cos a)/(2 a sin a), Taylor 1/12 + a^2/720
    coef = np.where(
        small,
        1.0 / 12.0 + a2 / 720.0,
        1.0 / np.where(small, 1.0, a2) - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)),
    )
    K = hat(w)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye - 0.5 * K + coef[..., None, None] * (K @ K)


def so3_right_jacobian_inv(w: np.ndarray) -> np.ndarray:
    """Inverse right Jacobian: d/d(dw) log(exp(w) exp(dw)) at dw=0."""
    return np.swapaxes(so3_left_jacobian_inv(w), -1, -2)


def se3_exp(xi: np.ndarray):
    """Exp of a body twist [v; w] -> (rotation, translation)."""
    xi = np.asarray(xi, dtype=float)
    v, w = xi[..., :3], xi[..., 3:]
    R = so3_exp(w)
    p = (so3_left_jacobian(w) @ v[..., None])[..., 0]
    return R, p


def se3_log(R: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Body twist [v; w] with se3_exp(result) == (R, p)."""
    w = so3_log(R)
    v = (so3_left_jacobian_inv(w) @ np.asarray(p, dtype=float)[..., None])[..., 0]
    return np.concatenate([v, w], axis=-1)


def se3_bracket(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Lie bracket of body twists [v; w]."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    va, wa = a[..., :3], a[..., 3:]
    vb, wb = b[..., :3], b[..., 3:]
    v = np.cross(wa, vb) + np.cross(va, wb)
    w = np.cross(wa, wb)
    return np.concatenate([v, w], axis=-1)


def transform_compose(R1, p1, R2, p2):
    """(R1,p1) * (R2,p2)."""
    return R1 @ R2, p1 + (R1 @ np.asarray(p2, dtype=float)[..., None])[..., 0]


def transform_inv_compose(R1, p1, R2, p2):
    """(R1,p1)^-1 * (R2,p2)."""
    R1t = np.swapaxes(R1, -1, -2)
    dp = np.asarray(p2, dtype=float) - np.asarray(p1, dtype=float)
    return R1t @ R2, (R1t @ dp[..., None])[..., 0]


def rot_z(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def yaw_of(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    return np.arctan2(R[..., 1, 0], R[..., 0, 0])


def yaw_tangent_jacobian(R: np.ndarray) -> np.ndarray:
    """d yaw(R Exp(e_k dphi)) / dphi for the three angular basis directions, shape (...,3)."""
    R = np.asarray(R, dtype=float)
    r00, r10 = R[..., 0, 0], R[..., 1, 0]
    den = r00 * r00 + r10 * r10
    out = np.zeros(R.shape[:-2] + (3,))
    for k in range(3):
        e = np.zeros(3)
        e[k] = 1.0
        dR = R @ hat(e)
        out[..., k] = (r00 * dR[..., 1, 0] - r10 * dR[..., 0, 0]) / den
    return out


def project_rotation(R: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (polar projection via SVD)."""
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    D = U @ Vt
    det = np.linalg.det(D)
    U = U.copy()
    U[..., :, 2] *= np.where(det < 0, -1.0, 1.0)[..., None]
    return U @ Vt


def is_rotation(R: np.ndarray, tol: float = 1e-8) -> bool:
    R = np.asarray(R, dtype=float)
    err = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max()
    return bool(err < tol and np.all(np.linalg.det(R) > 0))
