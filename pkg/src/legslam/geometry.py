"""SE(3) arithmetic on unit-quaternion poses.

Tangent vectors are ordered translation-first, ``(v_x, v_y, v_z, w_x, w_y, w_z)``,
so index 2 is always the z translation. ``exp``/``log`` are the full group maps
(rotation through Rodrigues, translation through the left Jacobian ``V``).
"""

from __future__ import annotations

import math

import numpy as np

SMALL_ANGLE = 1e-8
# Jacobian coefficients divide by up to theta**5, so they switch to series earlier.
JACOBIAN_SMALL_ANGLE = 1e-3


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]], dtype=float
    )


def _quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def _normalized(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(float(q @ q))
    return q / (-n if q[0] < 0.0 else n)


class Pose3:
    """Immutable rigid-body transform.

    ``rotation`` is a unit quaternion ``(w, x, y, z)`` kept canonical with
    ``w >= 0``; ``translation`` is in meters. The pose maps body coordinates
    into the parent frame: ``p_parent = R @ p_body + t``.
    """

    __slots__ = ("_q", "_t", "_R")

    def __init__(self, rotation=(1.0, 0.0, 0.0, 0.0), translation=(0.0, 0.0, 0.0)):
        q = np.asarray(rotation, dtype=float).reshape(4)
        t = np.array(translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        if not np.any(q):
            raise ValueError("rotation quaternion must be non-zero")
        q = _normalized(q)
        q.flags.writeable = False
        t.flags.writeable = False
        self._q = q
        self._t = t
        self._R = None

    @classmethod
    def _trusted(cls, q: np.ndarray, t: np.ndarray) -> Pose3:
        # Internal fast path: inputs are finite results of group operations.
        self = object.__new__(cls)
        q = _normalized(q)
        q.flags.writeable = False
        t.flags.writeable = False
        self._q = q
        self._t = t
        self._R = None
        return self

    @classmethod
    def identity(cls) -> Pose3:
        return cls()

    @classmethod
    def from_matrix(cls, T: np.ndarray) -> Pose3:
        T = np.asarray(T, dtype=float)
        return cls(matrix_to_quat(T[:3, :3]), T[:3, 3])

    @classmethod
    def from_rotation_matrix(cls, R: np.ndarray, translation=(0.0, 0.0, 0.0)) -> Pose3:
        return cls(matrix_to_quat(R), translation)

    @property
    def rotation(self) -> np.ndarray:
        return self._q

    @property
    def translation(self) -> np.ndarray:
        return self._t

    @property
    def rotation_matrix(self) -> np.ndarray:
        if self._R is None:
            R = _quat_to_matrix(self._q)
            R.flags.writeable = False
            self._R = R
        return self._R

    @property
    def z(self) -> float:
        return float(self._t[2])

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation_matrix
        T[:3, 3] = self._t
        return T

    def inverse(self) -> Pose3:
        return inverse(self)

    def __matmul__(self, other: Pose3) -> Pose3:
        return compose(self, other)

    def __repr__(self) -> str:
        q = ", ".join(f"{c:.6g}" for c in self._q)
        t = ", ".join(f"{c:.6g}" for c in self._t)
        return f"Pose3(rotation=({q}), translation=({t}))"

    def allclose(self, other: Pose3, atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self._t, other._t, rtol=0.0, atol=atol)
            and np.allclose(self._q, other._q, rtol=0.0, atol=atol)
        )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to quaternion ``(w, x, y, z)`` (Shepperd's method)."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    return _normalized(np.array(q))


def _v_coefficients(theta: float) -> tuple[float, float]:
    """Coefficients ``B, C`` of ``V = I + B W + C W^2``."""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0, 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    t2 = theta * theta
    s = math.sin(0.5 * theta)
    return 2.0 * s * s / t2, (theta - math.sin(theta)) / (t2 * theta)


def exp(xi) -> Pose3:
    xi = np.asarray(xi, dtype=float).reshape(6)
    if not np.all(np.isfinite(xi)):
        raise ValueError("twist entries must be finite")
    v, w = xi[:3], xi[3:]
    theta = math.sqrt(float(w @ w))
    half = 0.5 * theta
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        sinc_half = 0.5 - t2 / 48.0 + t2 * t2 / 3840.0
    else:
        sinc_half = math.sin(half) / theta
    q = np.concatenate(([math.cos(half)], sinc_half * w))
    B, C = _v_coefficients(theta)
    W = skew(w)
    t = v + B * (W @ v) + C * (W @ (W @ v))
    return Pose3._trusted(q, t)


def _rotation_log(q: np.ndarray) -> np.ndarray:
    # q is canonical (w >= 0), so the angle lands in [0, pi].
    w = q[0]
    u = q[1:]
    n = math.sqrt(float(u @ u))
    if n < 0.5 * SMALL_ANGLE:
        # 2 atan(n/w)/n to fourth order in n/w.
        r2 = (n / w) ** 2
        return (2.0 / w) * (1.0 - r2 / 3.0 + r2 * r2 / 5.0) * u
    theta = 2.0 * math.atan2(n, w)
    return (theta / n) * u


def log(p: Pose3) -> np.ndarray:
    w = _rotation_log(p.rotation)
    theta = math.sqrt(float(w @ w))
    W = skew(w)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        D = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = 0.5 * theta
        D = (1.0 - half * math.cos(half) / math.sin(half)) / (theta * theta)
    t = p.translation
    v = t - 0.5 * (W @ t) + D * (W @ (W @ t))
    return np.concatenate((v, w))


def compose(a: Pose3, b: Pose3) -> Pose3:
    return Pose3._trusted(
        _quat_multiply(a.rotation, b.rotation),
        a.translation + a.rotation_matrix @ b.translation,
    )


def inverse(p: Pose3) -> Pose3:
    q = p.rotation
    return Pose3._trusted(
        np.array([q[0], -q[1], -q[2], -q[3]]),
        -(p.rotation_matrix.T @ p.translation),
    )


def between(a: Pose3, b: Pose3) -> Pose3:
    """Relative pose ``a^-1 * b``."""
    Rt = a.rotation_matrix.T
    qa = a.rotation
    return Pose3._trusted(
        _quat_multiply(np.array([qa[0], -qa[1], -qa[2], -qa[3]]), b.rotation),
        Rt @ (b.translation - a.translation),
    )


def slerp(q0: np.ndarray, q1: np.ndarray, t: float) -> np.ndarray:
    """Shortest-arc spherical interpolation of unit quaternions."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    d = float(q0 @ q1)
    if d < 0.0:
        q1, d = -q1, -d
    if d > 1.0 - 1e-12:
        return _normalized(q0 + t * (q1 - q0))
    omega = math.acos(min(d, 1.0))
    s = math.sin(omega)
    return _normalized((math.sin((1.0 - t) * omega) * q0 + math.sin(t * omega) * q1) / s)


def interpolate(a: Pose3, b: Pose3, t: float) -> Pose3:
    """Lerp on translation, slerp on rotation. ``t`` must lie in [0, 1]."""
    t = float(t)
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter {t} outside [0, 1]")
    if t == 0.0:
        return a
    if t == 1.0:
        return b
    return Pose3(
        slerp(a.rotation, b.rotation, t),
        (1.0 - t) * a.translation + t * b.translation,
    )


def adjoint(p: Pose3) -> np.ndarray:
    """6x6 adjoint for translation-first twists."""
    R = p.rotation_matrix
    Ad = np.zeros((6, 6))
    Ad[:3, :3] = R
    Ad[:3, 3:] = skew(p.translation) @ R
    Ad[3:, 3:] = R
    return Ad


def _so3_left_jacobian_inverse(w: np.ndarray) -> np.ndarray:
    theta = math.sqrt(float(w @ w))
    W = skew(w)
    if theta < JACOBIAN_SMALL_ANGLE:
        t2 = theta * theta
        c = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        half = 0.5 * theta
        c = (1.0 - half / math.tan(half)) / (theta * theta)
    return np.eye(3) - 0.5 * W + c * (W @ W)


def _q_block(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Off-diagonal block of the SE(3) left Jacobian."""
    theta = math.sqrt(float(w @ w))
    V = skew(v)
    W = skew(w)
    WV = W @ V
    VW = V @ W
    WVW = WV @ W
    if theta < JACOBIAN_SMALL_ANGLE:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c3 = 1.0 / 120.0 - t2 / 2520.0 + t2 * t2 / 120960.0
    else:
        t2 = theta * theta
        s, c = math.sin(theta), math.cos(theta)
        c1 = (theta - s) / (t2 * theta)
        c2 = (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2)
        c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta)
    return (
        0.5 * V
        + c1 * (WV + VW + WVW)
        + c2 * (W @ WV + VW @ W - 3.0 * WVW)
        + c3 * (WVW @ W + W @ WVW)
    )


def right_jacobian_inverse(xi) -> np.ndarray:
    """Inverse right Jacobian: ``log(exp(xi) exp(d)) ~= xi + Jr^-1(xi) d``."""
    xi = -np.asarray(xi, dtype=float)
    v, w = xi[:3], xi[3:]
    Jinv = _so3_left_jacobian_inverse(w)
    Q = _q_block(v, w)
    out = np.zeros((6, 6))
    out[:3, :3] = Jinv
    out[:3, 3:] = -Jinv @ Q @ Jinv
    out[3:, 3:] = Jinv
    return out


def hat(xi) -> np.ndarray:
    """4x4 matrix form of a twist."""
    xi = np.asarray(xi, dtype=float)
    M = np.zeros((4, 4))
    M[:3, :3] = skew(xi[3:])
    M[:3, 3] = xi[:3]
    return M


def rot_z(angle: float, translation=(0.0, 0.0, 0.0)) -> Pose3:
    return Pose3((math.cos(0.5 * angle), 0.0, 0.0, math.sin(0.5 * angle)), translation)


def trans(x: float, y: float, z: float) -> Pose3:
    return Pose3(translation=(x, y, z))
