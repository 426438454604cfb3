"""Quaternion and small-rotation helpers.

Quaternions are scalar-first [w, x, y, z] and map body vectors into the
terrain frame.
"""

from __future__ import annotations

import numpy as np

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


def quat_multiply(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Hamilton product q*r."""
    qw, qx, qy, qz = q
    rw, rx, ry, rz = r
    return np.array(
        [
            qw * rw - qx * rx - qy * ry - qz * rz,
            qw * rx + qx * rw + qy * rz - qz * ry,
            qw * ry - qx * rz + qy * rw + qz * rx,
            qw * rz + qx * ry - qy * rx + qz * rw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    return q / np.linalg.norm(q)


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a body-frame vector into the terrain frame."""
    w = q[0]
    u = q[1:]
    # v' = v + 2w (u x v) + 2 u x (u x v)
    t = 2.0 * np.cross(u, v)
    return v + w * t + np.cross(u, t)


def quat_rotate_inverse(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a terrain-frame vector into the body frame."""
    return quat_rotate(quat_conjugate(q), v)


def quat_derivative(q: np.ndarray, omega_body: np.ndarray) -> np.ndarray:
    """qdot = 0.5 * q * [0, omega]."""
    return 0.5 * quat_multiply(q, np.array([0.0, *omega_body]))


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    """Quaternion for a rotation vector (axis * angle, rad)."""
    angle = np.linalg.norm(phi)
    if angle < 1e-12:
        return quat_normalize(np.array([1.0, 0.5 * phi[0], 0.5 * phi[1], 0.5 * phi[2]]))
    axis = phi / angle
    half = 0.5 * angle
    return np.array([np.cos(half), *(np.sin(half) * axis)])


def rotvec_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation vector of a quaternion (inverse of quat_from_rotvec)."""
    qn = q if q[0] >= 0.0 else -q  # shortest rotation
    sin_half = np.linalg.norm(qn[1:])
    if sin_half < 1e-12:
        return 2.0 * qn[1:]
    angle = 2.0 * np.arctan2(sin_half, qn[0])
    return angle * qn[1:] / sin_half


def quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Intrinsic z-y-x Euler angles (rad) to quaternion."""
    qz = quat_from_rotvec(np.array([0.0, 0.0, yaw]))
    qy = quat_from_rotvec(np.array([0.0, pitch, 0.0]))
    qx = quat_from_rotvec(np.array([roll, 0.0, 0.0]))
    return quat_multiply(quat_multiply(qz, qy), qx)


def attitude_error_vector(q_cmd: np.ndarray, q_est: np.ndarray) -> np.ndarray:
    """Small-rotation error (body frame, rad) taking q_est to q_cmd."""
    q_err = quat_multiply(quat_conjugate(q_est), q_cmd)
    return rotvec_from_quat(q_err)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )
