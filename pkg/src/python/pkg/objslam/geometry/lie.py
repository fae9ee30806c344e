"""Rigid-body transforms on SE(3) and their exponential coordinates.

Rotations are stored as orthonormal 3x3 matrices; twists appear only where an
optimizer needs a vector space. Twist vectors are ordered rotation first:

    xi = [omega_x, omega_y, omega_z, v_x, v_y, v_z]

Jacobian conventions follow right-multiplicative perturbations, T <- T * exp(delta).
The SE(3) Jacobian blocks use the closed forms in Barfoot, "State Estimation for
Robotics" (2017), reordered for rotation-first twists.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Union

import numpy as np

from objslam.errors import AngleAtPi

__all__ = [
    "ORTHONORMAL_TOL",
    "Pose3",
    "Twist6",
    "adjoint",
    "compose",
    "inverse",
    "relative_pose",
    "rot_x",
    "rot_y",
    "rot_z",
    "se3_exp",
    "se3_left_jacobian_inv",
    "se3_log",
    "se3_right_jacobian_inv",
    "skew",
    "so3_exp",
    "so3_left_jacobian",
    "so3_left_jacobian_inv",
    "so3_log",
    "twist_exp",
    "twist_log",
]

# ------- Constants ------- #
# Tolerance on |R^T R - I| and |det R - 1| for a valid Pose3
ORTHONORMAL_TOL: float = 1e-9

# Below this angle the trig coefficients switch to their Taylor series
SMALL_ANGLE: float = 1e-2

# A logarithm closer than this to pi is ambiguous
PI_MARGIN: float = 1e-6

# Above this angle the axis is taken from the symmetric part of R
NEAR_PI: float = math.pi - 1e-3

_I3 = np.eye(3)


# ------- Value types ------- #


@dataclass(frozen=True, eq=False)
class Pose3:
    """Rigid transform x -> R x + t.

    Robot states are world->camera transforms, object states object->world.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("Pose3 entries must be finite")
        ortho = np.linalg.norm(r.T @ r - _I3)
        det = np.linalg.det(r)
        if ortho > ORTHONORMAL_TOL or abs(det - 1.0) > ORTHONORMAL_TOL:
            raise ValueError(
                f"rotation is not in SO(3): |RtR - I| = {ortho:.3e}, det = {det:.12f}"
            )
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose3":
        return cls(_I3, np.zeros(3))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose3":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_translation(cls, t: Iterable[float]) -> "Pose3":
        return cls(_I3, np.asarray(list(t), dtype=float))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose3") -> "Pose3":
        """self * other: apply other first, then self."""
        return Pose3(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "Pose3") -> "Pose3":
        return self.compose(other)

    def inverse(self) -> "Pose3":
        rt = self.rotation.T
        return Pose3(rt, -rt @ self.translation)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map a 3-vector or an (N, 3) array of points."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def center(self) -> np.ndarray:
        """Origin of the target frame expressed in the source frame (-R^T t)."""
        return -self.rotation.T @ self.translation

    def allclose(self, other: "Pose3", atol: float = 1e-9) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        omega = so3_log(self.rotation, strict=False)
        return (
            f"Pose3(omega={np.array2string(omega, precision=4)}, "
            f"t={np.array2string(self.translation, precision=4)})"
        )


@dataclass(frozen=True, eq=False)
class Twist6:
    """Element of se(3): rotational part omega (rad), translational part v (m)."""

    omega: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega", np.array(self.omega, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.array(self.v, dtype=float).reshape(3))

    @classmethod
    def from_vector(cls, xi: Iterable[float]) -> "Twist6":
        xi = np.asarray(list(xi), dtype=float).reshape(6)
        return cls(xi[:3], xi[3:])

    @classmethod
    def zero(cls) -> "Twist6":
        return cls(np.zeros(3), np.zeros(3))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.omega, self.v])


TwistLike = Union[Twist6, np.ndarray, Iterable[float]]


# ------- so(3) ------- #


def skew(v: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix of a 3-vector (hat operator)."""
    x, y, z = np.asarray(v, dtype=float).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def _sin_over(theta: float) -> float:
    """sin(theta) / theta"""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 - t2 / 6.0 + t2 * t2 / 120.0
    return math.sin(theta) / theta


def _one_minus_cos_over(theta: float) -> float:
    """(1 - cos(theta)) / theta^2"""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 0.5 - t2 / 24.0 + t2 * t2 / 720.0
    return (1.0 - math.cos(theta)) / (theta * theta)


def _theta_minus_sin_over(theta: float) -> float:
    """(theta - sin(theta)) / theta^3"""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    return (theta - math.sin(theta)) / theta ** 3


def _inv_jacobian_coeff(theta: float) -> float:
    """(1 - (theta/2) cot(theta/2)) / theta^2"""
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    half = 0.5 * theta
    return (1.0 - half / math.tan(half)) / (theta * theta)


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues' formula."""
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    return _I3 + _sin_over(theta) * k + _one_minus_cos_over(theta) * (k @ k)


def so3_log(r: np.ndarray, strict: bool = True) -> np.ndarray:
    """Rotation vector of a rotation matrix.

    Args:
        r (ndarray): 3x3 rotation
        strict (bool): raise AngleAtPi within PI_MARGIN of pi instead of
            picking one of the two valid axes

    Returns:
        (ndarray) rotation vector with norm in [0, pi]
    """
    r = np.asarray(r, dtype=float)
    w = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    sin_theta = float(np.linalg.norm(w))
    cos_theta = 0.5 * (float(np.trace(r)) - 1.0)
    theta = math.atan2(sin_theta, cos_theta)

    if strict and math.pi - theta < PI_MARGIN:
        raise AngleAtPi(f"rotation angle {theta:.9f} is within {PI_MARGIN} of pi")

    if theta < NEAR_PI:
        return w / _sin_over(theta)

    # Near pi: axis from the symmetric part, R + R^T = 2cI + 2(1 - c) a a^T
    sym = 0.5 * (r + r.T) - cos_theta * _I3
    col = int(np.argmax(np.diag(sym)))
    axis = sym[:, col] / math.sqrt(max(sym[col, col], 1e-300))
    axis /= np.linalg.norm(axis)
    if axis @ w < 0.0:
        axis = -axis
    return theta * axis


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    return _I3 + _one_minus_cos_over(theta) * k + _theta_minus_sin_over(theta) * (k @ k)


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float).reshape(3)
    theta = float(np.linalg.norm(phi))
    k = skew(phi)
    return _I3 - 0.5 * k + _inv_jacobian_coeff(theta) * (k @ k)


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


# ------- SE(3) ------- #


def compose(a: Pose3, b: Pose3) -> Pose3:
    """a * b, transforming points by b first and then a."""
    return a.compose(b)


def inverse(t: Pose3) -> Pose3:
    return t.inverse()


def relative_pose(i: Pose3, j: Pose3) -> Pose3:
    """T_ij = T_j * T_i^-1: camera frame i expressed in camera frame j."""
    return j.compose(i.inverse())


def _twist_vector(x: TwistLike) -> np.ndarray:
    if isinstance(x, Twist6):
        return x.as_vector()
    return np.asarray(x, dtype=float).reshape(6)


def twist_exp(xi: np.ndarray) -> Pose3:
    """Exponential map on a rotation-first 6-vector."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    phi, rho = xi[:3], xi[3:]
    return Pose3(so3_exp(phi), so3_left_jacobian(phi) @ rho)


def twist_log(t: Pose3, strict: bool = False) -> np.ndarray:
    """Logarithm map returning a rotation-first 6-vector."""
    phi = so3_log(t.rotation, strict=strict)
    return np.concatenate([phi, so3_left_jacobian_inv(phi) @ t.translation])


def se3_exp(x: TwistLike) -> Pose3:
    """Exponential map se(3) -> SE(3), translation coupled through the left Jacobian."""
    return twist_exp(_twist_vector(x))


def se3_log(t: Pose3) -> Twist6:
    """Logarithm map SE(3) -> se(3).

    Raises:
        AngleAtPi: rotation angle within 1e-6 of pi
    """
    return Twist6.from_vector(twist_log(t, strict=True))


def adjoint(t: Pose3) -> np.ndarray:
    """Ad_T with T exp(d) T^-1 = exp(Ad_T d) for rotation-first twists."""
    r = t.rotation
    ad = np.zeros((6, 6))
    ad[:3, :3] = r
    ad[3:, 3:] = r
    ad[3:, :3] = skew(t.translation) @ r
    return ad


def _q_block(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Translational coupling block Q(rho, phi) of the SE(3) left Jacobian."""
    theta = float(np.linalg.norm(phi))
    p = skew(phi)
    r = skew(rho)
    pr = p @ r
    rp = r @ p
    prp = pr @ p
    pp = p @ p

    if theta < SMALL_ANGLE:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0
        c3 = 1.0 / 120.0 - t2 / 2520.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        c1 = (theta - s) / theta ** 3
        c2 = (theta * theta + 2.0 * c - 2.0) / (2.0 * theta ** 4)
        c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta ** 5)

    return (
        0.5 * r
        + c1 * (pr + rp + prp)
        + c2 * (pp @ r + rp @ p - 3.0 * prp)
        + c3 * (prp @ p + p @ prp)
    )


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float).reshape(6)
    phi, rho = xi[:3], xi[3:]
    j_inv = so3_left_jacobian_inv(phi)
    q = _q_block(rho, phi)
    out = np.zeros((6, 6))
    out[:3, :3] = j_inv
    out[3:, 3:] = j_inv
    out[3:, :3] = -j_inv @ q @ j_inv
    return out


def se3_right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    """Jr^-1 with Log(exp(xi) exp(d)) ~ xi + Jr^-1(xi) d."""
    return se3_left_jacobian_inv(-np.asarray(xi, dtype=float))
