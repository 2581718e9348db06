"""Spherical camera model and coordinate transforms for equirectangular images.

Conventions:
  - Pixel: continuous coordinates (ix, iy); (0, 0) is the top-left corner of
    the top-left pixel, ix grows rightward, iy grows downward.
  - Geographic: longitude theta in [-pi, pi), latitude phi in [-pi/2, pi/2].
  - Sphere: unit Cartesian (x, y, z) = (cos_phi*sin_theta, -sin_phi,
    cos_phi*cos_theta); +Z is the optical axis (theta = phi = 0), +X is the
    equator quarter turn to the right, -Y points at the +latitude pole.
  - Pose: world-to-camera, P_cam = R @ P_world + t.

All coordinate functions accept single coordinates of shape (2,)/(3,) or
batches of shape (..., 2)/(..., 3) and return matching shapes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ProjectionAtCenter

# Smallest camera-to-point distance before the projection is undefined.
EPS_DEPTH = 1e-12


class ImageDims(NamedTuple):
    """Raster size in pixels."""

    width: int
    height: int

    def validate(self) -> "ImageDims":
        if self.width < 2 or self.height < 1:
            raise ValueError(f"invalid image dims {self.width}x{self.height}")
        if self.width != 2 * self.height:
            warnings.warn(
                f"non-standard ERP aspect {self.width}x{self.height} "
                "(expected width = 2*height)",
                stacklevel=2,
            )
        return self


@dataclass(frozen=True)
class Intrinsics:
    """Unit-sphere camera intrinsics: focal length fixed at 1, principal
    point at the raster center."""

    dims: ImageDims

    f: float = field(default=1.0, init=False)

    @property
    def cx(self) -> float:
        return self.dims.width / 2.0

    @property
    def cy(self) -> float:
        return self.dims.height / 2.0


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform: P_cam = R @ P_world + t."""

    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=np.float64)
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if R.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {R.shape}")
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise ValueError("pose contains non-finite values")
        if np.max(np.abs(R.T @ R - np.eye(3))) > 1e-10:
            raise ValueError("rotation is not orthonormal within 1e-10")
        if abs(np.linalg.det(R) - 1.0) > 1e-10:
            raise ValueError("rotation determinant differs from +1")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def center(self) -> np.ndarray:
        """Camera projection center in world coordinates, -R^T t."""
        return -self.R.T @ self.t

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map world points of shape (..., 3) into the camera frame."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.R.T + self.t


# ---------------------------------------------------------------------------
# Rotation helpers
# ---------------------------------------------------------------------------

def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix [v]_x such that [v]_x @ w = v x w."""
    x, y, z = np.asarray(v, dtype=np.float64).reshape(3)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rotation_from_axis_angle(w: np.ndarray) -> np.ndarray:
    """Exponential map: 3-vector (axis * angle) to rotation matrix."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    angle = np.linalg.norm(w)
    if angle < 1e-12:
        K = skew(w)
        return np.eye(3) + K + 0.5 * (K @ K)
    K = skew(w / angle)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


def rotation_angle(R: np.ndarray) -> float:
    """Rotation angle in radians of a rotation matrix."""
    c = (np.trace(R) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def rotation_geodesic(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic distance in radians between two rotations."""
    return rotation_angle(Ra @ Rb.T)


def rotation_to_quaternion(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (qw, qx, qy, qz), qw >= 0."""
    R = np.asarray(R, dtype=np.float64)
    tr = np.trace(R)
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q /= np.linalg.norm(q)
    # Canonical sign for deterministic serialization.
    if q[0] < 0 or (q[0] == 0 and q[np.argmax(np.abs(q))] < 0):
        q = -q
    return q


def quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    """Unit quaternion (qw, qx, qy, qz) to rotation matrix."""
    w, x, y, z = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.sqrt(w * w + x * x + y * y + z * z)
    w, x, y, z = w / n, x / n, y / n, z / n
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


# ---------------------------------------------------------------------------
# Imaging model
# ---------------------------------------------------------------------------

def _check_finite(a: np.ndarray, what: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite {what}")
    return a


def normalize_longitude(theta: np.ndarray) -> np.ndarray:
    """Reduce longitudes into the canonical range [-pi, pi)."""
    return np.mod(np.asarray(theta, dtype=np.float64) + np.pi, 2.0 * np.pi) - np.pi


def pixel_to_geo(pix: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """ERP pixel coordinates (..., 2) to geographic (theta, phi) (..., 2).

    theta = (ix - cx) * 2*pi / W, phi = (cy - iy) * pi / H, with theta wrapped
    into [-pi, pi) and phi clamped to [-pi/2, pi/2].
    """
    pix = _check_finite(pix, "pixel coordinate")
    W, H = intr.dims
    theta = (pix[..., 0] - intr.cx) * (2.0 * np.pi / W)
    phi = (intr.cy - pix[..., 1]) * (np.pi / H)
    theta = normalize_longitude(theta)
    phi = np.clip(phi, -np.pi / 2.0, np.pi / 2.0)
    return np.stack([theta, phi], axis=-1)


def geo_to_sphere(geo: np.ndarray) -> np.ndarray:
    """Geographic (theta, phi) (..., 2) to unit sphere points (..., 3)."""
    geo = _check_finite(geo, "geographic coordinate")
    theta, phi = geo[..., 0], geo[..., 1]
    cos_phi = np.cos(phi)
    return np.stack(
        [cos_phi * np.sin(theta), -np.sin(phi), cos_phi * np.cos(theta)],
        axis=-1,
    )


def sphere_to_geo(p: np.ndarray) -> np.ndarray:
    """Unit sphere points (..., 3) to geographic (theta, phi) (..., 2).

    At the poles (|phi| = pi/2) the longitude is undefined and set to 0.
    Raises ValueError for inputs farther than 1e-6 from unit norm.
    """
    p = _check_finite(p, "sphere point")
    norm = np.linalg.norm(p, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-6):
        raise ValueError("sphere point is not unit-norm within 1e-6")
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    phi = np.arcsin(np.clip(-y, -1.0, 1.0))
    theta = np.arctan2(x, z)
    # atan2(0, 0) at the poles already yields 0, but enforce it for points
    # with tiny numerical off-axis components.
    at_pole = np.hypot(x, z) < 1e-15
    theta = np.where(at_pole, 0.0, theta)
    return np.stack([normalize_longitude(theta), phi], axis=-1)


def geo_to_pixel(geo: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Geographic (theta, phi) (..., 2) to ERP pixel coordinates (..., 2)."""
    geo = _check_finite(geo, "geographic coordinate")
    W, H = intr.dims
    ix = intr.cx + geo[..., 0] * (W / (2.0 * np.pi))
    iy = intr.cy - geo[..., 1] * (H / np.pi)
    return np.stack([ix, iy], axis=-1)


def world_to_sphere(points: np.ndarray, pose: Pose) -> np.ndarray:
    """World points (..., 3) to unit observation directions on the camera
    sphere.

    Raises ProjectionAtCenter if any point coincides with the camera center.
    """
    pts = _check_finite(points, "world point")
    cam = pose.transform(pts)
    norm = np.linalg.norm(cam, axis=-1)
    if np.any(norm <= EPS_DEPTH):
        raise ProjectionAtCenter("world point at the camera projection center")
    return cam / norm[..., None]


def project_to_pixel(points: np.ndarray, pose: Pose, intr: Intrinsics) -> np.ndarray:
    """World points (..., 3) to ERP pixel coordinates (..., 2)."""
    return geo_to_pixel(sphere_to_geo(world_to_sphere(points, pose)), intr)


def wrap_pixel(pix: np.ndarray, dims: ImageDims) -> np.ndarray:
    """Wrap ix modulo the width into [0, W); clamp iy to [0, H]."""
    pix = np.asarray(pix, dtype=np.float64)
    ix = np.mod(pix[..., 0], float(dims.width))
    iy = np.clip(pix[..., 1], 0.0, float(dims.height))
    return np.stack([ix, iy], axis=-1)
