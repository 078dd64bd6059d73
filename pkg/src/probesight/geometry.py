"""Camera model, rigid-transform algebra, homography algebra, and 2D PCA.

Conventions used throughout the package:
  - Camera frame: right-handed, x right, y down, z forward (into the scene).
  - Pixel coordinates are (u, v) with u horizontal; image arrays are
    indexed [v, u].
  - Stereo pairs are rectified with the right camera displaced by
    +baseline along x.  Disparity is horizontal and non-negative for the
    canonical maps: x_right = x_left - d.
  - Lengths in millimetres, angles in radians (degrees only at CLI
    boundaries).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NonPositiveDepth, PointAtInfinity

ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise DegenerateInput("focal lengths must be positive")
        if not (0 <= self.cx < self.width) or not (0 <= self.cy < self.height):
            raise DegenerateInput("principal point outside image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


@dataclass(frozen=True)
class StereoRig:
    left: CameraIntrinsics
    right: CameraIntrinsics
    baseline: float  # mm

    def __post_init__(self):
        if self.baseline <= 0:
            raise DegenerateInput("baseline must be positive")


class Pose:
    """Rigid transform: x_out = rotation @ x_in + translation."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: np.ndarray, translation: np.ndarray, check: bool = True):
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float).reshape(3)
        if check:
            err = np.abs(rotation.T @ rotation - np.eye(3)).max()
            if err > 1e-6 or abs(np.linalg.det(rotation) - 1.0) > 1e-6:
                raise DegenerateInput("rotation is not a proper rotation matrix")
        self.rotation = rotation
        self.translation = translation

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.eye(3), np.zeros(3), check=False)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (3,) point or an (n, 3) array of points."""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def __repr__(self):
        return f"Pose(t={self.translation.round(3)})"


def compose(a: Pose, b: Pose) -> Pose:
    """Pose applying b first, then a."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation, check=False)


def invert(a: Pose) -> Pose:
    rt = a.rotation.T
    return Pose(rt, -rt @ a.translation, check=False)


@dataclass
class Homography:
    """3x3 projective map, normalized so h[2, 2] == 1 when nonzero."""

    h: np.ndarray
    normalized: bool = True

    @staticmethod
    def from_matrix(m: np.ndarray) -> "Homography":
        m = np.asarray(m, dtype=float)
        if abs(m[2, 2]) > 1e-12:
            return Homography(m / m[2, 2], normalized=True)
        return Homography(m.copy(), normalized=False)

    def inverse(self) -> "Homography":
        return Homography.from_matrix(np.linalg.inv(self.h))


def project(intrinsics: CameraIntrinsics, pose: Pose, point3) -> np.ndarray:
    """Pinhole projection of one (3,) point or an (n, 3) array, in mm.

    Raises NonPositiveDepth if any transformed point has Z <= 0.
    """
    p = pose.apply(point3)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("point behind or on the camera plane")
    uv = np.empty((p.shape[0], 2))
    uv[:, 0] = intrinsics.fx * p[:, 0] / z + intrinsics.cx
    uv[:, 1] = intrinsics.fy * p[:, 1] / z + intrinsics.cy
    return uv[0] if single else uv


def backproject(intrinsics: CameraIntrinsics, pixel, depth) -> np.ndarray:
    """Inverse of project for identity pose: pixel + depth -> 3D point.

    Accepts one (2,) pixel with scalar depth, or (n, 2) pixels with (n,)
    depths.  Returned Z equals the given depth exactly.
    """
    pix = np.asarray(pixel, dtype=float)
    d = np.asarray(depth, dtype=float)
    if np.any(d <= 0):
        raise NonPositiveDepth("depth must be positive")
    single = pix.ndim == 1
    pix = np.atleast_2d(pix)
    d = np.atleast_1d(d)
    out = np.empty((pix.shape[0], 3))
    out[:, 0] = (pix[:, 0] - intrinsics.cx) * d / intrinsics.fx
    out[:, 1] = (pix[:, 1] - intrinsics.cy) * d / intrinsics.fy
    out[:, 2] = d
    return out[0] if single else out


def apply_homography(h: Homography, p) -> np.ndarray:
    """Apply a projective map to one (2,) point or an (n, 2) array."""
    pts = np.asarray(p, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    hom = np.column_stack([pts, np.ones(len(pts))]) @ h.h.T
    w = hom[:, 2]
    if np.any(np.abs(w) < 1e-12):
        raise PointAtInfinity("mapped point has (near-)zero homogeneous coordinate")
    out = hom[:, :2] / w[:, None]
    return out[0] if single else out


def pca_axis(points) -> tuple[np.ndarray, np.ndarray]:
    """Centroid and principal direction of a 2D point set.

    The direction is the unit eigenvector of the covariance with the
    largest eigenvalue, sign-fixed so direction.x >= 0 (ties broken with
    direction.y >= 0).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
        raise DegenerateInput("need at least two 2D points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    if np.max(np.abs(centered)) < 1e-12:
        raise DegenerateInput("all points coincide")
    cov = centered.T @ centered / len(pts)
    w, v = np.linalg.eigh(cov)
    direction = v[:, np.argmax(w)]
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = -direction
    return centroid, direction


# --- rotation helpers -------------------------------------------------------


def rotation_about_axis(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a (3,) axis (need not be unit)."""
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        return np.eye(3)
    k = axis / n
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(angle) * kx + (1 - np.cos(angle)) * (kx @ kx)


def axis_angle_from_rotation(r: np.ndarray) -> np.ndarray:
    """Axis-angle vector (axis * angle, radians) of a rotation matrix."""
    cos_t = np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(cos_t)
    if angle < 1e-12:
        return np.zeros(3)
    if np.pi - angle < 1e-6:
        # near 180 deg: axis from the symmetric part
        m = (r + np.eye(3)) / 2.0
        axis = np.sqrt(np.clip(np.diag(m), 0.0, None))
        # fix signs using off-diagonal terms
        if m[0, 1] < 0:
            axis[1] = -axis[1]
        if m[0, 2] < 0:
            axis[2] = -axis[2]
        if axis[0] == 0 and m[1, 2] < 0 and axis[1] > 0:
            axis[2] = -abs(axis[2])
        n = np.linalg.norm(axis)
        if n < 1e-12:
            return np.zeros(3)
        return axis / n * angle
    v = np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    return v / (2.0 * np.sin(angle)) * angle


def project_to_so3(m: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (Frobenius) to an arbitrary 3x3 matrix."""
    u, _, vt = np.linalg.svd(m)
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


# --- serialization ----------------------------------------------------------


def pose_to_text(pose: Pose) -> str:
    """12 whitespace-separated decimals, row-major 3x4 [R | t]."""
    m = np.column_stack([pose.rotation, pose.translation])
    return " ".join(repr(float(x)) for x in m.ravel())


def pose_from_text(text: str) -> Pose:
    vals = [float(tok) for tok in text.split()]
    if len(vals) != 12:
        raise DegenerateInput(f"expected 12 numbers, got {len(vals)}")
    m = np.array(vals).reshape(3, 4)
    return Pose(m[:, :3], m[:, 3])


def homography_to_text(h: Homography) -> str:
    return " ".join(repr(float(x)) for x in h.h.ravel())


def homography_from_text(text: str) -> Homography:
    vals = [float(tok) for tok in text.split()]
    if len(vals) != 9:
        raise DegenerateInput(f"expected 9 numbers, got {len(vals)}")
    return Homography.from_matrix(np.array(vals).reshape(3, 3))
