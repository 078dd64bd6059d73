"""Structured-light ground-truth depth: gray-code patterns with inverses,
3-phase modulation-depth uncertainty masking, and camera/projector
ray-plane triangulation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, NonConvergingRays
from .geometry import CameraIntrinsics, Pose
from .losses import DepthMap

MIN_RAY_PLANE_ANGLE = np.deg2rad(0.5)


def gray_encode(c):
    c = np.asarray(c, dtype=np.int64)
    return c ^ (c >> 1)


def gray_decode(g):
    g = np.asarray(g, dtype=np.int64)
    out = g.copy()
    shift = 1
    while shift < 64:
        out = out ^ (out >> shift)
        shift *= 2
    return out


@dataclass
class PatternStack:
    """Gray-code pattern/inverse image pairs plus exactly three
    phase-shifted images (shifts 0, pi/3, 2pi/3)."""

    gray_bits: list  # [(pattern, inverse)] one pair per bit, LSB first
    phase_images: list = field(default_factory=list)  # [I1, I2, I3]
    n_bits: int = 0

    def __post_init__(self):
        if self.n_bits == 0:
            self.n_bits = len(self.gray_bits)
        if self.n_bits != len(self.gray_bits):
            raise DimensionMismatch("n_bits must match the pattern count")
        shapes = {im.shape for pair in self.gray_bits for im in pair}
        shapes |= {im.shape for im in self.phase_images}
        if len(shapes) > 1:
            raise DimensionMismatch("all stack images must share dimensions")


def generate_patterns(proj_width: int, n_bits: int, height: int = 1) -> PatternStack:
    """Binary gray-code column patterns and their complements.

    Column c of bit-k pattern is lit iff bit k of gray(c) is set, with
    gray(c) = c XOR (c >> 1).  Requires 2**n_bits >= proj_width.
    """
    if 2**n_bits < proj_width:
        raise ValueError("2**n_bits must cover the projector width")
    codes = gray_encode(np.arange(proj_width))
    pairs = []
    for k in range(n_bits):
        row = ((codes >> k) & 1).astype(float)
        pattern = np.tile(row, (height, 1))
        pairs.append((pattern, 1.0 - pattern))
    return PatternStack(pairs, [], n_bits)


def decode_gray(stack: PatternStack, threshold_margin: float = 0.05):
    """Per-pixel projector column from pattern/inverse pairs.

    A bit is 1 when pattern > inverse + margin, 0 when inverse is larger
    by the margin, and undecidable otherwise, which masks the pixel out.
    Returns (column map int64, confidence mask).
    """
    shape = stack.gray_bits[0][0].shape
    gray = np.zeros(shape, dtype=np.int64)
    confident = np.ones(shape, dtype=bool)
    for k, (pattern, inverse) in enumerate(stack.gray_bits):
        diff = pattern - inverse
        confident &= np.abs(diff) > threshold_margin
        gray |= (diff > 0).astype(np.int64) << k
    column = gray_decode(gray)
    column[~confident] = 0
    return column, confident


def modulation_depth(i1: np.ndarray, i2: np.ndarray, i3: np.ndarray) -> np.ndarray:
    """Per-pixel modulation depth of the 3-phase signal:
    (2*sqrt(2)/3) * sqrt((I1-I2)^2 + (I2-I3)^2 + (I1-I3)^2)."""
    i1 = np.asarray(i1, dtype=float)
    i2 = np.asarray(i2, dtype=float)
    i3 = np.asarray(i3, dtype=float)
    if i1.shape != i2.shape or i2.shape != i3.shape:
        raise DimensionMismatch("phase images must share dimensions")
    return (2.0 * np.sqrt(2.0) / 3.0) * np.sqrt(
        (i1 - i2) ** 2 + (i2 - i3) ** 2 + (i1 - i3) ** 2
    )


def uncertainty_mask(t: np.ndarray, threshold: float) -> np.ndarray:
    """Mask-in pixels whose modulation depth reaches the threshold."""
    return np.asarray(t, dtype=float) >= threshold


def triangulate(column_map: np.ndarray, confidence: np.ndarray,
                camera: CameraIntrinsics, projector: CameraIntrinsics,
                projector_pose: Pose) -> DepthMap:
    """Ray-plane triangulation of decoded projector columns.

    Each camera pixel ray is intersected with the projector plane of its
    decoded column (taken at the column center c + 0.5).  projector_pose
    maps projector coordinates into the camera frame.  Confident pixels
    whose ray meets the plane at under 0.5 degrees raise
    NonConvergingRays; masked pixels come back invalid.
    """
    column_map = np.asarray(column_map)
    confidence = np.asarray(confidence, dtype=bool)
    if column_map.shape != confidence.shape:
        raise DimensionMismatch("column map and confidence mask differ")
    h, w = column_map.shape
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    rays = np.stack(
        [(us - camera.cx) / camera.fx, (vs - camera.cy) / camera.fy, np.ones_like(us)],
        axis=-1,
    )
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    # projector column c: plane fx*X - (c - cx)*Z = 0 in projector frame
    c_centered = column_map.astype(float) + 0.5 - projector.cx
    normals_p = np.stack(
        [np.full_like(us, projector.fx), np.zeros_like(us), -c_centered], axis=-1
    )
    normals = normals_p @ projector_pose.rotation.T
    normals_unit = normals / np.linalg.norm(normals, axis=-1, keepdims=True)
    denom = (rays * normals_unit).sum(axis=-1)
    offset = normals_unit @ projector_pose.translation
    grazing = confidence & (np.abs(denom) < np.sin(MIN_RAY_PLANE_ANGLE))
    if grazing.any():
        raise NonConvergingRays("camera ray nearly parallel to projector plane")
    depth = np.zeros((h, w))
    ok = confidence & ~grazing
    t = np.where(ok, offset / np.where(denom == 0.0, 1.0, denom), 0.0)
    depth[ok] = (t * rays[..., 2])[ok]
    valid = ok & (depth > 0)
    depth[~valid] = 0.0
    return DepthMap(depth, valid)
