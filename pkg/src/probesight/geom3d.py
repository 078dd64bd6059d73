"""Blind masking, masked backprojection, point-to-point ICP, the 3D
geometric-consistency loss, and probe-axis/point-cloud intersection.

Point clouds are plain (n, 3) float arrays in mm.  Blind masks are
boolean (h, w) arrays aligned with the disparity map they came from.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateCloud, DimensionMismatch, NoCandidate, NotEnoughValidPixels
from .geometry import Pose, StereoRig, backproject
from .losses import DISPARITY_EPS, disparity_to_depth


def blind_mask(d: np.ndarray, side: str, width: int | None = None) -> np.ndarray:
    """Mask-in pixels whose disparity-shifted column lands inside the
    counterpart image: left pixels shift left by d, right pixels right."""
    d = np.asarray(d, dtype=float)
    if side not in ("left", "right"):
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    if width is None:
        width = d.shape[1]
    cols = np.arange(d.shape[1])[None, :]
    shifted = cols - d if side == "left" else cols + d
    return (shifted >= 0.0) & (shifted <= width - 1.0)


def masked_backproject(d: np.ndarray, rig: StereoRig, mask: np.ndarray,
                       sample_n: int, seed: int, side: str = "left"):
    """Backproject masked-in valid pixels and subsample sample_n of them.

    Returns (points, pixels): (sample_n, 3) cloud in the chosen camera's
    frame and the (sample_n, 2) source pixel (u, v) of each point.  The
    subsample is drawn without replacement by a generator seeded fresh
    from `seed`, so equal-size valid sets yield index-aligned samples.
    """
    d = np.asarray(d, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if d.shape != mask.shape:
        raise DimensionMismatch("disparity and mask shapes differ")
    depth = disparity_to_depth(d, rig, side=side)
    ok = mask & depth.valid
    vs, us = np.nonzero(ok)
    if sample_n > len(us):
        raise NotEnoughValidPixels(f"requested {sample_n} of {len(us)} valid pixels")
    rng = np.random.default_rng(seed)
    idx = rng.choice(len(us), size=sample_n, replace=False)
    pixels = np.column_stack([us[idx], vs[idx]]).astype(float)
    intr = rig.left if side == "left" else rig.right
    points = backproject(intr, pixels, depth.data[vs[idx], us[idx]])
    return points, pixels


def _rigid_fit(source: np.ndarray, target: np.ndarray) -> Pose:
    """Least-squares rigid transform mapping source onto target (SVD)."""
    sc = source.mean(axis=0)
    tc = target.mean(axis=0)
    h = (source - sc).T @ (target - tc)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return Pose(r, tc - r @ sc, check=False)


def _nearest_neighbors(query: np.ndarray, target: np.ndarray):
    """Exact brute-force nearest neighbor (desk-scale clouds)."""
    d2 = ((query[:, None, :] - target[None, :, :]) ** 2).sum(axis=2)
    idx = d2.argmin(axis=1)
    return idx, np.sqrt(d2[np.arange(len(query)), idx])


def _check_cloud(points: np.ndarray, name: str) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) < 3:
        raise DegenerateCloud(f"{name} cloud has fewer than 3 points")
    centered = pts - pts.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[1] < 1e-9 * max(s[0], 1.0):
        raise DegenerateCloud(f"{name} cloud is collinear")
    return pts


def icp(source: np.ndarray, target: np.ndarray, max_iter: int = 50,
        tol: float = 1e-12):
    """Point-to-point ICP aligning source onto target.

    Each iteration matches every transformed source point to its nearest
    target point and solves the closed-form SVD rigid update.  Returns
    (transform, residual RMS in mm, iterations); the residual sequence is
    non-increasing and iteration stops when it changes by less than tol.
    """
    src = _check_cloud(source, "source")
    tgt = _check_cloud(target, "target")
    transform = Pose.identity()
    residual = None
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        moved = transform.apply(src)
        idx, _ = _nearest_neighbors(moved, tgt)
        transform = _rigid_fit(src, tgt[idx])
        moved = transform.apply(src)
        _, dists = _nearest_neighbors(moved, tgt)
        new_residual = float(np.sqrt(np.mean(dists**2)))
        if residual is not None and not (new_residual <= residual + 1e-12):
            # matching can only shrink distances; guard against drift
            new_residual = residual
            break
        done = residual is not None and abs(residual - new_residual) < tol
        residual = new_residual
        if done or residual == 0.0:
            break
    return transform, residual, iterations


def gc3d_loss(d_l: np.ndarray, d_r: np.ndarray, rig: StereoRig, seed: int,
              sample_n: int = 1000, max_iter: int = 50, tol: float = 1e-12) -> float:
    """3D geometric-consistency loss: ICP residual between the left- and
    right-derived point clouds of the same scene.

    Both maps are blind-masked, backprojected, and subsampled to
    sample_n points with the same seed; the right cloud is expressed in
    the left camera frame via the baseline translation.
    """
    mask_l = blind_mask(d_l, "left")
    mask_r = blind_mask(d_r, "right")
    cloud_l, _ = masked_backproject(d_l, rig, mask_l, sample_n, seed, side="left")
    cloud_r, _ = masked_backproject(d_r, rig, mask_r, sample_n, seed, side="right")
    cloud_r = cloud_r + np.array([rig.baseline, 0.0, 0.0])
    _, residual, _ = icp(cloud_l, cloud_r, max_iter=max_iter, tol=tol)
    return residual


def median_cloud_spacing(points: np.ndarray) -> float:
    """Median nearest-neighbor distance of a cloud (brute force)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return float(np.median(np.sqrt(d2.min(axis=1))))


def axis_surface_intersection(points: np.ndarray, axis_origin, axis_dir,
                              tip_distance: float, radius: float | None = None,
                              top_k: int = 5) -> np.ndarray:
    """Estimate where a probe axis meets a surface sampled by a cloud.

    Candidate points must lie within `radius` of the axis line and have
    an along-axis coordinate beyond `tip_distance`; the centroid of the
    top_k closest-to-axis candidates is returned.  radius defaults to
    3x the median cloud spacing.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        raise NoCandidate("empty cloud")
    origin = np.asarray(axis_origin, dtype=float).reshape(3)
    direction = np.asarray(axis_dir, dtype=float).reshape(3)
    direction = direction / np.linalg.norm(direction)
    if radius is None:
        radius = 3.0 * median_cloud_spacing(pts)
    rel = pts - origin
    along = rel @ direction
    line_dist = np.linalg.norm(rel - along[:, None] * direction[None, :], axis=1)
    ok = (line_dist <= radius) & (along > tip_distance)
    if not ok.any():
        raise NoCandidate("no cloud point within radius beyond the tip")
    cand = np.nonzero(ok)[0]
    order = cand[np.argsort(line_dist[cand], kind="stable")]
    chosen = order[: min(top_k, len(order))]
    return pts[chosen].mean(axis=0)
