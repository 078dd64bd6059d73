"""Planar pose machinery: homography estimation (normalized DLT),
infinitesimal plane-based pose with two-solution disambiguation,
best-pattern selection, relative pose error, the AX = YB calibration
solver, and fixed-tip projection error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CheiralityFailure, Degenerate, InsufficientExcitation, NoSolution
from .geometry import (
    CameraIntrinsics,
    Homography,
    Pose,
    axis_angle_from_rotation,
    compose,
    invert,
    project,
    project_to_so3,
    rotation_about_axis,
)

AMBIGUITY_RATIO = 0.9


@dataclass
class PoseSolutionPair:
    """The two planar-pose candidates for one pattern, best first."""

    best: Pose
    alternate: Pose
    reproj_best: float
    reproj_alt: float

    def ambiguous(self, ratio: float = AMBIGUITY_RATIO) -> bool:
        if self.reproj_alt == 0.0:
            return True
        if not np.isfinite(self.reproj_alt):
            return False
        return self.reproj_best / self.reproj_alt > ratio


def _normalize_points(pts: np.ndarray):
    """Hartley normalization: zero centroid, mean distance sqrt(2)."""
    centroid = pts.mean(axis=0)
    scale = np.sqrt(2.0) / max(np.mean(np.linalg.norm(pts - centroid, axis=1)), 1e-12)
    t = np.array([[scale, 0.0, -scale * centroid[0]],
                  [0.0, scale, -scale * centroid[1]],
                  [0.0, 0.0, 1.0]])
    return (pts - centroid) * scale, t


def estimate_homography(pairs) -> Homography:
    """Normalized DLT from >= 4 (model 2-vector, image 2-vector) pairs.

    Exact (up to scale) for noiseless projective data; raises Degenerate
    when the system is rank-deficient, e.g. for collinear points.
    """
    model = np.asarray([p[0] for p in pairs], dtype=float)
    image = np.asarray([p[1] for p in pairs], dtype=float)
    if len(model) < 4:
        raise Degenerate("need at least 4 correspondences")
    mn, tm = _normalize_points(model)
    im, ti = _normalize_points(image)
    a = np.zeros((2 * len(mn), 9))
    for k, ((x, y), (u, v)) in enumerate(zip(mn, im)):
        a[2 * k] = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]
        a[2 * k + 1] = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]
    _, s, vt = np.linalg.svd(a)
    if len(s) < 9 or s[-2] < 1e-9 * s[0]:
        raise Degenerate("correspondences are degenerate (rank < 8)")
    h_norm = vt[-1].reshape(3, 3)
    h = np.linalg.inv(ti) @ h_norm @ tm
    if abs(h[2, 2]) < 1e-12:
        raise Degenerate("homography cannot be normalized")
    return Homography.from_matrix(h)


def _rotation_to_bearing(v: np.ndarray) -> np.ndarray:
    """Rotation taking the optical axis (0,0,1) to bearing [v; 1]."""
    d = np.array([v[0], v[1], 1.0])
    d /= np.linalg.norm(d)
    axis = np.array([-d[1], d[0], 0.0])
    if np.linalg.norm(axis) < 1e-15:
        return np.eye(3)
    return rotation_about_axis(axis, np.arccos(np.clip(d[2], -1.0, 1.0)))


def _estimate_translation(rotated: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Least-squares translation given rotated model points and
    normalized image points q (perspective equations linear in t)."""
    n = len(q)
    a = np.zeros((2 * n, 3))
    b = np.zeros(2 * n)
    a[0::2, 0] = 1.0
    a[0::2, 2] = -q[:, 0]
    a[1::2, 1] = 1.0
    a[1::2, 2] = -q[:, 1]
    b[0::2] = q[:, 0] * rotated[:, 2] - rotated[:, 0]
    b[1::2] = q[:, 1] * rotated[:, 2] - rotated[:, 1]
    t, *_ = np.linalg.lstsq(a, b, rcond=None)
    return t


def _reprojection_rms(intr: CameraIntrinsics, pose: Pose, model3: np.ndarray,
                      image_px: np.ndarray) -> float:
    cam = pose.apply(model3)
    if np.any(cam[:, 2] <= 0):
        return np.inf
    uv = project(intr, Pose.identity(), cam)
    return float(np.sqrt(np.mean(np.sum((uv - image_px) ** 2, axis=1))))


def _refine_pose(intr: CameraIntrinsics, pose: Pose, model3: np.ndarray,
                 image_px: np.ndarray, max_iter: int = 20, tol: float = 1e-10) -> Pose:
    """Gauss-Newton on pixel reprojection over a local se(3) update."""

    def residual(params):
        r = rotation_about_axis(params[:3], np.linalg.norm(params[:3])) @ pose.rotation
        t = pose.translation + params[3:]
        cam = model3 @ r.T + t
        z = np.maximum(cam[:, 2], 1e-9)
        u = intr.fx * cam[:, 0] / z + intr.cx
        v = intr.fy * cam[:, 1] / z + intr.cy
        return np.concatenate([u - image_px[:, 0], v - image_px[:, 1]])

    params = np.zeros(6)
    for _ in range(max_iter):
        r0 = residual(params)
        jac = np.zeros((len(r0), 6))
        eps = 1e-7
        for k in range(6):
            dp = params.copy()
            dp[k] += eps
            jac[:, k] = (residual(dp) - r0) / eps
        step, *_ = np.linalg.lstsq(jac, -r0, rcond=None)
        params += step
        if np.linalg.norm(step) < tol:
            break
    rot = rotation_about_axis(params[:3], np.linalg.norm(params[:3])) @ pose.rotation
    return Pose(project_to_so3(rot), pose.translation + params[3:], check=False)


def ippe_pose(intrinsics: CameraIntrinsics, model, image) -> PoseSolutionPair:
    """Planar pose from >= 4 coplanar model points (Z = 0) and their
    pixel projections.

    The homography between the centered model plane and normalized image
    coordinates is expanded to first order at the model centroid, which
    yields exactly two rotation candidates; each gets a least-squares
    translation, a cheirality check, and a pixel reprojection RMS.  When
    the two candidates are ambiguous (RMS ratio > 0.9) both are polished
    with a few Gauss-Newton steps before the final ordering.
    """
    model = np.asarray(model, dtype=float)
    if model.shape[1] == 2:
        model3 = np.column_stack([model, np.zeros(len(model))])
    else:
        model3 = model.copy()
        if np.max(np.abs(model3[:, 2])) > 1e-9:
            raise Degenerate("model points must lie in the Z=0 plane")
    image_px = np.asarray(image, dtype=float)
    if len(model3) != len(image_px) or len(model3) < 4:
        raise Degenerate("need >= 4 matched correspondences")

    centroid = model3.mean(axis=0)
    centered = model3[:, :2] - centroid[:2]
    q = np.column_stack([
        (image_px[:, 0] - intrinsics.cx) / intrinsics.fx,
        (image_px[:, 1] - intrinsics.cy) / intrinsics.fy,
    ])
    h = estimate_homography(list(zip(centered, q))).h

    v = np.array([h[0, 2], h[1, 2]])
    jac = np.array([
        [h[0, 0] - h[2, 0] * h[0, 2], h[0, 1] - h[2, 1] * h[0, 2]],
        [h[1, 0] - h[2, 0] * h[1, 2], h[1, 1] - h[2, 1] * h[1, 2]],
    ])
    rv = _rotation_to_bearing(v)
    b = (np.array([[1.0, 0.0, -v[0]], [0.0, 1.0, -v[1]]]) @ rv)[:, :2]
    det = b[0, 0] * b[1, 1] - b[0, 1] * b[1, 0]
    if abs(det) < 1e-15:
        raise Degenerate("singular first-order system")
    binv = np.array([[b[1, 1], -b[0, 1]], [-b[1, 0], b[0, 0]]]) / det
    a = binv @ jac
    aat = a @ a.T
    gamma = np.sqrt(0.5 * (aat[0, 0] + aat[1, 1]
                           + np.sqrt((aat[0, 0] - aat[1, 1]) ** 2 + 4.0 * aat[0, 1] ** 2)))
    if gamma < 1e-15:
        raise Degenerate("degenerate plane scale")
    r22 = a / gamma
    hh = np.eye(2) - r22.T @ r22
    bb = np.sqrt(np.clip(np.diag(hh), 0.0, None))
    if hh[0, 1] < 0:
        bb = np.array([bb[0], -bb[1]])

    candidates = []
    for sign in (1.0, -1.0):
        c1 = np.array([r22[0, 0], r22[1, 0], sign * bb[0]])
        c2 = np.array([r22[0, 1], r22[1, 1], sign * bb[1]])
        rot = project_to_so3(rv @ np.column_stack([c1, c2, np.cross(c1, c2)]))
        rotated = centered @ rot[:, :2].T
        t = _estimate_translation(rotated, q)
        # de-center: cam = R (x - centroid) + t  =>  t_full = t - R centroid
        pose = Pose(rot, t - rot[:, :2] @ centroid[:2], check=False)
        rms = _reprojection_rms(intrinsics, pose, model3, image_px)
        candidates.append((rms, pose))

    if all(not np.isfinite(rms) for rms, _ in candidates):
        raise CheiralityFailure("no candidate places the model in front of the camera")
    candidates.sort(key=lambda c: c[0])
    (rms0, pose0), (rms1, pose1) = candidates
    pair = PoseSolutionPair(pose0, pose1, rms0, rms1)
    if pair.ambiguous() and np.isfinite(rms1):
        refined = []
        for rms, p in candidates:
            rp = _refine_pose(intrinsics, p, model3, image_px)
            refined.append((_reprojection_rms(intrinsics, rp, model3, image_px), rp))
        refined.sort(key=lambda c: c[0])
        pair = PoseSolutionPair(refined[0][1], refined[1][1], refined[0][0], refined[1][0])
    return pair


def select_pose(dots_solution: PoseSolutionPair | None,
                vertices_solution: PoseSolutionPair | None) -> tuple[Pose, float]:
    """Pick the pose with the globally smallest reprojection RMS among
    the up-to-four candidates of both patterns."""
    candidates = []
    for pair in (dots_solution, vertices_solution):
        if pair is None:
            continue
        candidates.append((pair.reproj_best, pair.best))
        candidates.append((pair.reproj_alt, pair.alternate))
    candidates = [(r, p) for r, p in candidates if np.isfinite(r)]
    if not candidates:
        raise NoSolution("no pattern produced a pose")
    candidates.sort(key=lambda c: c[0])
    return candidates[0][1], candidates[0][0]


def relative_pose_error(gt_chain, estimated: Pose) -> tuple[float, float]:
    """Error of an estimated marker pose against a tracked-chain ground
    truth (T_O_L, T_S_O, T_S_M): the chain composed with the inverse
    estimate should be the identity.

    Returns (translation error as the norm of the relative translation
    in mm, rotation error as the axis-angle magnitude in degrees).
    """
    t_o_l, t_s_o, t_s_m = gt_chain
    rel = compose(compose(invert(t_s_m), invert(estimated)), compose(t_o_l, t_s_o))
    trans_err = float(np.linalg.norm(rel.translation))
    rot_err = float(np.degrees(np.linalg.norm(axis_angle_from_rotation(rel.rotation))))
    return trans_err, rot_err


def solve_axyb(pairs) -> tuple[Pose, Pose, float]:
    """Least-squares X, Y with A_i X = Y B_i over rigid transforms.

    Rotations come from the SVD null vector of the Kronecker-structured
    linear system and are projected to SO(3); translations follow from a
    linear solve.  Returns (X, Y, rms residual over the pairs).
    Needs >= 3 pairs whose rotation axes span 3D.
    """
    if len(pairs) < 3:
        raise InsufficientExcitation("need at least 3 pose pairs")
    axes = []
    for a, _ in pairs:
        aa = axis_angle_from_rotation(a.rotation)
        n = np.linalg.norm(aa)
        if n > 1e-10:
            axes.append(aa / n)
    if len(axes) == 0 or np.linalg.matrix_rank(np.asarray(axes), tol=1e-6) < 3:
        raise InsufficientExcitation("rotation axes do not span 3D")

    # row-major vec: vec(A X) = (A kron I) vec(X), vec(Y B) = (I kron B^T) vec(Y)
    eye3 = np.eye(3)
    m = np.zeros((9 * len(pairs), 18))
    for i, (a, b) in enumerate(pairs):
        m[9 * i:9 * i + 9, :9] = np.kron(a.rotation, eye3)
        m[9 * i:9 * i + 9, 9:] = -np.kron(eye3, b.rotation.T)
    _, _, vt = np.linalg.svd(m)
    z = vt[-1]
    rx_raw = z[:9].reshape(3, 3)
    ry_raw = z[9:].reshape(3, 3)
    if np.linalg.det(rx_raw) < 0:
        rx_raw, ry_raw = -rx_raw, -ry_raw
    rx = project_to_so3(rx_raw)
    ry = project_to_so3(ry_raw)

    a_lin = np.zeros((3 * len(pairs), 6))
    b_lin = np.zeros(3 * len(pairs))
    for i, (a, b) in enumerate(pairs):
        a_lin[3 * i:3 * i + 3, :3] = a.rotation
        a_lin[3 * i:3 * i + 3, 3:] = -eye3
        b_lin[3 * i:3 * i + 3] = ry @ b.translation - a.translation
    t_sol, *_ = np.linalg.lstsq(a_lin, b_lin, rcond=None)
    x = Pose(rx, t_sol[:3], check=False)
    y = Pose(ry, t_sol[3:], check=False)

    sq = 0.0
    for a, b in pairs:
        diff = compose(a, x).matrix() - compose(y, b).matrix()
        sq += float(np.sum(diff * diff))
    return x, y, float(np.sqrt(sq / len(pairs)))


def projection_error(tip_positions) -> tuple[float, float, float, float]:
    """Fixed-tip stability: distances between consecutive 3D tip
    estimates, summarized as (mean, std, max, min) in mm."""
    tips = np.asarray(tip_positions, dtype=float).reshape(-1, 3)
    if len(tips) < 2:
        raise Degenerate("need at least two tip positions")
    dists = np.linalg.norm(np.diff(tips, axis=0), axis=1)
    return float(dists.mean()), float(dists.std()), float(dists.max()), float(dists.min())
