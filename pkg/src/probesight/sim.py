"""Deterministic synthetic scenes standing in for the clinical rig:
textured heightfield tissue, rectified stereo rendering with exact
ground-truth depth/disparity, a cylindrical probe carrying the
dual-pattern marker, laser-spot intersection ground truth, and
structured-light pattern rendering.

Everything is a pure function of (config, seeds); renders are
bit-reproducible.  The left camera sits at the origin looking down +z,
the right camera at +baseline on x.  The tissue surface is a heightfield
z = base + amplitude * noise(x, y) sampled by per-pixel ray bisection
(tolerance well below 1e-9 mm), so ground-truth channels carry no
interpolation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ProbeOutOfView
from .geometry import CameraIntrinsics, Pose, StereoRig, project, rotation_about_axis
from .losses import DepthMap
from .marker import (
    KIND_DOT,
    MarkerSpec,
    cylinder_lift,
    flatten_layout,
    surface_normal_local,
)
from .structlight import PatternStack, gray_encode

LASER_SIGMA_PX = 1.5
STRIPE_WIDTH = 3.0  # mm
BISECT_ITERS = 56


def default_rig(width: int = 128, height: int = 128, focal: float = 120.0,
                baseline: float = 8.0) -> StereoRig:
    intr = CameraIntrinsics(focal, focal, width / 2.0, height / 2.0, width, height)
    return StereoRig(intr, intr, baseline)


def default_projector(width: int = 1024, height: int = 8) -> CameraIntrinsics:
    return CameraIntrinsics(900.0, 900.0, width / 2.0, height / 2.0, width, height)


def default_projector_pose() -> Pose:
    # projector left of the camera, toed in toward the scene center
    rot = rotation_about_axis([0.0, 1.0, 0.0], np.deg2rad(-28.0))
    return Pose(rot, np.array([-42.0, 0.0, 6.0]))


@dataclass
class SceneConfig:
    rig: StereoRig = field(default_factory=default_rig)
    base_depth: float = 75.0
    amplitude: float = 4.0
    frequency: float = 2.0           # noise cells per 100 mm
    heightfield_seed: int = 0
    texture_seed: int = 100
    trajectory: list = field(default_factory=list)  # probe poses; empty = no probe
    laser: bool = False
    marker: MarkerSpec = field(default_factory=MarkerSpec.default)
    tip_extension: float = 16.0      # tip beyond the near end, mm
    tail_extension: float = 6.0
    projector: CameraIntrinsics = field(default_factory=default_projector)
    projector_pose: Pose = field(default_factory=default_projector_pose)
    sl_periods: int = 8
    supersample: int = 3

    def __post_init__(self):
        if self.rig.left.width * self.rig.left.height > 512 * 512:
            raise ValueError("desk-scale renders are capped at 512x512")


@dataclass
class MarkerFeatureGT:
    fid: int
    kind: str
    flat: np.ndarray      # (2,) mm on the flattened marker
    local: np.ndarray     # (3,) mm in the probe frame
    image: np.ndarray     # (2,) exact left-image projection


@dataclass
class FrameBundle:
    left: np.ndarray                 # (h, w, 3) in [0, 1]
    right: np.ndarray
    gt_disparity: np.ndarray         # left frame, px
    gt_disparity_right: np.ndarray
    gt_depth: DepthMap               # left frame, mm
    probe_mask: np.ndarray           # bool, left frame
    gt_probe_pose: Pose | None
    gt_intersection_2d: np.ndarray | None
    gt_intersection_3d: np.ndarray | None
    marker_features: list = field(default_factory=list)
    patterns: PatternStack | None = None
    sl_valid: np.ndarray | None = None   # projector-illuminated pixels
    albedo: np.ndarray | None = None     # grayscale albedo for SL frames


class ValueNoise2D:
    """Periodic value noise on an 8x8 lattice with smoothstep blending."""

    def __init__(self, seed: int, cell: float, n: int = 8):
        self.values = np.random.default_rng(seed).random((n, n))
        self.cell = cell
        self.n = n

    def __call__(self, x, y):
        gx = np.asarray(x, dtype=float) / self.cell
        gy = np.asarray(y, dtype=float) / self.cell
        ix = np.floor(gx).astype(int)
        iy = np.floor(gy).astype(int)
        fx = gx - ix
        fy = gy - iy
        wx = fx * fx * (3.0 - 2.0 * fx)
        wy = fy * fy * (3.0 - 2.0 * fy)
        i0 = np.mod(ix, self.n)
        i1 = np.mod(ix + 1, self.n)
        j0 = np.mod(iy, self.n)
        j1 = np.mod(iy + 1, self.n)
        v00 = self.values[j0, i0]
        v10 = self.values[j0, i1]
        v01 = self.values[j1, i0]
        v11 = self.values[j1, i1]
        return (v00 * (1 - wx) * (1 - wy) + v10 * wx * (1 - wy)
                + v01 * (1 - wx) * wy + v11 * wx * wy)


class Heightfield:
    def __init__(self, cfg: SceneConfig):
        self.base = cfg.base_depth
        self.amplitude = cfg.amplitude
        self.noise = ValueNoise2D(cfg.heightfield_seed, 100.0 / cfg.frequency)

    def __call__(self, x, y):
        return self.base + self.amplitude * self.noise(x, y)


class TissueTexture:
    """Multi-octave value noise mapped to a red-pink palette."""

    def __init__(self, seed: int):
        self.octaves = [
            (ValueNoise2D(seed, 24.0), 0.5),
            (ValueNoise2D(seed + 1, 12.0), 0.3),
            (ValueNoise2D(seed + 2, 6.0), 0.2),
        ]

    def scalar(self, x, y):
        return sum(w * n(x, y) for n, w in self.octaves)

    def color(self, x, y):
        t = self.scalar(x, y)
        return np.stack([0.55 + 0.35 * t, 0.25 + 0.20 * t, 0.30 + 0.15 * t], axis=-1)


def ray_heightfield(field, origin, dirs, iters: int = BISECT_ITERS):
    """First intersection parameter t of rays origin + t*dirs with the
    heightfield, by bisection (dirs z components must be positive)."""
    origin = np.asarray(origin, dtype=float)
    dirs = np.asarray(dirs, dtype=float)
    dz = dirs[..., 2]
    if np.any(dz <= 1e-6):
        raise ValueError("rays must advance toward the surface (dz > 0)")
    top = field.base + field.amplitude + 1.0
    t_lo = np.zeros(dirs.shape[:-1])
    t_hi = (top - origin[2]) / dz

    def f(t):
        px = origin[0] + t * dirs[..., 0]
        py = origin[1] + t * dirs[..., 1]
        pz = origin[2] + t * dirs[..., 2]
        return pz - field(px, py)

    for _ in range(iters):
        mid = 0.5 * (t_lo + t_hi)
        below = f(mid) < 0
        t_lo = np.where(below, mid, t_lo)
        t_hi = np.where(below, t_hi, mid)
    return 0.5 * (t_lo + t_hi)


# --- probe geometry -----------------------------------------------------------


def probe_axis(pose: Pose, spec: MarkerSpec):
    """(axis point, unit direction toward the tail) in camera frame."""
    point = pose.apply(np.array([0.0, 0.0, spec.radius]))
    direction = pose.rotation @ np.array([1.0, 0.0, 0.0])
    return point, direction


def probe_tip(pose: Pose, spec: MarkerSpec, tip_extension: float) -> np.ndarray:
    return pose.apply(np.array([-tip_extension, 0.0, spec.radius]))


def build_probe_pose(spec: MarkerSpec, tip_point, aim_dir, roll: float = 0.0,
                     tip_extension: float = 16.0) -> Pose:
    """Pose placing the probe tip at tip_point with the axis pointing
    along aim_dir (tip-ward) and the marker face rolled toward the
    camera at the origin, plus a roll offset about the axis."""
    tip_point = np.asarray(tip_point, dtype=float)
    aim = np.asarray(aim_dir, dtype=float)
    aim = aim / np.linalg.norm(aim)
    x_axis = -aim  # local +x runs tip -> tail
    center_guess = tip_point + (tip_extension + 0.5 * spec.axial_extent) * x_axis
    to_camera = -center_guess
    to_camera -= (to_camera @ x_axis) * x_axis
    n = np.linalg.norm(to_camera)
    if n < 1e-9:
        to_camera = np.array([0.0, -1.0, 0.0])
        n = 1.0
    n_des = to_camera / n
    col3 = -n_des                      # local +z maps away from the camera
    col1 = x_axis
    col2 = np.cross(col3, col1)
    rot = np.column_stack([col1, col2, col3])
    rot = rot @ rotation_about_axis([1.0, 0.0, 0.0], roll)
    translation = tip_point - rot @ np.array([-tip_extension, 0.0, spec.radius])
    return Pose(rot, translation)


def _marker_color(cfg: SceneConfig, x, y_flat):
    """Marker surface color at flattened local coordinates (vectorized)."""
    spec = cfg.marker
    x = np.asarray(x, dtype=float)
    y_flat = np.asarray(y_flat, dtype=float)
    shape = np.broadcast(x, y_flat).shape
    color = np.empty(shape + (3,))
    color[...] = (0.72, 0.70, 0.69)  # bare probe body

    pa = spec.pitch_axial
    pc = spec.pitch_circumferential
    length = spec.axial_extent
    half_band = 0.46 * pc

    in_marker = (x >= -pa) & (x <= length + pa)
    col = np.clip(np.floor((y_flat + np.pi * spec.radius) / pc), 0, spec.n_columns - 1)
    y_in = y_flat - (-np.pi * spec.radius + (col + 0.5) * pc)
    is_dot_col = (col.astype(int) % 2) == 0

    white = np.array([0.93, 0.92, 0.91])
    dark = np.array([0.07, 0.07, 0.08])
    color[in_marker] = white

    # circular dots
    k_near = np.clip(np.round(x / pa), 0, spec.n_rows - 1)
    dot_d2 = (x - k_near * pa) ** 2 + y_in**2
    dots = in_marker & is_dot_col & (dot_d2 <= spec.dot_radius**2)
    color[dots] = dark

    # checkerboard bands with crossings at the feature rows
    in_band = in_marker & ~is_dot_col & (np.abs(y_in) <= half_band) \
        & (x >= -pa) & (x <= length + pa)
    parity = (np.floor(x / pa).astype(int) + (y_in >= 0).astype(int)) % 2
    color[in_band & (parity == 0)] = dark

    # stripe ring at the asymmetry end
    if spec.stripe_end == "near_tip":
        stripe = (x >= -pa - STRIPE_WIDTH) & (x < -pa)
    else:
        stripe = (x > length + pa) & (x <= length + pa + STRIPE_WIDTH)
    color[stripe] = (0.15, 0.72, 0.28)
    return color


def _ray_cylinder(cfg: SceneConfig, pose: Pose, origin, dirs):
    """Nearest valid hit of rays with the finite marker cylinder.

    Returns (depth along unnormalized ray, x_local, theta, valid); depth
    equals the camera z-depth because dirs have unit z.
    """
    spec = cfg.marker
    r = spec.radius
    rot_t = pose.rotation.T
    o_l = rot_t @ (np.asarray(origin, dtype=float) - pose.translation)
    d_l = np.asarray(dirs, dtype=float) @ pose.rotation  # == dirs @ R == (R^T d)^T rows
    x_min = -cfg.tip_extension
    x_max = spec.axial_extent + spec.pitch_axial + STRIPE_WIDTH + cfg.tail_extension

    oy, oz = o_l[1], o_l[2] - r
    dy, dz = d_l[..., 1], d_l[..., 2]
    a = dy * dy + dz * dz
    b = 2.0 * (oy * dy + oz * dz)
    c = oy * oy + oz * oz - r * r
    disc = b * b - 4.0 * a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    a_safe = np.where(np.abs(a) < 1e-15, 1.0, a)
    s1 = (-b - sq) / (2.0 * a_safe)
    s2 = (-b + sq) / (2.0 * a_safe)

    def eval_hit(s):
        x_l = o_l[0] + s * d_l[..., 0]
        ok = hit & (s > 1e-6) & (x_l >= x_min) & (x_l <= x_max)
        return ok, x_l

    ok1, x1 = eval_hit(s1)
    ok2, x2 = eval_hit(s2)
    s = np.where(ok1, s1, np.where(ok2, s2, np.inf))
    x_l = np.where(ok1, x1, x2)
    valid = ok1 | ok2
    yl = oy + s * dy
    zl = oz + s * dz  # relative to the axis
    theta = np.arctan2(yl, -zl)  # lift convention: Y = r sin, Z - r = -r cos
    return np.where(valid, s, np.inf), x_l, theta, valid


def _camera_dirs(intr: CameraIntrinsics, us, vs):
    return np.stack(
        [(us - intr.cx) / intr.fx, (vs - intr.cy) / intr.fy, np.ones_like(us)], axis=-1
    )


def _render_view(cfg: SceneConfig, field: Heightfield, texture: TissueTexture,
                 origin, intr: CameraIntrinsics, pose: Pose | None):
    """One camera view: color, z-depth, probe mask."""
    h, w = intr.height, intr.width
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    dirs = _camera_dirs(intr, us, vs)
    origin = np.asarray(origin, dtype=float)

    t_tissue = ray_heightfield(field, origin, dirs)
    if pose is not None:
        s_probe, x_l, theta, probe_ok = _ray_cylinder(cfg, pose, origin, dirs)
        probe_mask = probe_ok & (s_probe < t_tissue)
    else:
        probe_mask = np.zeros((h, w), dtype=bool)

    depth = np.where(probe_mask, s_probe if pose is not None else 0.0, t_tissue)

    px = origin[0] + t_tissue * dirs[..., 0]
    py = origin[1] + t_tissue * dirs[..., 1]
    color = texture.color(px, py)
    if pose is not None and probe_mask.any():
        mcolor = _marker_color(cfg, x_l, cfg.marker.radius * theta)
        color[probe_mask] = mcolor[probe_mask]
        color = _antialias_probe(cfg, field, texture, origin, intr, pose,
                                 probe_mask, color)
    return color, depth, probe_mask


def _antialias_probe(cfg, field, texture, origin, intr, pose, probe_mask, color):
    """Supersample color around the probe silhouette and features."""
    n = cfg.supersample
    if n <= 1:
        return color
    grow = np.zeros_like(probe_mask)
    grow[1:, :] |= probe_mask[:-1, :]
    grow[:-1, :] |= probe_mask[1:, :]
    grow[:, 1:] |= probe_mask[:, :-1]
    grow[:, :-1] |= probe_mask[:, 1:]
    region = grow | probe_mask
    vs, us = np.nonzero(region)
    offsets = (np.arange(n) + 0.5) / n - 0.5
    total = np.zeros((len(us), 3))
    for dv in offsets:
        for du in offsets:
            dirs = _camera_dirs(intr, us + du, vs + dv)
            t_tissue = ray_heightfield(field, origin, dirs)
            s_probe, x_l, theta, probe_ok = _ray_cylinder(cfg, pose, origin, dirs)
            on_probe = probe_ok & (s_probe < t_tissue)
            px = origin[0] + t_tissue * dirs[..., 0]
            py = origin[1] + t_tissue * dirs[..., 1]
            sub = texture.color(px, py)
            mcol = _marker_color(cfg, x_l, cfg.marker.radius * theta)
            sub[on_probe] = mcol[on_probe]
            total += sub
    color[vs, us] = total / (n * n)
    return color


def _laser_spot(color: np.ndarray, center_uv) -> np.ndarray:
    h, w = color.shape[:2]
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    d2 = (us - center_uv[0]) ** 2 + (vs - center_uv[1]) ** 2
    blob = np.exp(-d2 / (2.0 * LASER_SIGMA_PX**2))
    out = color.copy()
    out[..., 0] = np.maximum(out[..., 0], blob)
    return out


def _visible_marker_features(cfg, field, pose, depth, probe_mask,
                             facing_margin: float = 0.35, border: int = 3):
    spec = cfg.marker
    intr = cfg.rig.left
    feats = []
    for fid, kind, flat in flatten_layout(spec):
        local = cylinder_lift(spec, flat)
        cam = pose.apply(local)
        if cam[2] <= 1.0:
            continue
        normal = pose.rotation @ surface_normal_local(spec, flat)
        if -(normal @ cam) / np.linalg.norm(cam) < facing_margin:
            continue
        uv = project(intr, Pose.identity(), cam)
        ui, vi = int(round(uv[0])), int(round(uv[1]))
        if not (border <= ui < intr.width - border and border <= vi < intr.height - border):
            continue
        if not probe_mask[vi, ui] or abs(depth[vi, ui] - cam[2]) > 1.5:
            continue
        feats.append(MarkerFeatureGT(fid, kind, flat.copy(), local, uv))
    return feats


def laser_intersection(cfg: SceneConfig, field: Heightfield, pose: Pose):
    """Analytic probe-axis/tissue intersection by bisection (tol ~1e-9)."""
    tip = probe_tip(pose, cfg.marker, cfg.tip_extension)
    _, tail_dir = probe_axis(pose, cfg.marker)
    aim = -tail_dir
    if aim[2] <= 1e-3:
        return None
    if tip[2] >= field(tip[0], tip[1]):
        return None  # tip already below the surface
    t = ray_heightfield(field, tip, aim.reshape(1, 3))[0]
    return tip + t * aim


def render_scene(cfg: SceneConfig, frame_index: int = 0) -> FrameBundle:
    """Render one stereo frame with exact ground-truth channels."""
    field = Heightfield(cfg)
    texture = TissueTexture(cfg.texture_seed)
    pose = cfg.trajectory[frame_index % len(cfg.trajectory)] if cfg.trajectory else None

    left, depth_l, probe_mask = _render_view(
        cfg, field, texture, np.zeros(3), cfg.rig.left, pose)
    right, depth_r, _ = _render_view(
        cfg, field, texture, np.array([cfg.rig.baseline, 0.0, 0.0]), cfg.rig.right, pose)

    if pose is not None and not probe_mask.any():
        raise ProbeOutOfView(f"frame {frame_index}: probe outside the left view")

    bf = cfg.rig.baseline * cfg.rig.left.fx
    disp_l = bf / depth_l
    disp_r = cfg.rig.baseline * cfg.rig.right.fx / depth_r

    inter_3d = None
    inter_2d = None
    feats = []
    if pose is not None:
        inter_3d = laser_intersection(cfg, field, pose)
        if inter_3d is not None:
            inter_2d = project(cfg.rig.left, Pose.identity(), inter_3d)
            if cfg.laser:
                left = _laser_spot(left, inter_2d)
                right_uv = project(cfg.rig.right, Pose(np.eye(3), [-cfg.rig.baseline, 0, 0]),
                                   inter_3d)
                right = _laser_spot(right, right_uv)
        feats = _visible_marker_features(cfg, field, pose, depth_l, probe_mask)

    assert np.max(np.abs(disp_l * depth_l - bf)) < 1e-9 * bf
    return FrameBundle(
        left=left,
        right=right,
        gt_disparity=disp_l,
        gt_disparity_right=disp_r,
        gt_depth=DepthMap(depth_l, np.ones_like(depth_l, dtype=bool)),
        probe_mask=probe_mask,
        gt_probe_pose=pose,
        gt_intersection_2d=inter_2d,
        gt_intersection_3d=inter_3d,
        marker_features=feats,
    )


# --- structured light -----------------------------------------------------------


def render_sl_sequence(cfg: SceneConfig, n_bits: int, frame_index: int = 0) -> FrameBundle:
    """Render a frame plus its structured-light pattern stack.

    Gray-code bits (with inverses) and the three phase-shifted sine
    patterns are projected from the configured projector onto the scene;
    camera images are albedo * pattern, zero where the projector does
    not reach, so undecidable pixels mask themselves out.
    """
    if cfg.laser:
        raise ValueError("structured-light capture requires the laser off")
    bundle = render_scene(cfg, frame_index)
    field = Heightfield(cfg)
    texture = TissueTexture(cfg.texture_seed)
    intr = cfg.rig.left
    h, w = intr.height, intr.width
    us, vs = np.meshgrid(np.arange(w, dtype=float), np.arange(h, dtype=float))
    dirs = _camera_dirs(intr, us, vs)
    points = dirs * bundle.gt_depth.data[..., None]

    proj = cfg.projector
    proj_pose = cfg.projector_pose
    local = (points - proj_pose.translation) @ proj_pose.rotation
    in_front = local[..., 2] > 1e-6
    z_safe = np.where(in_front, local[..., 2], 1.0)
    col = proj.fx * local[..., 0] / z_safe + proj.cx
    in_range = in_front & (col >= 0.0) & (col < proj.width)
    col_idx = np.clip(np.floor(col), 0, proj.width - 1).astype(np.int64)

    # albedo: texture luminance on tissue, rendered luminance on the probe
    tissue_albedo = 0.55 + 0.4 * texture.scalar(points[..., 0], points[..., 1])
    probe_albedo = bundle.left.mean(axis=-1)
    albedo = np.where(bundle.probe_mask, probe_albedo, tissue_albedo)
    albedo = np.where(in_range, albedo, 0.0)

    codes = gray_encode(col_idx)
    pairs = []
    for k in range(n_bits):
        bit = ((codes >> k) & 1).astype(float) * in_range
        pairs.append((albedo * bit, albedo * (1.0 - bit) * in_range))
    phases = []
    for shift in (0.0, np.pi / 3.0, 2.0 * np.pi / 3.0):
        wave = 0.5 + 0.5 * np.sin(2.0 * np.pi * cfg.sl_periods * col / proj.width + shift)
        phases.append(albedo * wave * in_range)

    bundle.patterns = PatternStack(pairs, phases, n_bits)
    bundle.sl_valid = in_range
    bundle.albedo = albedo
    return bundle


# --- trajectories and datasets ----------------------------------------------------


def default_trajectory(cfg: SceneConfig, n: int, seed: int,
                       distance_range=(45.0, 70.0), tilt_range=(25.0, 55.0),
                       roll_jitter: float = 0.35, max_tries: int = 200) -> list:
    """Probe poses aimed at the tissue with the marker facing the camera.

    Distances are from the camera to the marker center; tilt is the
    angle between the probe axis and the optical axis.
    """
    rng = np.random.default_rng(seed)
    intr = cfg.rig.left
    half_len = cfg.tip_extension + 0.5 * cfg.marker.axial_extent
    poses = []
    tries = 0
    while len(poses) < n and tries < max_tries * n:
        tries += 1
        depth = rng.uniform(*distance_range)
        lateral = 0.2 * depth * min(intr.cx / intr.fx, intr.cy / intr.fy)
        center = np.array([rng.uniform(-lateral, lateral),
                           rng.uniform(-lateral, lateral), depth])
        tilt = np.deg2rad(rng.uniform(*tilt_range))
        azim = rng.uniform(0.0, 2.0 * np.pi)
        aim = np.array([np.sin(tilt) * np.cos(azim),
                        np.sin(tilt) * np.sin(azim),
                        np.cos(tilt)])
        tip = center + half_len * aim
        roll = rng.uniform(-roll_jitter, roll_jitter)
        pose = build_probe_pose(cfg.marker, tip, aim, roll, cfg.tip_extension)
        probe_cfg = replace(cfg, trajectory=[pose])
        try:
            feats = render_probe_check(probe_cfg)
        except ProbeOutOfView:
            continue
        if feats is None:
            continue
        n_dots = sum(1 for f in feats if f.kind == KIND_DOT)
        n_verts = len(feats) - n_dots
        if n_dots < 10 or n_verts < 8:
            continue
        poses.append(pose)
    if len(poses) < n:
        raise ProbeOutOfView(f"only {len(poses)} of {n} poses were viable")
    return poses


def render_probe_check(cfg: SceneConfig):
    """Cheap viability check: render only geometry and return the
    visible marker features (or None if the intersection misses)."""
    field = Heightfield(cfg)
    pose = cfg.trajectory[0]
    intr = cfg.rig.left
    us, vs = np.meshgrid(np.arange(intr.width, dtype=float),
                         np.arange(intr.height, dtype=float))
    dirs = _camera_dirs(intr, us, vs)
    t_tissue = ray_heightfield(field, np.zeros(3), dirs, iters=24)
    s_probe, _, _, probe_ok = _ray_cylinder(cfg, pose, np.zeros(3), dirs)
    probe_mask = probe_ok & (s_probe < t_tissue)
    if not probe_mask.any():
        raise ProbeOutOfView("no probe pixel")
    inter = laser_intersection(cfg, field, pose)
    if inter is None:
        return None
    uv = project(intr, Pose.identity(), inter)
    b = 6
    if not (b <= uv[0] < intr.width - b and b <= uv[1] < intr.height - b):
        return None
    vi, ui = int(round(uv[1])), int(round(uv[0]))
    if probe_mask[vi, ui]:
        return None  # spot hidden behind the probe
    depth = np.where(probe_mask, s_probe, t_tissue)
    return _visible_marker_features(cfg, field, pose, depth, probe_mask)


def make_dataset(cfg: SceneConfig, n_frames: int, split, out_dir: str,
                 trajectory_seed: int = 7) -> str:
    """Render a dataset: frame i uses trajectory pose i mod P and
    heightfield/texture seeds advanced every P frames (surface grid).

    Writes PPM/PGM/PFM channels plus manifest.csv and returns the
    manifest path.  split is (train, val, test) fractions summing to 1.
    """
    import os

    from .imgio import save_pfm, save_pgm, save_ppm, write_csv

    split = tuple(float(s) for s in split)
    if abs(sum(split) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)

    trajectory = cfg.trajectory
    if not trajectory:
        trajectory = default_trajectory(cfg, min(n_frames, 12), trajectory_seed)
    n_poses = len(trajectory)

    n_train = int(np.floor(split[0] * n_frames))
    n_val = int(np.floor(split[1] * n_frames))
    n_test = n_frames - n_train - n_val
    labels = ["train"] * n_train + ["val"] * n_val + ["test"] * n_test

    from .geometry import pose_to_text

    rows = []
    for i in range(n_frames):
        frame_cfg = replace(
            cfg,
            trajectory=[trajectory[i % n_poses]],
            heightfield_seed=cfg.heightfield_seed + i // n_poses,
            texture_seed=cfg.texture_seed + i // n_poses,
        )
        bundle = render_scene(frame_cfg, 0)
        if bundle.gt_intersection_2d is None:
            raise ProbeOutOfView(f"frame {i}: laser does not meet the surface")
        stem = f"frames/f{i:04d}"
        save_ppm(os.path.join(out_dir, f"{stem}_left.ppm"), bundle.left)
        save_ppm(os.path.join(out_dir, f"{stem}_right.ppm"), bundle.right)
        save_pfm(os.path.join(out_dir, f"{stem}_displ.pfm"), bundle.gt_disparity)
        save_pfm(os.path.join(out_dir, f"{stem}_dispr.pfm"), bundle.gt_disparity_right)
        save_pfm(os.path.join(out_dir, f"{stem}_depth.pfm"), bundle.gt_depth.data)
        save_pgm(os.path.join(out_dir, f"{stem}_probemask.pgm"),
                 bundle.probe_mask.astype(float))
        rows.append([
            i, labels[i],
            f"{stem}_left.ppm", f"{stem}_right.ppm",
            f"{stem}_displ.pfm", f"{stem}_dispr.pfm",
            f"{stem}_depth.pfm", f"{stem}_probemask.pgm",
            float(bundle.gt_intersection_2d[0]), float(bundle.gt_intersection_2d[1]),
            float(bundle.gt_intersection_3d[0]), float(bundle.gt_intersection_3d[1]),
            float(bundle.gt_intersection_3d[2]),
            pose_to_text(bundle.gt_probe_pose),
        ])

    manifest = os.path.join(out_dir, "manifest.csv")
    write_csv(manifest, [
        "frame", "split", "path_left", "path_right", "path_disp_left",
        "path_disp_right", "path_depth", "path_probe_mask",
        "gt_u", "gt_v", "gt_x", "gt_y", "gt_z", "pose",
    ], rows)

    with open(os.path.join(out_dir, "scene.txt"), "w") as f:
        f.write(scene_config_text(cfg))
    return manifest


def scene_config_text(cfg: SceneConfig) -> str:
    """Key=value echo of the camera and marker geometry a dataset was
    rendered with (enough to rerun tracking)."""
    intr = cfg.rig.left
    lines = [
        f"width={intr.width}",
        f"height={intr.height}",
        f"fx={intr.fx!r}",
        f"fy={intr.fy!r}",
        f"cx={intr.cx!r}",
        f"cy={intr.cy!r}",
        f"baseline={cfg.rig.baseline!r}",
        f"base_depth={cfg.base_depth!r}",
        f"amplitude={cfg.amplitude!r}",
        f"frequency={cfg.frequency!r}",
        f"tip_extension={cfg.tip_extension!r}",
        f"marker_radius={cfg.marker.radius!r}",
        f"marker_columns={cfg.marker.n_columns}",
        f"marker_rows={cfg.marker.n_rows}",
        f"marker_pitch_axial={cfg.marker.pitch_axial!r}",
        f"marker_dot_radius={cfg.marker.dot_radius!r}",
        f"marker_stripe_end={cfg.marker.stripe_end}",
    ]
    return "\n".join(lines) + "\n"
