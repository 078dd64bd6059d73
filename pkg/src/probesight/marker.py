"""Dual-pattern cylindrical marker: flattened layout, cylinder mapping,
identification of detected features, stripe disambiguation, occlusion
completion via homography, and patch-based temporal tracking.

The marker alternates axial lines of circular dots (even columns) and
checkerboard vertices (odd columns) around the probe circumference, with
a green stripe ring at one end breaking the 180-degree flip symmetry.
Flattened coordinates are (x, y) mm with x along the probe axis (tip
side at x < 0) and y circumferential; the local 3D frame sits on the
cylinder surface at y = 0.

Because every second column looks alike, the rotation of the marker
about its own axis is unobservable (and irrelevant for a non-imaging
probe tip).  Identification therefore labels features in a canonical
gauge: the widest-separated adjacent line pair is anchored at fixed
reference columns, and all ids are relative to that anchor.  True ids
agree with canonical ids up to an even column shift plus, without stripe
evidence, the 180-degree flip.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import (
    AmbiguousWithoutStripe,
    CollinearPairs,
    Degenerate,
    NotEnoughFeatures,
    OutOfWrapRange,
)
from .geometry import Pose, apply_homography

KIND_DOT = "dot"
KIND_VERTEX = "vertex"
STRIPE_NEAR_TIP = "near_tip"
STRIPE_FAR_TIP = "far_tip"

# canonical anchor column for the lower-perpendicular line of the unit
ANCHOR_DOT_COLUMN = 2
ANCHOR_VERTEX_COLUMN = 3
ASSIGN_GATE_FRACTION = 0.45
AMBIGUITY_SCORE_GAP = 0.5


@dataclass(frozen=True)
class MarkerSpec:
    radius: float                 # cylinder radius, mm
    n_columns: int                # pattern lines around the circumference
    n_rows: int                   # features per line
    pitch_axial: float            # mm between features along a line
    pitch_circumferential: float  # mm between adjacent lines
    dot_radius: float             # mm
    stripe_end: str = STRIPE_NEAR_TIP

    def __post_init__(self):
        if self.n_columns < 4 or self.n_columns % 2:
            raise ValueError("need an even number of columns >= 4 for alternation")
        if self.n_rows < 2:
            raise ValueError("need at least 2 features per line")
        if abs(self.n_columns * self.pitch_circumferential - 2 * np.pi * self.radius) > 1e-6:
            raise ValueError("columns * circumferential pitch must equal the circumference")
        if self.stripe_end not in (STRIPE_NEAR_TIP, STRIPE_FAR_TIP):
            raise ValueError(f"unknown stripe end {self.stripe_end!r}")

    @staticmethod
    def default() -> "MarkerSpec":
        radius = 8.0
        n_columns = 12
        return MarkerSpec(
            radius=radius,
            n_columns=n_columns,
            n_rows=7,
            pitch_axial=4.0,
            pitch_circumferential=2 * np.pi * radius / n_columns,
            dot_radius=1.3,
            stripe_end=STRIPE_NEAR_TIP,
        )

    def column_kind(self, c: int) -> str:
        return KIND_DOT if (c % self.n_columns) % 2 == 0 else KIND_VERTEX

    def column_center_y(self, c: int) -> float:
        return -np.pi * self.radius + (c + 0.5) * self.pitch_circumferential

    @property
    def axial_extent(self) -> float:
        return (self.n_rows - 1) * self.pitch_axial

    def feature_id(self, c: int, k: int) -> int:
        return (c % self.n_columns) * self.n_rows + k

    def id_to_colrow(self, fid: int) -> tuple[int, int]:
        return fid // self.n_rows, fid % self.n_rows

    def to_text(self) -> str:
        lines = [
            f"radius={self.radius!r}",
            f"n_columns={self.n_columns}",
            f"n_rows={self.n_rows}",
            f"pitch_axial={self.pitch_axial!r}",
            f"pitch_circumferential={self.pitch_circumferential!r}",
            f"dot_radius={self.dot_radius!r}",
            f"stripe_end={self.stripe_end}",
        ]
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "MarkerSpec":
        kv = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, val = line.split("=", 1)
            kv[key.strip()] = val.strip()
        return MarkerSpec(
            radius=float(kv["radius"]),
            n_columns=int(kv["n_columns"]),
            n_rows=int(kv["n_rows"]),
            pitch_axial=float(kv["pitch_axial"]),
            pitch_circumferential=float(kv["pitch_circumferential"]),
            dot_radius=float(kv["dot_radius"]),
            stripe_end=kv.get("stripe_end", STRIPE_NEAR_TIP),
        )


def flatten_layout(spec: MarkerSpec):
    """All features as (id, kind, flat position), column-major, tip to
    tail within each column."""
    out = []
    for c in range(spec.n_columns):
        kind = spec.column_kind(c)
        y = spec.column_center_y(c)
        for k in range(spec.n_rows):
            out.append((spec.feature_id(c, k), kind, np.array([k * spec.pitch_axial, y])))
    return out


def layout_csv_rows(spec: MarkerSpec) -> list[list]:
    return [[fid, kind, float(pos[0]), float(pos[1])] for fid, kind, pos in flatten_layout(spec)]


def cylinder_lift(spec: MarkerSpec, flat) -> np.ndarray:
    """Map a flattened (x, y) mm position onto the cylinder surface:
    X = x, theta = y / r, (Y, Z) = (r sin theta, r (1 - cos theta))."""
    flat = np.asarray(flat, dtype=float)
    x, y = float(flat[0]), float(flat[1])
    if abs(y) > np.pi * spec.radius + 1e-9:
        raise OutOfWrapRange(f"|y|={abs(y):.3f} exceeds half circumference")
    theta = y / spec.radius
    return np.array([x, spec.radius * np.sin(theta), spec.radius * (1.0 - np.cos(theta))])


def feature_local_points(spec: MarkerSpec) -> dict[int, np.ndarray]:
    return {fid: cylinder_lift(spec, pos) for fid, _, pos in flatten_layout(spec)}


def surface_normal_local(spec: MarkerSpec, flat) -> np.ndarray:
    """Outward cylinder normal at a flattened position (local frame)."""
    theta = float(np.asarray(flat, dtype=float)[1]) / spec.radius
    return np.array([0.0, np.sin(theta), -np.cos(theta)])


@dataclass
class FeatureCandidates:
    """Detected but unidentified features of one frame."""

    dots: np.ndarray                      # (n, 2) subpixel positions
    vertices: np.ndarray                  # (m, 2)
    stripe_pos: np.ndarray | None = None  # green-stripe centroid, if seen

    def __post_init__(self):
        self.dots = np.asarray(self.dots, dtype=float).reshape(-1, 2)
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)


@dataclass
class FeatureSet:
    """Identified features: canonical-gauge ids with subpixel positions."""

    dots: list = field(default_factory=list)      # [(id, (2,) position)]
    vertices: list = field(default_factory=list)  # [(id, (2,) position)]
    stripe_detected: bool = False
    stripe_pos: np.ndarray | None = None

    def count(self) -> int:
        return len(self.dots) + len(self.vertices)


def flip_feature_id(spec: MarkerSpec, fid: int, anchor_column: int) -> int:
    """The 180-degree relabeling: rows reverse and columns reflect about
    the anchor column (even reflection keeps kinds aligned)."""
    c, k = spec.id_to_colrow(fid)
    return spec.feature_id((2 * anchor_column - c) % spec.n_columns, spec.n_rows - 1 - k)


# --- clustering and line grouping --------------------------------------------


def _median_nn_spacing(points: np.ndarray) -> float:
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    return float(np.median(np.sqrt(d2.min(axis=1))))


def _largest_cluster(points: np.ndarray, threshold: float) -> np.ndarray:
    """Single-linkage clustering; returns indices of the biggest cluster."""
    n = len(points)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    for i in range(n):
        for j in range(i + 1, n):
            if d2[i, j] <= threshold * threshold:
                parent[find(i)] = find(j)
    roots = np.array([find(i) for i in range(n)])
    best_root = np.bincount(roots).argmax()
    return np.nonzero(roots == best_root)[0]


def _group_lines(perp: np.ndarray):
    """Split sorted 1D perpendicular offsets into lines at large gaps."""
    order = np.argsort(perp)
    sorted_p = perp[order]
    gaps = np.diff(sorted_p)
    if len(gaps) == 0 or gaps.max() < 3.0:
        return [order]
    threshold = max(3.0, 0.25 * gaps.max())
    groups = []
    start = 0
    for i, g in enumerate(gaps):
        if g > threshold:
            groups.append(order[start:i + 1])
            start = i + 1
    groups.append(order[start:])
    return groups


def fit_trapezoid(points: np.ndarray) -> np.ndarray:
    """Four corner points of a two-line detection unit.

    Enumerates 4-subsets of the convex hull and keeps the convex
    quadrilateral with a near-parallel edge pair (< 5 degrees)
    maximizing area; if none qualifies, the max-area convex
    quadrilateral wins.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < 4:
        raise NotEnoughFeatures("trapezoid needs 4 points")
    hull = _convex_hull(pts)
    best = None
    best_parallel = None
    for subset in combinations(range(len(hull)), 4):
        quad = hull[list(subset)]  # hull order, so already convex
        area = _polygon_area(quad)
        if area <= 0:
            continue
        edges = np.diff(np.vstack([quad, quad[:1]]), axis=0)
        angles = np.arctan2(edges[:, 1], edges[:, 0])
        parallel = False
        for a, b in ((0, 2), (1, 3)):
            diff = abs((angles[a] - angles[b] + np.pi / 2) % np.pi - np.pi / 2)
            if diff < np.deg2rad(5.0):
                parallel = True
        if parallel and (best_parallel is None or area > best_parallel[0]):
            best_parallel = (area, quad)
        if best is None or area > best[0]:
            best = (area, quad)
    chosen = best_parallel if best_parallel is not None else best
    if chosen is None:
        raise NotEnoughFeatures("no convex quadrilateral found")
    return chosen[1]


def _convex_hull(pts: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain, counter-clockwise in (u, v) coords."""
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    sorted_pts = pts[order]

    def half(points):
        out = []
        for p in points:
            while len(out) >= 2 and np.cross(out[-1] - out[-2], p - out[-2]) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = half(sorted_pts)
    upper = half(sorted_pts[::-1])
    return np.asarray(lower[:-1] + upper[:-1])


def _polygon_area(quad: np.ndarray) -> float:
    x, y = quad[:, 0], quad[:, 1]
    return 0.5 * float(np.abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


# --- identification -----------------------------------------------------------


def _axis_direction(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    from .geometry import pca_axis

    _, direction = pca_axis(points)
    perp = np.array([-direction[1], direction[0]])
    return direction, perp


def _model_positions(spec: MarkerSpec, columns, unwrapped_y) -> list:
    """Flat model features for the given columns with explicit
    (possibly unwrapped) line y coordinates."""
    feats = []
    for c, y in zip(columns, unwrapped_y):
        kind = spec.column_kind(c)
        for k in range(spec.n_rows):
            feats.append((spec.feature_id(c, k), kind,
                          np.array([k * spec.pitch_axial, y])))
    return feats


def identify(candidates: FeatureCandidates, spec: MarkerSpec) -> FeatureSet:
    """Assign canonical-gauge layout ids to detected features.

    Pipeline: single-linkage vicinity clustering (threshold 2.5x the
    median nearest-neighbor spacing), line grouping along the principal
    axis, anchoring of the widest adjacent line pair, trapezoid corner
    fitting, homography mapping of the model pattern into the image, and
    nearest-neighbor id assignment.  Stripe evidence resolves the
    180-degree flip; without it a symmetric tie raises
    AmbiguousWithoutStripe.
    """
    n_dots, n_verts = len(candidates.dots), len(candidates.vertices)
    if max(n_dots, n_verts) < 4:
        raise NotEnoughFeatures("need at least 4 candidates of one kind")
    points = np.vstack([candidates.dots, candidates.vertices])
    kinds = np.array([KIND_DOT] * n_dots + [KIND_VERTEX] * n_verts)

    spacing = _median_nn_spacing(points)
    cluster_idx = _largest_cluster(points, 2.5 * spacing)
    cpoints = points[cluster_idx]
    ckinds = kinds[cluster_idx]
    if len(cpoints) < 4:
        raise NotEnoughFeatures("largest vicinity cluster has fewer than 4 features")

    axis_dir, perp_dir = _axis_direction(cpoints)
    along = cpoints @ axis_dir
    perp = cpoints @ perp_dir

    groups = _group_lines(perp)
    lines = []
    for g in groups:
        if len(g) < 2:
            continue
        kind_vals, counts = np.unique(ckinds[g], return_counts=True)
        kind = kind_vals[np.argmax(counts)]
        members = g[ckinds[g] == kind]
        lines.append({
            "kind": kind,
            "members": members,
            "perp": float(np.mean(perp[members])),
        })
    lines.sort(key=lambda rec: rec["perp"])
    if len(lines) < 2:
        raise NotEnoughFeatures("could not group two pattern lines")

    # anchor: adjacent line pair with the widest perpendicular separation
    seps = [lines[i + 1]["perp"] - lines[i]["perp"] for i in range(len(lines) - 1)]
    a_idx = int(np.argmax(seps))
    line_lo, line_hi = lines[a_idx], lines[a_idx + 1]
    if len(line_lo["members"]) < 2 or len(line_hi["members"]) < 2:
        raise NotEnoughFeatures("anchor lines need two features each")

    anchor_col = ANCHOR_DOT_COLUMN if line_lo["kind"] == KIND_DOT else ANCHOR_VERTEX_COLUMN
    col_step = 1 if line_lo["kind"] != line_hi["kind"] else 2
    unit_members = np.concatenate([line_lo["members"], line_hi["members"]])
    corners = fit_trapezoid(cpoints[unit_members])

    # split corners back into the two lines and order along the axis
    corner_perp = corners @ perp_dir
    perp_mid = 0.5 * (line_lo["perp"] + line_hi["perp"])
    lo_corners = corners[corner_perp < perp_mid]
    hi_corners = corners[corner_perp >= perp_mid]
    if len(lo_corners) != 2 or len(hi_corners) != 2:
        raise NotEnoughFeatures("trapezoid corners do not straddle the unit")
    lo_corners = lo_corners[np.argsort(lo_corners @ axis_dir)]
    hi_corners = hi_corners[np.argsort(hi_corners @ axis_dir)]

    x_last = spec.axial_extent
    y_lo = spec.column_center_y(anchor_col)
    hypotheses = []
    for flip in (False, True):
        col_hi = anchor_col + (-col_step if flip else col_step)
        y_hi = y_lo + (-col_step if flip else col_step) * spec.pitch_circumferential
        # model corners: first/last feature of each anchor line
        if not flip:
            model_c = [np.array([0.0, y_lo]), np.array([x_last, y_lo]),
                       np.array([0.0, y_hi]), np.array([x_last, y_hi])]
            image_c = [lo_corners[0], lo_corners[1], hi_corners[0], hi_corners[1]]
        else:
            model_c = [np.array([x_last, y_lo]), np.array([0.0, y_lo]),
                       np.array([x_last, y_hi]), np.array([0.0, y_hi])]
            image_c = [lo_corners[0], lo_corners[1], hi_corners[0], hi_corners[1]]
        try:
            from .pose import estimate_homography

            hom = estimate_homography(list(zip(model_c, image_c)))
        except Degenerate:
            continue
        cols = []
        ys = []
        for dc in range(-col_step, 2 * col_step + 1):
            c = anchor_col + (-dc if flip else dc)
            cols.append(c % spec.n_columns)
            ys.append(y_lo + dc * (y_hi - y_lo) / col_step if col_step else y_lo)
        model_feats = _model_positions(spec, cols, ys)
        mapped = np.array([apply_homography(hom, pos) for _, _, pos in model_feats])
        cost = _assignment_cost(cpoints[unit_members], ckinds[unit_members],
                                model_feats, mapped)
        hypotheses.append({
            "flip": flip, "hom": hom, "model_feats": model_feats,
            "mapped": mapped, "cost": cost,
            "tip_end": apply_homography(hom, np.array([-spec.pitch_axial, 0.5 * (y_lo + y_hi)])),
            "tail_end": apply_homography(hom, np.array([x_last + spec.pitch_axial,
                                                        0.5 * (y_lo + y_hi)])),
        })

    if not hypotheses:
        raise NotEnoughFeatures("homography fitting failed for both orientations")

    chosen = None
    stripe_detected = candidates.stripe_pos is not None
    if stripe_detected and len(hypotheses) == 2:
        stripe = np.asarray(candidates.stripe_pos, dtype=float)
        scores = []
        for hyp in hypotheses:
            stripe_side = hyp["tip_end"] if spec.stripe_end == STRIPE_NEAR_TIP else hyp["tail_end"]
            other_side = hyp["tail_end"] if spec.stripe_end == STRIPE_NEAR_TIP else hyp["tip_end"]
            scores.append(np.linalg.norm(stripe - stripe_side)
                          - np.linalg.norm(stripe - other_side))
        chosen = hypotheses[int(np.argmin(scores))]
    elif len(hypotheses) == 1:
        chosen = hypotheses[0]
    else:
        costs = [h["cost"] for h in hypotheses]
        lo, hi = min(costs), max(costs)
        if hi <= 1e-12 or (hi - lo) / max(hi, 1e-12) < AMBIGUITY_SCORE_GAP:
            raise AmbiguousWithoutStripe("symmetric assignments tie without stripe evidence")
        chosen = hypotheses[int(np.argmin(costs))]

    # assign rows per grouped line: column index follows the perpendicular
    # order away from the anchor; rows match along the axis, which stays
    # accurate even where the flat-plane approximation bends off-cylinder
    flip = chosen["flip"]
    hom = chosen["hom"]
    y_step = -spec.pitch_circumferential if flip else spec.pitch_circumferential
    # column offsets between grouped lines: adjacent kinds differ by one
    # column, same kinds by two (one line of the other kind went unseen)
    rel_col = [0] * len(lines)
    for j in range(a_idx + 1, len(lines)):
        rel_col[j] = rel_col[j - 1] + (1 if lines[j]["kind"] != lines[j - 1]["kind"] else 2)
    for j in range(a_idx - 1, -1, -1):
        rel_col[j] = rel_col[j + 1] - (1 if lines[j]["kind"] != lines[j + 1]["kind"] else 2)
    assigned: dict[int, tuple[float, int]] = {}
    for li, line in enumerate(lines):
        col = anchor_col + rel_col[li] * (-1 if flip else 1)
        col_mod = col % spec.n_columns
        y_model = y_lo + rel_col[li] * y_step
        mapped_line = np.array([
            apply_homography(hom, np.array([k * spec.pitch_axial, y_model]))
            for k in range(spec.n_rows)
        ])
        mapped_along = mapped_line @ axis_dir
        if spec.n_rows > 1:
            axial_gate = ASSIGN_GATE_FRACTION * float(
                np.median(np.abs(np.diff(np.sort(mapped_along)))))
        else:
            axial_gate = ASSIGN_GATE_FRACTION * spacing
        for ci in line["members"]:
            a = along[ci]
            k = int(np.argmin(np.abs(mapped_along - a)))
            dist = float(abs(mapped_along[k] - a))
            if dist > axial_gate:
                continue
            fid = spec.feature_id(col_mod, k)
            if fid not in assigned or dist < assigned[fid][0]:
                assigned[fid] = (dist, ci)

    result = FeatureSet(stripe_detected=stripe_detected,
                        stripe_pos=candidates.stripe_pos)
    for fid, (_, ci) in sorted(assigned.items()):
        entry = (fid, cpoints[ci].copy())
        if ckinds[ci] == KIND_DOT:
            result.dots.append(entry)
        else:
            result.vertices.append(entry)
    if result.count() < 4:
        raise NotEnoughFeatures("fewer than 4 features survived assignment")
    return result


def _assignment_cost(points, kinds, model_feats, mapped) -> float:
    model_kinds = np.array([kind for _, kind, _ in model_feats])
    total = 0.0
    for pos, kind in zip(points, kinds):
        same = np.nonzero(model_kinds == kind)[0]
        if len(same) == 0:
            total += 1e6
            continue
        total += float(np.min(np.linalg.norm(mapped[same] - pos, axis=1)))
    return total / max(len(points), 1)


# --- occlusion completion and temporal tracking -------------------------------


def complete_by_homography(known, missing_model) -> np.ndarray:
    """Predict image positions of missing features from >= 4 known
    (model flat 2-vector, image 2-vector) pairs via a homography."""
    from .pose import estimate_homography

    try:
        hom = estimate_homography(known)
    except Degenerate as exc:
        raise CollinearPairs(str(exc)) from exc
    missing = np.asarray(missing_model, dtype=float).reshape(-1, 2)
    return np.array([apply_homography(hom, m) for m in missing]).reshape(-1, 2)


def track_features(prev_img: np.ndarray, next_img: np.ndarray, points,
                   search_radius: int = 8, patch_half: int = 3):
    """Single-level patch matching: for each point, find the minimum-SSD
    7x7 patch in the next frame within the search radius.

    Returns (new_points, valid) with a parabolic subpixel refinement of
    the SSD minimum along each axis.
    """
    prev_img = np.asarray(prev_img, dtype=float)
    next_img = np.asarray(next_img, dtype=float)
    h, w = prev_img.shape
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    new_pts = np.zeros_like(pts)
    valid = np.zeros(len(pts), dtype=bool)
    for i, (u, v) in enumerate(pts):
        ui, vi = int(round(u)), int(round(v))
        if not (patch_half <= ui < w - patch_half and patch_half <= vi < h - patch_half):
            new_pts[i] = (u, v)
            continue
        patch = prev_img[vi - patch_half:vi + patch_half + 1,
                         ui - patch_half:ui + patch_half + 1]
        best = None
        ssd_map = {}
        for dv in range(-search_radius, search_radius + 1):
            for du in range(-search_radius, search_radius + 1):
                u2, v2 = ui + du, vi + dv
                if not (patch_half <= u2 < w - patch_half and patch_half <= v2 < h - patch_half):
                    continue
                cand = next_img[v2 - patch_half:v2 + patch_half + 1,
                                u2 - patch_half:u2 + patch_half + 1]
                ssd = float(((cand - patch) ** 2).sum())
                ssd_map[(du, dv)] = ssd
                if best is None or ssd < best[0]:
                    best = (ssd, du, dv)
        if best is None:
            new_pts[i] = (u, v)
            continue
        _, du, dv = best
        su = _parabolic_offset(ssd_map, du, dv, axis=0)
        sv = _parabolic_offset(ssd_map, du, dv, axis=1)
        new_pts[i] = (ui + du + su + (u - ui), vi + dv + sv + (v - vi))
        valid[i] = True
    return new_pts, valid


def _parabolic_offset(ssd_map, du, dv, axis):
    if axis == 0:
        left, mid, right = ssd_map.get((du - 1, dv)), ssd_map.get((du, dv)), ssd_map.get((du + 1, dv))
    else:
        left, mid, right = ssd_map.get((du, dv - 1)), ssd_map.get((du, dv)), ssd_map.get((du, dv + 1))
    if left is None or right is None:
        return 0.0
    denom = left - 2.0 * mid + right
    if denom <= 0:
        return 0.0
    return float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))


# --- stripe detection ----------------------------------------------------------


def rgb_to_hsv(img: np.ndarray):
    """Minimal RGB -> (hue degrees, saturation, value) conversion."""
    img = np.asarray(img, dtype=float)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = img.max(axis=-1)
    c = v - img.min(axis=-1)
    s = np.where(v > 0, c / np.maximum(v, 1e-12), 0.0)
    hue = np.zeros_like(v)
    safe_c = np.maximum(c, 1e-12)
    rmax = (v == r) & (c > 0)
    gmax = (v == g) & (c > 0) & ~rmax
    bmax = (c > 0) & ~rmax & ~gmax
    hue[rmax] = (60.0 * ((g - b) / safe_c))[rmax] % 360.0
    hue[gmax] = (60.0 * ((b - r) / safe_c) + 120.0)[gmax]
    hue[bmax] = (60.0 * ((r - g) / safe_c) + 240.0)[bmax]
    return hue, s, v


def detect_stripe(color_img: np.ndarray, hue_band=(90.0, 150.0),
                  min_saturation: float = 0.3, min_pixels: int = 6):
    """Centroid of green-hue pixels (the stripe ring), or None."""
    hue, sat, val = rgb_to_hsv(color_img)
    mask = (hue >= hue_band[0]) & (hue <= hue_band[1]) & (sat >= min_saturation) & (val >= 0.15)
    if np.count_nonzero(mask) < min_pixels:
        return None
    vs, us = np.nonzero(mask)
    return np.array([us.mean(), vs.mean()])


# --- unit-plane geometry for pose estimation ----------------------------------


def unit_plane_model(spec: MarkerSpec, col_a: int, col_b: int):
    """Coplanar model coordinates for a two-line detection unit.

    Two parallel cylinder lines span a chord plane; returns
    (plane_from_local pose, {feature id: (2,) plane coords}) where plane
    axes are (axial, chord) and the plane origin is row 0 of col_a.
    """
    p_a0 = cylinder_lift(spec, [0.0, spec.column_center_y(col_a)])
    p_b0 = cylinder_lift(spec, [0.0, spec.column_center_y(col_b)])
    chord = p_b0 - p_a0
    chord_len = float(np.linalg.norm(chord))
    if chord_len < 1e-12:
        raise Degenerate("unit lines coincide")
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = chord / chord_len
    normal = np.cross(e1, e2)
    rot = np.column_stack([e1, e2, normal])  # plane -> local
    plane_from_local = Pose(rot.T, -rot.T @ p_a0, check=False)
    coords = {}
    for c, s in ((col_a, 0.0), (col_b, chord_len)):
        for k in range(spec.n_rows):
            coords[spec.feature_id(c, k)] = np.array([k * spec.pitch_axial, s])
    return plane_from_local, coords


def estimate_probe_pose(intrinsics, features: FeatureSet, spec: MarkerSpec):
    """Probe pose from an identified feature set.

    For each pattern the best-populated pair of adjacent same-kind lines
    forms a planar unit fed to the two-solution planar pose solver; the
    winning candidate across both patterns (smallest reprojection RMS)
    is mapped back to the marker local frame.  Returns
    (pose, reprojection rms, per-pattern solution pairs).
    """
    from .errors import CheiralityFailure, NoSolution
    from .geometry import compose
    from .pose import ippe_pose, select_pose

    solutions = {}
    for kind, entries in ((KIND_DOT, features.dots), (KIND_VERTEX, features.vertices)):
        by_col: dict[int, list] = {}
        for fid, pos in entries:
            c, _ = spec.id_to_colrow(fid)
            by_col.setdefault(c, []).append((fid, pos))
        best_pair = None
        for c in sorted(by_col):
            if c + 2 not in by_col:
                continue
            count = len(by_col[c]) + len(by_col[c + 2])
            if (len(by_col[c]) >= 2 and len(by_col[c + 2]) >= 2 and count >= 4
                    and (best_pair is None or count > best_pair[0])):
                best_pair = (count, c)
        if best_pair is None:
            continue
        c = best_pair[1]
        plane_from_local, coords = unit_plane_model(spec, c, c + 2)
        model = []
        image = []
        for fid, pos in by_col[c] + by_col[c + 2]:
            model.append(coords[fid])
            image.append(pos)
        try:
            pair = ippe_pose(intrinsics, np.asarray(model), np.asarray(image))
        except (Degenerate, CheiralityFailure):
            continue
        # chain the plane pose with plane<-local to get the probe pose
        pair.best = compose(pair.best, plane_from_local)
        pair.alternate = compose(pair.alternate, plane_from_local)
        solutions[kind] = pair
    if not solutions:
        raise NoSolution("no pattern formed a planar unit")
    pose, rms = select_pose(solutions.get(KIND_DOT), solutions.get(KIND_VERTEX))
    return pose, rms, solutions
