"""Low-level feature extraction on grayscale images: blob centroids,
checkerboard-crossing responses, non-maximum suppression, and false-dot
rejection.

Images are (h, w) float arrays in [0, 1], indexed [v, u]; all detector
outputs use (u, v) pixel coordinates.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import ImageTooSmall

# 16-point sampling ring of radius 3 (u, v offsets at 22.5 deg steps)
RING_OFFSETS = [
    (3, 0), (3, 1), (2, 2), (1, 3), (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3), (0, -3), (1, -3), (2, -2), (3, -1),
]
RESPONSE_BORDER = 5


def gaussian_smooth(img: np.ndarray, sigma: float = 1.0) -> np.ndarray:
    """5x5 separable Gaussian; borders renormalize over the clipped kernel."""
    img = np.asarray(img, dtype=float)
    taps = np.exp(-np.arange(-2, 3) ** 2 / (2.0 * sigma * sigma))
    taps /= taps.sum()

    def conv1d(a, axis):
        total = np.zeros_like(a)
        weight = np.zeros_like(a)
        for k, t in zip(range(-2, 3), taps):
            shifted = np.roll(a, k, axis=axis)
            wmask = np.ones_like(a)
            # zero out wrapped entries instead of reflecting
            sl = [slice(None)] * a.ndim
            if k > 0:
                sl[axis] = slice(0, k)
            elif k < 0:
                sl[axis] = slice(a.shape[axis] + k, None)
            if k != 0:
                shifted[tuple(sl)] = 0.0
                wmask[tuple(sl)] = 0.0
            total += t * shifted
            weight += t * wmask
        # renormalizing keeps constant images exactly constant at borders
        return total / weight

    return conv1d(conv1d(img, 1), 0)


def _local_mean(img: np.ndarray, radius: int) -> np.ndarray:
    """Mean over the (2r+1)^2 window clipped to the image bounds."""
    ones = np.ones_like(img)
    kernel = 2 * radius + 1
    total = ndimage.uniform_filter(img, size=kernel, mode="constant") * kernel**2
    count = ndimage.uniform_filter(ones, size=kernel, mode="constant") * kernel**2
    return total / count


def detect_blobs(img: np.ndarray, min_area: float, max_area: float,
                 window_radius: int = 7, offset_frac: float = 0.02,
                 min_circularity: float = 0.6):
    """Dark-on-light blob detection.

    Pixels darker than their local (2*window_radius+1)^2 mean by
    offset_frac of the global intensity range are grouped into
    8-connected components, filtered by area and circularity
    (4*area / (pi * extent^2) >= min_circularity), and reduced to
    darkness-weighted centroids.  Returns a list of ((u, v), area).
    """
    img = np.asarray(img, dtype=float)
    rng = float(img.max() - img.min())
    local = _local_mean(img, window_radius)
    fg = img < local - offset_frac * rng
    labels, n = ndimage.label(fg, structure=np.ones((3, 3), dtype=int))
    blobs = []
    for lab, component in enumerate(ndimage.find_objects(labels), start=1):
        vs, us = np.nonzero(labels[component] == lab)
        area = float(len(us))
        if not (min_area <= area <= max_area):
            continue
        us_f = us + component[1].start
        vs_f = vs + component[0].start
        du = us_f[:, None] - us_f[None, :]
        dv = vs_f[:, None] - vs_f[None, :]
        extent = float(np.sqrt((du * du + dv * dv).max())) + 1.0
        if 4.0 * area / (np.pi * extent * extent) < min_circularity:
            continue
        weights = np.clip(local[vs_f, us_f] - img[vs_f, us_f], 0.0, None)
        if weights.sum() <= 0:
            weights = np.ones_like(weights)
        cu = float((weights * us_f).sum() / weights.sum())
        cv = float((weights * vs_f).sum() / weights.sum())
        blobs.append((np.array([cu, cv]), area))
    blobs.sort(key=lambda b: (b[0][1], b[0][0]))
    return blobs


def vertex_response(img: np.ndarray) -> np.ndarray:
    """Checkerboard-crossing response map (sum/difference ring test).

    At a crossing, diametrically opposite ring samples agree while
    samples 90 degrees apart differ; edges and flat regions score zero.
    The image is Gaussian-smoothed first and a 5 px border is zeroed.
    """
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    if h < 11 or w < 11:
        raise ImageTooSmall("vertex response needs at least 11x11 pixels")
    sm = gaussian_smooth(img)
    b = RESPONSE_BORDER
    core = np.s_[b:h - b, b:w - b]
    samples = []
    for du, dv in RING_OFFSETS:
        samples.append(sm[b + dv:h - b + dv, b + du:w - b + du])
    center = sm[core]
    sum_resp = np.zeros_like(center)
    diff_resp = np.zeros_like(center)
    ring_total = np.zeros_like(center)
    for n in range(8):
        sum_resp += np.abs(samples[n] + samples[n + 8]
                           - samples[(n + 4) % 16] - samples[(n + 12) % 16])
        diff_resp += np.abs(samples[n] - samples[n + 8])
    for s in samples:
        ring_total += s
    mean_resp = np.abs(ring_total - 16.0 * center)
    out = np.zeros_like(img)
    out[core] = np.clip(sum_resp - diff_resp - mean_resp, 0.0, None)
    return out


def non_max_suppress(response: np.ndarray, radius: float, threshold: float):
    """Strict local maxima of a response map.

    A pixel survives when no pixel within `radius` (Euclidean) beats it
    and its value reaches threshold * global max; exact ties are broken
    row-major.  Survivors come back as (u, v) integer pairs sorted by
    response descending.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    response = np.asarray(response, dtype=float)
    peak = response.max(initial=0.0)
    if peak <= 0.0:
        return []
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    footprint = (dx * dx + dy * dy) <= radius * radius
    diskmax = ndimage.maximum_filter(response, footprint=footprint, mode="constant")
    vs, us = np.nonzero((response >= threshold * peak) & (response > 0.0)
                        & (response == diskmax))
    order = np.lexsort((us, vs, -response[vs, us]))
    accepted: list[tuple[int, int]] = []
    accepted_arr = np.empty((0, 2))
    for k in order:
        u, v = int(us[k]), int(vs[k])
        if len(accepted_arr):
            d2 = ((accepted_arr - (u, v)) ** 2).sum(axis=1)
            if (d2 <= radius * radius).any():
                continue
        accepted.append((u, v))
        accepted_arr = np.vstack([accepted_arr, [u, v]])
    return accepted


def suppress_false_dots(dots, vertices, radius: float):
    """Drop any dot within `radius` of a confirmed vertex; the dark
    wedges at a checker crossing often masquerade as circular dots."""
    if not vertices or not dots:
        return list(dots)
    varr = np.asarray([np.asarray(v, dtype=float)[:2] for v in vertices])
    out = []
    for dot in dots:
        pos = np.asarray(dot[0] if isinstance(dot, tuple) else dot, dtype=float)[:2]
        d2 = ((varr - pos) ** 2).sum(axis=1)
        if d2.min() > radius * radius:
            out.append(dot)
    return out


def refine_peaks(response: np.ndarray, peaks) -> np.ndarray:
    """Subpixel peak positions from a separable 3x3 quadratic fit."""
    response = np.asarray(response, dtype=float)
    h, w = response.shape
    out = []
    for u, v in peaks:
        du = dv = 0.0
        if 0 < u < w - 1:
            left, mid, right = response[v, u - 1], response[v, u], response[v, u + 1]
            denom = left - 2.0 * mid + right
            if denom < 0:
                du = float(np.clip(0.5 * (left - right) / denom, -0.5, 0.5))
        if 0 < v < h - 1:
            top, mid, bot = response[v - 1, u], response[v, u], response[v + 1, u]
            denom = top - 2.0 * mid + bot
            if denom < 0:
                dv = float(np.clip(0.5 * (top - bot) / denom, -0.5, 0.5))
        out.append([u + du, v + dv])
    return np.asarray(out).reshape(-1, 2)
