"""Self-supervised stereo depth loss kernels and their weighted totals.

All kernels operate on plain 2D float arrays (row-major, values in
[0, 1] for images, pixels for disparities).  The warp direction follows
the package convention x_right = x_left - d; callers reconstructing the
other side pass a negated map.  Out-of-coverage samples are excluded
from loss means rather than zero-filled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NotNormalized
from .geometry import StereoRig

DISPARITY_EPS = 1e-6
LOG_CLAMP = 1e-7
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class DepthMap:
    """Per-pixel depth in mm; entries are meaningful only where valid."""

    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.data.shape != self.valid.shape:
            raise DimensionMismatch("depth and validity mask differ in shape")


@dataclass(frozen=True)
class LossWeights:
    """Loss blend weights; defaults are the published operating point."""

    gamma: float = 0.85        # SSIM share of the appearance loss
    rec_smooth: float = 0.001  # smoothness inside the reconstruction loss
    rec: float = 0.5           # reconstruction share of the adversarial total
    gan: float = 0.5           # adversarial share of the adversarial total
    ap_2d: float = 1.0         # appearance weight, 2D+3D total
    ds_2d: float = 0.5         # smoothness weight, 2D+3D total
    lr_2d: float = 1.0         # left-right consistency weight, 2D+3D total
    gc_3d: float = 0.001       # 3D geometric consistency weight
    depth_task: float = 10.0   # depth branch weight, multi-task total
    seg_task: float = 1.0      # segmentation branch weight, multi-task total
    scales: int = 4

    def __post_init__(self):
        if not (1 <= self.scales <= 4):
            raise ValueError("scales must be in 1..4")


def _require_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shape mismatch: {a.shape} vs {b.shape}")


# --- disparity/depth conversions --------------------------------------------


def disparity_to_depth(d: np.ndarray, rig: StereoRig, side: str = "left") -> DepthMap:
    """D = baseline * f / d; pixels with d <= eps are marked invalid."""
    d = np.asarray(d, dtype=float)
    f = rig.left.fx if side == "left" else rig.right.fx
    valid = d > DISPARITY_EPS
    out = np.zeros_like(d)
    out[valid] = rig.baseline * f / d[valid]
    return DepthMap(out, valid)


def depth_to_disparity(depth: DepthMap, rig: StereoRig, side: str = "left") -> np.ndarray:
    f = rig.left.fx if side == "left" else rig.right.fx
    out = np.zeros_like(depth.data)
    ok = depth.valid & (depth.data > 0)
    out[ok] = rig.baseline * f / depth.data[ok]
    return out


def sigmoid_to_depth(s, d_min: float, d_max: float):
    """Map a sigmoid activation in [0, 1] onto depth in [d_min, d_max].

    depth = 1 / (a*s + b) with b = 1/d_max and a = 1/d_min - 1/d_max, so
    s=0 gives d_max, s=1 gives d_min, strictly decreasing in between.
    """
    if not (0 < d_min < d_max):
        raise ValueError("need 0 < d_min < d_max")
    b = 1.0 / d_max
    a = 1.0 / d_min - b
    return 1.0 / (a * np.asarray(s, dtype=float) + b)


# --- warping -----------------------------------------------------------------


def warp_by_disparity(source: np.ndarray, d: np.ndarray):
    """Sample source at horizontally shifted coordinates.

    out(x, y) = bilinear(source, x - d(x, y), y).  Returns the warped
    image and a boolean coverage mask (False where the sample coordinate
    falls outside [0, width-1]).  Source may be (h, w) or (h, w, c).
    """
    source = np.asarray(source, dtype=float)
    d = np.asarray(d, dtype=float)
    if source.shape[:2] != d.shape:
        raise DimensionMismatch("source and disparity shapes differ")
    h, w = d.shape
    xs = np.arange(w)[None, :] - d
    coverage = (xs >= 0.0) & (xs <= w - 1.0)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = np.clip(xs - x0, 0.0, 1.0)
    rows = np.arange(h)[:, None]
    if source.ndim == 2:
        warped = (1.0 - frac) * source[rows, x0] + frac * source[rows, x1]
        warped[~coverage] = 0.0
    else:
        warped = (1.0 - frac)[..., None] * source[rows, x0] + frac[..., None] * source[rows, x1]
        warped[~coverage] = 0.0
    return warped, coverage


def upsample_disparity(d: np.ndarray, factor: int) -> np.ndarray:
    """Bilinear upsample by an integer factor; values rescale by the
    factor since disparity is measured in target-resolution pixels."""
    d = np.asarray(d, dtype=float)
    h, w = d.shape
    ys = (np.arange(h * factor) + 0.5) / factor - 0.5
    xs = (np.arange(w * factor) + 0.5) / factor - 0.5
    y0 = np.clip(np.floor(ys), 0, h - 1).astype(int)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0)[None, :]
    top = (1 - fx) * d[np.ix_(y0, x0)] + fx * d[np.ix_(y0, x1)]
    bot = (1 - fx) * d[np.ix_(y1, x0)] + fx * d[np.ix_(y1, x1)]
    return factor * ((1 - fy) * top + fy * bot)


# --- SSIM and per-pixel losses ------------------------------------------------


def _box3_mean(a: np.ndarray) -> np.ndarray:
    """Mean over the 3x3 neighborhood clipped to the image bounds."""
    h, w = a.shape
    total = np.zeros((h, w))
    count = np.zeros((h, w))
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            src = a[max(0, -di):h - max(0, di), max(0, -dj):w - max(0, dj)]
            total[max(0, di):h - max(0, -di), max(0, dj):w - max(0, -dj)] += src
            count[max(0, di):h - max(0, -di), max(0, dj):w - max(0, -dj)] += 1.0
    return total / count


def ssim_block3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Per-pixel SSIM with 3x3 block statistics (borders use the clipped
    window), C1=(0.01)^2 and C2=(0.03)^2 for unit dynamic range."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    _require_same_shape(a, b)
    mu_a = _box3_mean(a)
    mu_b = _box3_mean(b)
    var_a = _box3_mean(a * a) - mu_a * mu_a
    var_b = _box3_mean(b * b) - mu_b * mu_b
    cov = _box3_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def appearance_loss(orig: np.ndarray, recon: np.ndarray, gamma: float = 0.85,
                    mask: np.ndarray | None = None) -> float:
    """Photometric reconstruction cost: mean over pixels of
    gamma/2 * (1 - SSIM) + (1 - gamma) * |orig - recon|.

    Accepts (h, w) or (h, w, c) images (channels averaged per pixel);
    mask restricts the mean to covered pixels.
    """
    orig = np.asarray(orig, dtype=float)
    recon = np.asarray(recon, dtype=float)
    _require_same_shape(orig, recon)
    if orig.ndim == 2:
        channels = [(orig, recon)]
    else:
        channels = [(orig[..., c], recon[..., c]) for c in range(orig.shape[2])]
    per_pixel = np.zeros(orig.shape[:2])
    for ca, cb in channels:
        per_pixel += 0.5 * gamma * (1.0 - ssim_block3(ca, cb)) + (1.0 - gamma) * np.abs(ca - cb)
    per_pixel /= len(channels)
    if mask is not None:
        return float(per_pixel[mask].mean())
    return float(per_pixel.mean())


def smoothness_loss(d: np.ndarray, img: np.ndarray) -> float:
    """Edge-aware smoothness: (1/N) sum |dx d| e^{-|dx I|} + |dy d| e^{-|dy I|}
    with forward differences; the last column/row contributes zero."""
    d = np.asarray(d, dtype=float)
    img = np.asarray(img, dtype=float)
    _require_same_shape(d, img)
    dx_d = np.zeros_like(d)
    dx_d[:, :-1] = np.abs(d[:, 1:] - d[:, :-1])
    dy_d = np.zeros_like(d)
    dy_d[:-1, :] = np.abs(d[1:, :] - d[:-1, :])
    dx_i = np.zeros_like(img)
    dx_i[:, :-1] = np.abs(img[:, 1:] - img[:, :-1])
    dy_i = np.zeros_like(img)
    dy_i[:-1, :] = np.abs(img[1:, :] - img[:-1, :])
    term = dx_d * np.exp(-dx_i) + dy_d * np.exp(-dy_i)
    return float(term.mean())


def lr_consistency_loss(d_l: np.ndarray, d_r: np.ndarray) -> float:
    """Left-right disparity consistency: (1/N) sum |d_r(x) + d_l(x + d_r(x))|
    with bilinear sampling; out-of-range samples are excluded from N."""
    d_l = np.asarray(d_l, dtype=float)
    d_r = np.asarray(d_r, dtype=float)
    _require_same_shape(d_l, d_r)
    h, w = d_r.shape
    xs = np.arange(w)[None, :] + d_r
    in_range = (xs >= 0.0) & (xs <= w - 1.0)
    x0 = np.clip(np.floor(xs), 0, w - 1).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    frac = np.clip(xs - x0, 0.0, 1.0)
    rows = np.arange(h)[:, None]
    sampled = (1.0 - frac) * d_l[rows, x0] + frac * d_l[rows, x1]
    resid = np.abs(d_r + sampled)[in_range]
    return float(resid.mean()) if resid.size else 0.0


def adversarial_objective(scores_real, scores_fake) -> float:
    """Discriminator objective value: E[log s_real] + E[log(1 - s_fake)].

    Always <= 0; maximized as real scores approach 1 and fake scores
    approach 0.  Scores are clamped away from {0, 1} by 1e-7.
    """
    real = np.clip(np.asarray(scores_real, dtype=float), LOG_CLAMP, 1.0 - LOG_CLAMP)
    fake = np.clip(np.asarray(scores_fake, dtype=float), LOG_CLAMP, 1.0 - LOG_CLAMP)
    return float(np.mean(np.log(real)) + np.mean(np.log(1.0 - fake)))


def segmentation_ce(pred_probs: np.ndarray, target: np.ndarray) -> float:
    """Normalized pixel-wise cross-entropy between a predicted class
    distribution (..., k) and a one-hot target of the same shape."""
    pred = np.asarray(pred_probs, dtype=float)
    tgt = np.asarray(target, dtype=float)
    _require_same_shape(pred, tgt)
    flat_pred = pred.reshape(-1, pred.shape[-1])
    flat_tgt = tgt.reshape(-1, tgt.shape[-1])
    if np.any(np.abs(flat_pred.sum(axis=1) - 1.0) > 1e-6):
        raise NotNormalized("prediction rows must sum to 1")
    ce = -(flat_tgt * np.log(np.clip(flat_pred, LOG_CLAMP, None))).sum(axis=1)
    return float(ce.mean())


# --- weighted totals ----------------------------------------------------------


def total_sadepth(scale_components, rec_weight: float = 0.5, gan_weight: float = 0.5,
                  smooth_weight: float = 0.001) -> float:
    """Adversarial multi-scale total.

    scale_components: sequence over scales of ((ap_l, ds_l, gan_l),
    (ap_r, ds_r, gan_r)); lower-resolution maps are upsampled to full
    resolution before their components are evaluated.  The total is
    (1/m) sum_s (L_s_left + L_s_right) / 2 with
    L = rec_weight * (ap + smooth_weight * ds) + gan_weight * gan.
    """
    m = len(scale_components)
    total = 0.0
    for left, right in scale_components:
        per_side = []
        for ap, ds, gan in (left, right):
            per_side.append(rec_weight * (ap + smooth_weight * ds) + gan_weight * gan)
        total += 0.5 * (per_side[0] + per_side[1])
    return total / m


def total_m3depth(ap_l: float, ap_r: float, ds_l: float, ds_r: float,
                  lr_l: float, lr_r: float, gc3d: float,
                  weights: LossWeights = LossWeights()) -> float:
    """2D + 3D total: 1.0*(ap_r+ap_l) + 0.5*(ds_r+ds_l) + 1.0*(lr_r+lr_l)
    + 0.001*gc3d at the default weights."""
    return (weights.ap_2d * (ap_r + ap_l)
            + weights.ds_2d * (ds_r + ds_l)
            + weights.lr_2d * (lr_r + lr_l)
            + weights.gc_3d * gc3d)


def total_sdsnet(depth_scales, seg_ce: float, depth_weight: float = 10.0,
                 seg_weight: float = 1.0, smooth_weight: float = 0.001) -> float:
    """Multi-task total: depth_weight * sum_s (ap_s + smooth_weight*ds_s)
    + seg_weight * seg_ce over the 4 decoder scales."""
    depth = sum(ap + smooth_weight * ds for ap, ds in depth_scales)
    return depth_weight * depth + seg_weight * seg_ce
