"""Sensing-area detection as regression: probe-axis sampling, a compact
block-mean image descriptor, a small MLP trained from scratch with exact
backprop, and prediction of the 2D axis/tissue intersection point.

Pixel coordinates are normalized by the image width on the way into the
network and scaled back on the way out.  The descriptor is computed on a
single grayscale channel chosen by the caller; the pipeline uses the
green channel, which the laser spot (red only) never touches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyMask, NotElongated, ShapeMismatch

AXIS_POINTS = 50
LEAKY_SLOPE = 0.01


@dataclass
class AxisSample:
    """Exactly 50 points along the probe axis in the image, evenly
    spaced between the extreme projections of the mask."""

    points: np.ndarray  # (50, 2)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if len(self.points) != AXIS_POINTS:
            raise ShapeMismatch(f"axis sample needs {AXIS_POINTS} points")


@dataclass
class TrainConfig:
    # published schedule kept as the record; desk runs pass smaller ones
    learning_rate: float = 1e-5
    epochs: int = 700
    batch_size: int = 12
    seed: int = 0
    lr_halve_epoch: int = 300
    lr_quarter_epoch: int = 400

    def lr_at(self, epoch: int) -> float:
        if epoch >= self.lr_quarter_epoch:
            return 0.25 * self.learning_rate
        if epoch >= self.lr_halve_epoch:
            return 0.5 * self.learning_rate
        return self.learning_rate


def sample_axis(probe_mask: np.ndarray) -> AxisSample:
    """Central axis of a binary probe mask via PCA, sampled at 50 points.

    Requires an elongated mask (principal eigenvalue ratio >= 4).
    """
    mask = np.asarray(probe_mask, dtype=bool)
    vs, us = np.nonzero(mask)
    if len(us) == 0:
        raise EmptyMask("probe mask is empty")
    pts = np.column_stack([us, vs]).astype(float)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / len(pts)
    w, v = np.linalg.eigh(cov)
    if w[0] > 1e-12 and w[1] / w[0] < 4.0:
        raise NotElongated(f"eigenvalue ratio {w[1] / max(w[0], 1e-12):.2f} < 4")
    direction = v[:, 1]
    if direction[0] < 0 or (direction[0] == 0 and direction[1] < 0):
        direction = -direction
    proj = centered @ direction
    ts = np.linspace(proj.min(), proj.max(), AXIS_POINTS)
    return AxisSample(centroid + ts[:, None] * direction[None, :])


def image_descriptor(img: np.ndarray, grid: int = 16) -> np.ndarray:
    """Block-mean downsampling to grid x grid, flattened row-major."""
    if grid < 2:
        raise ValueError("grid must be >= 2")
    img = np.asarray(img, dtype=float)
    h, w = img.shape
    out = np.empty(grid * grid)
    ye = [h * i // grid for i in range(grid + 1)]
    xe = [w * j // grid for j in range(grid + 1)]
    for i in range(grid):
        for j in range(grid):
            out[i * grid + j] = img[ye[i]:ye[i + 1], xe[j]:xe[j + 1]].mean()
    return out


class Mlp:
    """Fully connected net, leaky-rectifier hidden units (slope 0.01),
    identity output."""

    def __init__(self, layer_sizes, seed: int = 0):
        self.layer_sizes = list(layer_sizes)
        rng = np.random.default_rng(seed)
        self.weights = []
        self.biases = []
        for n_in, n_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(rng.normal(0.0, np.sqrt(2.0 / n_in), size=(n_out, n_in)))
            self.biases.append(np.zeros(n_out))


def _leaky(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, z, LEAKY_SLOPE * z)


def _leaky_grad(z: np.ndarray) -> np.ndarray:
    return np.where(z > 0, 1.0, LEAKY_SLOPE)


def mlp_forward(net: Mlp, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.layer_sizes[0],):
        raise ShapeMismatch(f"input length {x.shape} != {net.layer_sizes[0]}")
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = z if i == last else _leaky(z)
    return a


def mlp_backward(net: Mlp, x: np.ndarray, target: np.ndarray):
    """Exact gradients of 0.5 * ||out - target||^2 for all parameters.

    Returns (weight grads, bias grads, loss).
    """
    x = np.asarray(x, dtype=float)
    target = np.asarray(target, dtype=float)
    if x.shape != (net.layer_sizes[0],):
        raise ShapeMismatch("input length mismatch")
    activations = [x]
    zs = []
    a = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        zs.append(z)
        a = z if i == last else _leaky(z)
        activations.append(a)
    out = activations[-1]
    loss = 0.5 * float(np.sum((out - target) ** 2))
    delta = out - target
    grads_w = [None] * len(net.weights)
    grads_b = [None] * len(net.weights)
    for i in range(last, -1, -1):
        grads_w[i] = np.outer(delta, activations[i])
        grads_b[i] = delta.copy()
        if i > 0:
            delta = (net.weights[i].T @ delta) * _leaky_grad(zs[i - 1])
    return grads_w, grads_b, loss


def train(dataset, cfg: TrainConfig, hidden=(128, 64)):
    """Mini-batch gradient descent with the piecewise learning-rate
    schedule (halve, then quarter).  Returns (net, per-epoch mean loss).
    """
    if len(dataset) == 0:
        raise ShapeMismatch("empty dataset")
    x0 = np.asarray(dataset[0][0], dtype=float)
    y0 = np.asarray(dataset[0][1], dtype=float)
    sizes = [len(x0), *hidden, len(y0)]
    net = Mlp(sizes, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    xs = [np.asarray(x, dtype=float) for x, _ in dataset]
    ys = [np.asarray(y, dtype=float) for _, y in dataset]
    curve = []
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(len(xs))
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            acc_w = [np.zeros_like(w) for w in net.weights]
            acc_b = [np.zeros_like(b) for b in net.biases]
            for idx in batch:
                gw, gb, loss = mlp_backward(net, xs[idx], ys[idx])
                epoch_loss += loss
                for k in range(len(acc_w)):
                    acc_w[k] += gw[k]
                    acc_b[k] += gb[k]
            scale = lr / len(batch)
            for k in range(len(net.weights)):
                net.weights[k] -= scale * acc_w[k]
                net.biases[k] -= scale * acc_b[k]
        curve.append(epoch_loss / len(xs))
    return net, curve


def build_features(descriptor_img: np.ndarray, axis: AxisSample, width: int,
                   grid: int = 16) -> np.ndarray:
    """Network input: image descriptor then the flattened axis points
    normalized by the image width."""
    desc = image_descriptor(descriptor_img, grid)
    return np.concatenate([desc, (axis.points / float(width)).ravel()])


def predict_intersection(net: Mlp, descriptor_img: np.ndarray, axis: AxisSample,
                         grid: int = 16) -> np.ndarray:
    """Predicted 2D intersection point, clamped into the image bounds."""
    h, w = np.asarray(descriptor_img).shape
    features = build_features(descriptor_img, axis, w, grid)
    out = mlp_forward(net, features) * float(w)
    return np.array([
        float(np.clip(out[0], 0.0, w - 1.0)),
        float(np.clip(out[1], 0.0, h - 1.0)),
    ])


def save_mlp(path: str, net: Mlp) -> None:
    """Plain text: layer sizes header, then row-major weight and bias
    decimals, one layer per block."""
    lines = [" ".join(str(s) for s in net.layer_sizes)]
    for w, b in zip(net.weights, net.biases):
        lines.append(" ".join(repr(float(x)) for x in w.ravel()))
        lines.append(" ".join(repr(float(x)) for x in b))
    from .imgio import _atomic_write

    _atomic_write(path, ("\n".join(lines) + "\n").encode())


def load_mlp(path: str) -> Mlp:
    with open(path) as f:
        lines = [line.strip() for line in f if line.strip()]
    sizes = [int(tok) for tok in lines[0].split()]
    net = Mlp(sizes, seed=0)
    row = 1
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        net.weights[i] = np.array([float(t) for t in lines[row].split()]).reshape(n_out, n_in)
        net.biases[i] = np.array([float(t) for t in lines[row + 1].split()])
        row += 2
    return net
