"""Miniature PointNet: shared per-point MLP, global max-pool, MLP head.

All parameters live on the float32 grid (stored as float64) so checkpoints
round-trip bit-exactly while arithmetic runs in double precision.
"""

import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_class_id, check_cloud, check_clouds

DEFAULT_POINT_WIDTHS = (32, 64, 128)
DEFAULT_HEAD_WIDTHS = (64,)


@dataclass(frozen=True)
class ModelParams:
    """Weights as ``(W, b)`` pairs with ``W`` shaped (fan_in, fan_out)."""

    per_point: tuple
    head: tuple
    n_points: int = 0

    def __post_init__(self):
        widths = [3]
        for W, b in self.per_point + self.head:
            if W.shape != (widths[-1], b.shape[0]):
                raise ValueError(f"layer shape {W.shape} does not chain from width {widths[-1]}")
            widths.append(W.shape[1])
        if not self.per_point or not self.head:
            raise ValueError("need at least one per-point and one head layer")

    @property
    def n_classes(self):
        return self.head[-1][0].shape[1]

    @property
    def feature_width(self):
        return self.per_point[-1][0].shape[1]

    @property
    def point_widths(self):
        return tuple(W.shape[1] for W, _ in self.per_point)

    @property
    def head_widths(self):
        return tuple(W.shape[1] for W, _ in self.head[:-1])

    def arrays(self):
        """Flat list ``[W0, b0, W1, b1, ...]`` in layer order."""
        return [a for layer in self.per_point + self.head for a in layer]

    def with_arrays(self, arrays):
        arrays = list(arrays)
        k = 2 * len(self.per_point)
        pairs = [(arrays[i], arrays[i + 1]) for i in range(0, len(arrays), 2)]
        return ModelParams(tuple(pairs[: k // 2]), tuple(pairs[k // 2:]), self.n_points)


def to_float32_grid(a):
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def init_params(n_classes, point_widths=DEFAULT_POINT_WIDTHS, head_widths=DEFAULT_HEAD_WIDTHS, seed=0):
    """He-normal weights, zero biases."""
    rng = np.random.default_rng(seed)
    widths = [3, *point_widths, *head_widths, n_classes]
    layers = []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        W = to_float32_grid(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        layers.append((W, np.zeros(fan_out)))
    n_pp = len(point_widths)
    return ModelParams(tuple(layers[:n_pp]), tuple(layers[n_pp:]))


def _matmul(h, W):
    # a single row would dispatch to gemv, whose rounding differs from the
    # gemm kernel used for larger blocks; keep every row on the gemm path
    if h.shape[0] == 1:
        return (np.vstack([h, h]) @ W)[:1]
    return h @ W


def point_activations(params, points):
    """Post-ReLU activations of every per-point layer, input first."""
    acts = [points]
    h = points
    for W, b in params.per_point:
        h = _matmul(h, W)
        h += b
        np.maximum(h, 0.0, out=h)
        acts.append(h)
    return acts


def _head_forward(params, g):
    """Run the head on a (batch, width) block; returns logits and the inputs of each layer."""
    inputs = []
    h = g
    last = len(params.head) - 1
    for i, (W, b) in enumerate(params.head):
        inputs.append(h)
        h = _matmul(h, W) + b
        if i < last:
            h = np.maximum(h, 0.0)
    return h, inputs


def _head_backward(params, inputs, dlogits):
    """Backprop through the head; returns (grad wrt pooled features, [(dW, db), ...])."""
    grads = []
    d = dlogits
    for i in range(len(params.head) - 1, -1, -1):
        W, _ = params.head[i]
        h = inputs[i]
        grads.append((h.T @ d, d.sum(axis=0)))
        d = d @ W.T
        if i > 0:
            d = d * (h > 0)
    return d, grads[::-1]


def _pool(features):
    idx = np.argmax(features, axis=0)
    return features[idx, np.arange(features.shape[1])], idx


def forward(params, cloud):
    """Logits for one cloud; invariant to point order."""
    cloud = check_cloud(cloud)
    g, _ = _pool(point_activations(params, cloud)[-1])
    return _head_forward(params, g[None, :])[0][0]


def forward_batch(params, clouds):
    """Logits for a (b, n, 3) batch, row-for-row identical to :func:`forward`."""
    clouds = check_clouds(clouds)
    b, n, _ = clouds.shape
    feats = point_activations(params, clouds.reshape(b * n, 3))[-1]
    g = feats.reshape(b, n, -1).max(axis=1)
    return _head_forward(params, g)[0]


def predict(params, cloud):
    return int(np.argmax(forward(params, cloud)))


def adversarial_loss(logits, target):
    """Targeted hinge ``max(max_{i != t} Z_i - Z_t, 0)`` and its gradient wrt the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    target = check_class_id(target, logits.shape[0])
    others = logits.copy()
    others[target] = -np.inf
    j = int(np.argmax(others))
    value = logits[j] - logits[target]
    grad = np.zeros_like(logits)
    if value <= 0:
        return 0.0, grad
    grad[j] = 1.0
    grad[target] = -1.0
    return float(value), grad


def _backprop_rows(params, acts, rows, d):
    """Push a gradient on the pooled layer's rows ``rows`` back to their input points."""
    for layer in range(len(params.per_point), 0, -1):
        W, _ = params.per_point[layer - 1]
        d = (d * (acts[layer][rows] > 0)) @ W.T
    return d


def _pooled_grad_to_points(params, acts, idx, dg, n):
    rows = np.unique(idx)
    d = np.zeros((len(rows), dg.shape[0]))
    d[np.searchsorted(rows, idx), np.arange(dg.shape[0])] = dg
    grad = np.zeros((n, 3))
    grad[rows] = _backprop_rows(params, acts, rows, d)
    return grad


def loss_and_input_gradient(params, cloud, target):
    """Hinge value, logits and per-point gradient in a single pass."""
    acts = point_activations(params, cloud)
    g, idx = _pool(acts[-1])
    logits, inputs = _head_forward(params, g[None, :])
    logits = logits[0]
    f, dlogits = adversarial_loss(logits, target)
    if f == 0.0:
        return f, logits, np.zeros_like(cloud)
    dg, _ = _head_backward(params, inputs, dlogits[None, :])
    return f, logits, _pooled_grad_to_points(params, acts, idx, dg[0], len(cloud))


def input_gradient(params, cloud, target):
    """Gradient of the targeted hinge loss with respect to every point."""
    cloud = check_cloud(cloud)
    check_class_id(target, params.n_classes)
    return loss_and_input_gradient(params, cloud, target)[2]


def pooled_features(params, cloud):
    return _pool(point_activations(params, check_cloud(cloud))[-1])[0]


def loss_and_added_gradient(params, base_pooled, added, target):
    """Hinge value, logits and gradient for ``added`` points joined to a fixed cloud.

    ``base_pooled`` is the max-pooled feature vector of the fixed cloud. The
    added points are treated as coming first in the joint input, so a tie
    between an added point and a fixed point credits the added one.
    """
    acts = point_activations(params, added)
    zmax, idx = _pool(acts[-1])
    own = zmax >= base_pooled
    g = np.where(own, zmax, base_pooled)
    logits, inputs = _head_forward(params, g[None, :])
    logits = logits[0]
    f, dlogits = adversarial_loss(logits, target)
    if f == 0.0 or not own.any():
        return f, logits, np.zeros_like(added)
    dg, _ = _head_backward(params, inputs, dlogits[None, :])
    dg = np.where(own, dg[0], 0.0)
    return f, logits, _pooled_grad_to_points(params, acts, idx, dg, len(added))


def softmax_cross_entropy(logits, labels):
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(len(labels)), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(len(labels)), labels] -= 1.0
    return float(loss), dlogits / len(labels)


def param_gradient(params, clouds, labels):
    """Mean softmax cross-entropy over a batch and its gradient for every array.

    Returns ``(loss, grads)`` with ``grads`` ordered like :meth:`ModelParams.arrays`.
    """
    clouds = check_clouds(clouds)
    labels = np.asarray(labels)
    if labels.shape != (clouds.shape[0],):
        raise ValueError("need exactly one label per cloud")
    if labels.min() < 0 or labels.max() >= params.n_classes:
        raise ValueError(f"labels must lie in [0, {params.n_classes})")
    b, n, _ = clouds.shape
    acts = point_activations(params, clouds.reshape(b * n, 3))
    width = params.feature_width
    feats = acts[-1].reshape(b, n, width)
    idx = np.argmax(feats, axis=1)
    g = np.take_along_axis(feats, idx[:, None, :], axis=1)[:, 0, :]
    logits, inputs = _head_forward(params, g)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    dg, head_grads = _head_backward(params, inputs, dlogits)

    d = np.zeros((b, n, width))
    np.put_along_axis(d, idx[:, None, :], dg[:, None, :], axis=1)
    d = d.reshape(b * n, width)
    point_grads = []
    for layer in range(len(params.per_point), 0, -1):
        W, _ = params.per_point[layer - 1]
        d = d * (acts[layer] > 0)
        point_grads.append((acts[layer - 1].T @ d, d.sum(axis=0)))
        if layer > 1:
            d = d @ W.T
    grads = [a for pair in point_grads[::-1] + head_grads for a in pair]
    return loss, grads


@dataclass(frozen=True)
class CriticalPointSet:
    """Points credited with at least one pooled channel, with their channel counts."""

    indices: np.ndarray
    channel_counts: np.ndarray

    def top(self, k):
        """Indices of the ``k`` points with the most channels (lower index first on ties)."""
        order = np.lexsort((self.indices, -self.channel_counts))
        return self.indices[order[:k]]


def critical_points(params, cloud):
    cloud = check_cloud(cloud)
    _, idx = _pool(point_activations(params, cloud)[-1])
    counts = np.bincount(idx, minlength=len(cloud))
    indices = np.flatnonzero(counts)
    return CriticalPointSet(indices, counts[indices])


# -- checkpoint file ---------------------------------------------------------

_MAGIC = b"PCADVCKP"
_VERSION = 1


def save_checkpoint(path, params):
    """Binary layout: magic, version, n_points, layer counts, widths, then f32 blocks."""
    point_dims = [3, *params.point_widths]
    head_dims = [params.feature_width, *params.head_widths, params.n_classes]
    parts = [
        _MAGIC,
        struct.pack("<IIII", _VERSION, params.n_points, len(params.per_point), len(params.head)),
        struct.pack(f"<{len(point_dims)}I", *point_dims),
        struct.pack(f"<{len(head_dims)}I", *head_dims),
    ]
    for arr in params.arrays():
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[: len(_MAGIC)] != _MAGIC:
        raise ValueError(f"{path}: not a model checkpoint")
    pos = len(_MAGIC)
    try:
        version, n_points, n_pp, n_head = struct.unpack_from("<IIII", data, pos)
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        pos += 16
        point_dims = struct.unpack_from(f"<{n_pp + 1}I", data, pos)
        pos += 4 * (n_pp + 1)
        head_dims = struct.unpack_from(f"<{n_head + 1}I", data, pos)
        pos += 4 * (n_head + 1)
    except struct.error:
        raise ValueError(f"{path}: truncated checkpoint header") from None

    def block(shape):
        nonlocal pos
        size = int(np.prod(shape)) * 4
        if pos + size > len(data):
            raise ValueError(f"{path}: truncated weight block")
        arr = np.frombuffer(data, dtype="<f4", count=int(np.prod(shape)), offset=pos)
        pos += size
        return arr.reshape(shape).astype(np.float64)

    def layers(dims):
        return tuple((block((a, b)), block((b,))) for a, b in zip(dims[:-1], dims[1:]))

    per_point = layers(point_dims)
    head = layers(head_dims)
    if pos != len(data):
        raise ValueError(f"{path}: trailing bytes after weights")
    return ModelParams(per_point, head, n_points)
