"""Point-cloud geometry: normalization, rigid transforms and set metrics.

Clouds are plain ``(n, 3)`` float arrays. Every metric that compares two
sets takes the untouched ``original`` first and the adversarial set second;
the one-sided metrics (Hausdorff, Chamfer, point count) are measured from
each adversarial point to its nearest original point.
"""

import enum
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_cloud


class MetricKind(str, enum.Enum):
    L2_NORM = "l2"
    HAUSDORFF = "hausdorff"
    CHAMFER = "chamfer"
    COUNT_ADDED = "count_added"
    FARTHEST = "farthest"
    CLUSTER_COUNT = "cluster_count"


DIFFERENTIABLE_METRICS = frozenset(
    {MetricKind.L2_NORM, MetricKind.HAUSDORFF, MetricKind.CHAMFER, MetricKind.FARTHEST}
)


class UnsupportedMetricError(ValueError):
    """Raised when a gradient is requested for a counting metric."""


class DegenerateCloudError(ValueError):
    """Raised when a cloud has no spatial extent to normalize."""


def normalize_unit_ball(points):
    """Center a cloud on its centroid and scale its farthest point to norm 1."""
    points = check_cloud(points)
    centered = points - points.mean(axis=0)
    scale = np.sqrt((centered**2).sum(axis=1)).max()
    if not scale > 1e-12:
        raise DegenerateCloudError("cannot normalize a cloud whose points all coincide")
    return centered / scale


# -- rigid transforms --------------------------------------------------------


def _skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]],
    )


def rotation_matrix(rotvec):
    """Rodrigues' formula for an axis-angle vector (angle = vector norm)."""
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta = np.linalg.norm(rotvec)
    if theta < 1e-12:
        return np.eye(3) + _skew(rotvec)
    K = _skew(rotvec / theta)
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


_GENERATORS = np.stack([_skew(e) for e in np.eye(3)])


def _skew_batch(v):
    """Skew matrices for the rows of a (k, 3) array."""
    out = np.zeros((len(v), 3, 3))
    out[:, 0, 1], out[:, 0, 2] = -v[:, 2], v[:, 1]
    out[:, 1, 0], out[:, 1, 2] = v[:, 2], -v[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -v[:, 1], v[:, 0]
    return out


def rotation_matrix_derivatives(rotvec, R=None):
    """Return ``dR[i] = dR/d rotvec[i]`` as a (3, 3, 3) array.

    Uses the closed form of Gallego and Yezzi for the exponential map, with
    the generators themselves at the origin.
    """
    rotvec = np.asarray(rotvec, dtype=np.float64)
    theta2 = float(rotvec @ rotvec)
    if theta2 < 1e-20:
        return _GENERATORS.copy()
    if R is None:
        R = rotation_matrix(rotvec)
    # column i of (I - R) crossed with rotvec, for all i at once
    c = (np.eye(3) - R).T
    a0, a1, a2 = rotvec
    w = np.column_stack(
        [a1 * c[:, 2] - a2 * c[:, 1], a2 * c[:, 0] - a0 * c[:, 2], a0 * c[:, 1] - a1 * c[:, 0]]
    )
    left = rotvec[:, None, None] * _skew(rotvec)[None] + _skew_batch(w)
    return left @ R / theta2


@dataclass(frozen=True)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", np.asarray(self.rotation, dtype=np.float64).reshape(3))
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64).reshape(3))

    @property
    def matrix(self):
        return rotation_matrix(self.rotation)

    def is_identity(self):
        return not self.rotation.any() and not self.translation.any()


def apply_transform(points, transform):
    """Rotate every point about the origin, then translate."""
    points = check_cloud(points)
    if transform.is_identity():
        return points.copy()
    return points @ transform.matrix.T + transform.translation


# -- nearest neighbours ------------------------------------------------------


def _sq_dists(a, b):
    diff = a[:, None, :] - b[None, :, :]
    return (diff**2).sum(axis=2)


def nearest_original(original, adversarial):
    """For each adversarial point return (index of nearest original, squared distance).

    Candidates come from the fast expanded inner-product form. Rows where
    several originals fall within its rounding error are re-ranked on exact
    coordinate differences, so the result matches an exhaustive search
    (lowest index on exact ties) and coincident points give exactly zero.
    """
    sq_o = (original**2).sum(axis=1)
    approx = sq_o[None, :] - 2.0 * (adversarial @ original.T)
    idx = np.argmin(approx, axis=1)
    rows = np.arange(len(adversarial))
    tol = 16 * np.finfo(float).eps * (sq_o.max() + (adversarial**2).sum(axis=1))
    close = approx <= (approx[rows, idx] + tol)[:, None]
    for i in np.flatnonzero(close.sum(axis=1) > 1):
        cand = np.flatnonzero(close[i])
        d2 = ((original[cand] - adversarial[i]) ** 2).sum(axis=1)
        idx[i] = cand[np.argmin(d2)]
    diff = adversarial - original[idx]
    return idx, (diff**2).sum(axis=1)


def group_chamfer(original, added, k):
    """Chamfer value and gradient of each of ``k`` equal-size consecutive groups of ``added``."""
    idx, d2 = nearest_original(original, added)
    m = len(added) // k
    values = d2.reshape(k, m).mean(axis=1)
    return values, 2.0 * (added - original[idx]) / m


def group_farthest(groups):
    """Farthest distance and its gradient for a (k, m, 3) stack of groups."""
    k, m, _ = groups.shape
    diff = groups[:, :, None, :] - groups[:, None, :, :]
    d2 = (diff**2).sum(axis=3).reshape(k, m * m)
    flat = np.argmax(d2, axis=1)
    best = d2[np.arange(k), flat]
    i, j = np.divmod(flat, m)
    grad = np.zeros_like(groups)
    ok = best > 0
    rows = np.arange(k)[ok]
    u = (groups[rows, i[ok]] - groups[rows, j[ok]]) / np.sqrt(best[ok])[:, None]
    grad[rows, i[ok]] = u
    grad[rows, j[ok]] = -u
    return np.sqrt(best), grad


def _pair(original, adversarial):
    original = check_cloud(original, "original")
    adversarial = check_cloud(adversarial, "adversarial")
    return original, adversarial


# -- metrics -----------------------------------------------------------------


def lp_perturbation(original, perturbed, p=2):
    """Euclidean norm of the flattened 3n-vector of coordinate differences."""
    if p != 2:
        raise ValueError("only p=2 is supported")
    original, perturbed = _pair(original, perturbed)
    if original.shape != perturbed.shape:
        raise ValueError(
            f"perturbation needs index-wise correspondence, got {original.shape[0]} "
            f"and {perturbed.shape[0]} points"
        )
    return float(np.sqrt(((perturbed - original) ** 2).sum()))


def hausdorff(original, adversarial):
    """One-sided: max over adversarial points of the squared nearest distance."""
    original, adversarial = _pair(original, adversarial)
    return float(nearest_original(original, adversarial)[1].max())


def chamfer(original, adversarial):
    """Mean over adversarial points of the squared nearest distance."""
    original, adversarial = _pair(original, adversarial)
    return float(nearest_original(original, adversarial)[1].mean())


def count_added(original, added, t_thre=0.01):
    """Number of added points farther than ``t_thre`` (unsquared) from the original."""
    if t_thre < 0:
        raise ValueError("t_thre must be non-negative")
    original, added = _pair(original, added)
    d2 = nearest_original(original, added)[1]
    return int(np.count_nonzero(np.sqrt(d2) > t_thre))


def farthest_distance(cluster):
    """Largest pairwise Euclidean distance inside one point set."""
    cluster = check_cloud(cluster, "cluster")
    return float(np.sqrt(_sq_dists(cluster, cluster).max()))


def cluster_count(groups):
    """Number of non-empty added groups (clusters or objects)."""
    return sum(1 for g in groups if len(g))


def metric_value(kind, original, adversarial, t_thre=0.01):
    """Evaluate any pairwise metric by kind; ``original`` is ignored for FARTHEST."""
    kind = MetricKind(kind)
    if kind is MetricKind.L2_NORM:
        return lp_perturbation(original, adversarial)
    if kind is MetricKind.HAUSDORFF:
        return hausdorff(original, adversarial)
    if kind is MetricKind.CHAMFER:
        return chamfer(original, adversarial)
    if kind is MetricKind.COUNT_ADDED:
        return count_added(original, adversarial, t_thre)
    if kind is MetricKind.FARTHEST:
        return farthest_distance(adversarial)
    raise UnsupportedMetricError(f"{kind.value} is not a pairwise metric; use cluster_count(groups)")


def metric_gradient(kind, original, adversarial):
    """Gradient of a metric with respect to every adversarial point.

    Ties in min/max are resolved towards the lowest index, so only that
    point (or pair) receives gradient.
    """
    kind = MetricKind(kind)
    if kind not in DIFFERENTIABLE_METRICS:
        raise UnsupportedMetricError(f"{kind.value} has no gradient")
    if kind is MetricKind.FARTHEST:
        return _farthest_gradient(check_cloud(adversarial, "cluster"))
    original, adversarial = _pair(original, adversarial)
    if kind is MetricKind.L2_NORM:
        if original.shape != adversarial.shape:
            raise ValueError("perturbation needs index-wise correspondence")
        delta = adversarial - original
        norm = np.sqrt((delta**2).sum())
        return delta / norm if norm > 0 else np.zeros_like(delta)
    idx, d2 = nearest_original(original, adversarial)
    diff = adversarial - original[idx]
    if kind is MetricKind.CHAMFER:
        return 2.0 * diff / len(adversarial)
    grad = np.zeros_like(adversarial)
    j = int(np.argmax(d2))
    grad[j] = 2.0 * diff[j]
    return grad


def _farthest_gradient(cluster):
    d2 = _sq_dists(cluster, cluster)
    flat = int(np.argmax(d2))
    i, j = divmod(flat, len(cluster))
    grad = np.zeros_like(cluster)
    if d2[i, j] > 0:
        u = (cluster[i] - cluster[j]) / np.sqrt(d2[i, j])
        grad[i] = u
        grad[j] = -u
    return grad
