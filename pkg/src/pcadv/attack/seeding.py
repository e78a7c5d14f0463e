"""Initial points for generation attacks, taken from model critical points."""

import numpy as np

from .._validation import check_cloud
from ..model import critical_points
from .config import ClusterSeed
from .dbscan import dbscan

PAD_JITTER = 0.01


class SeedingError(RuntimeError):
    """DBSCAN found fewer dense regions than requested."""


def critical_coordinates(params, cloud):
    """One initial point per critical point of ``cloud`` (lowest index first)."""
    cloud = check_cloud(cloud)
    return cloud[critical_points(params, cloud).indices].copy()


def pooled_critical_points(params, target_examples, cfg, rng):
    """Top critical points (by channel count) of up to ``n_target_objects`` random examples."""
    n = len(target_examples)
    if n == 0:
        raise ValueError("need at least one target-class example")
    chosen = rng.choice(n, size=min(cfg.n_target_objects, n), replace=False)
    pooled = []
    for i in chosen:
        cloud = check_cloud(target_examples[i])
        top = critical_points(params, cloud).top(cfg.critical_per_object)
        pooled.append(cloud[top])
    return np.vstack(pooled)


def _fill(members, m, rng):
    """Exactly ``m`` points: a subsample, or all members padded by jittered resampling."""
    center = members.mean(axis=0)
    radius = float(np.sqrt(((members - center) ** 2).sum(axis=1)).max())
    if len(members) >= m:
        pts = members[rng.choice(len(members), size=m, replace=False)]
    else:
        extra = members[rng.integers(0, len(members), size=m - len(members))]
        extra = extra + rng.normal(0.0, PAD_JITTER, size=extra.shape)
        off = extra - center
        norm = np.sqrt((off**2).sum(axis=1))
        # pull jittered copies back inside the cluster's bounding sphere
        over = norm > radius
        off[over] *= (radius / norm[over])[:, None]
        pts = np.vstack([members, center + off])
    return ClusterSeed(center, pts, radius)


def vulnerable_regions(params, target_examples, k, cfg, rng=None):
    """Seeds for the ``k`` largest DBSCAN clusters of pooled target-class critical points."""
    if k < 1:
        raise ValueError("k must be at least 1")
    if rng is None:
        rng = np.random.default_rng([cfg.seed, cfg.target, 7])
    pooled = pooled_critical_points(params, target_examples, cfg, rng)
    clustering = dbscan(pooled, cfg.dbscan_eps, cfg.dbscan_min_pts)
    sizes = clustering.sizes()
    if len(sizes) < k:
        raise SeedingError(
            f"DBSCAN found {len(sizes)} cluster(s) but k={k} were requested; "
            f"relax the clustering (larger eps={cfg.dbscan_eps} or smaller min_pts={cfg.dbscan_min_pts})"
        )
    order = np.lexsort((np.arange(len(sizes)), -sizes))[:k]
    return [_fill(pooled[clustering.labels == c], cfg.points_per_cluster, rng) for c in order]
