"""Density-based clustering over 3D points (exhaustive neighbourhoods)."""

from dataclasses import dataclass

import numpy as np

from .._validation import check_cloud

NOISE = -1


@dataclass(frozen=True)
class Clustering:
    labels: np.ndarray  # cluster id per point, NOISE for outliers
    core: np.ndarray  # bool mask of core points

    @property
    def n_clusters(self):
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def sizes(self):
        return np.bincount(self.labels[self.labels >= 0], minlength=self.n_clusters)


def dbscan(points, eps, min_pts):
    """Label points by density reachability.

    A point is core when at least ``min_pts`` points (itself included) lie
    within distance ``eps``. Clusters are grown from unlabeled core points in
    index order, so a border point reachable from two clusters joins the one
    started first.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    points = check_cloud(points, "points", allow_empty=True)
    n = len(points)
    diff = points[:, None, :] - points[None, :, :]
    within = np.sqrt((diff**2).sum(axis=2)) <= eps
    neighbors = [np.flatnonzero(row) for row in within]
    core = within.sum(axis=1) >= min_pts
    labels = np.full(n, NOISE)
    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        stack = [i]
        while stack:
            j = stack.pop()
            if not core[j]:
                continue
            for q in neighbors[j]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    stack.append(q)
        cluster += 1
    return Clustering(labels, core)
