from dataclasses import dataclass, field, replace

import numpy as np

from ..geometry import MetricKind

ATTACK_KINDS = ("perturb", "points", "clusters", "objects")

_KIND_DEFAULTS = {
    "perturb": {"metric": MetricKind.L2_NORM.value, "search_steps": 10},
    "points": {"metric": MetricKind.CHAMFER.value, "search_steps": 10},
    "clusters": {"metric": MetricKind.FARTHEST.value, "search_steps": 5, "mu": 0.1},
    "objects": {"metric": MetricKind.L2_NORM.value, "search_steps": 5, "mu": 0.2},
}


@dataclass(frozen=True)
class AttackConfig:
    """Every knob of a single targeted attack job.

    ``metric`` only matters for the independent-points attack, where it picks
    Hausdorff or Chamfer as the distance term. ``init_from`` chooses whose
    critical points seed that attack: the victim's or target-class examples'.
    """

    target: int = 0
    metric: str = MetricKind.L2_NORM.value
    lambda_init: float = 10.0
    lambda_lo: float = 1e-3
    lambda_hi: float = 1e4
    search_steps: int = 10
    inner_iters: int = 500
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    mu: float = 0.1
    k: int = 1
    points_per_cluster: int = 32
    template: np.ndarray = field(default=None, repr=False, compare=False)
    seed: int = 0
    t_thre: float = 0.01
    init_from: str = "victim"
    dbscan_eps: float = 0.15
    dbscan_min_pts: int = 4
    n_target_objects: int = 8
    critical_per_object: int = 32
    template_shape: str = "cross"
    template_points: int = 64
    template_scale: float = 0.3

    def __post_init__(self):
        if self.search_steps < 1:
            raise ValueError("search_steps must be at least 1")
        if not 0 < self.lambda_lo <= self.lambda_hi:
            raise ValueError("need 0 < lambda_lo <= lambda_hi")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if not 1 <= self.k <= 3:
            raise ValueError("k must lie in 1..3")
        if self.inner_iters < 0 or self.points_per_cluster < 1:
            raise ValueError("inner_iters must be >= 0 and points_per_cluster >= 1")
        if self.init_from not in ("victim", "target"):
            raise ValueError("init_from must be 'victim' or 'target'")
        MetricKind(self.metric)

    @classmethod
    def for_kind(cls, kind, **overrides):
        if kind not in _KIND_DEFAULTS:
            raise ValueError(f"unknown attack kind {kind!r}; expected one of {ATTACK_KINDS}")
        return cls(**{**_KIND_DEFAULTS[kind], **overrides})

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class ClusterSeed:
    center: np.ndarray
    initial_points: np.ndarray
    radius: float = 0.0


@dataclass
class AttackResult:
    """Outcome of one (victim, target) job.

    Perturbation results store the shifted cloud in ``adversarial``;
    generation results keep the victim untouched in ``original`` and the new
    points in ``added`` (grouped per cluster/object in ``groups``).
    """

    kind: str
    target: int
    original: np.ndarray
    success: bool
    best_lambda: float = float("nan")
    distance: float = float("nan")
    adversarial: np.ndarray = None
    added: np.ndarray = None
    groups: list = None
    transforms: list = None
    deltas: list = None
    metrics: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    @property
    def union(self):
        """The full cloud fed to the model, original points first."""
        if self.adversarial is not None:
            return self.adversarial
        if self.added is None:
            return None
        return np.vstack([self.original, self.added])
