"""scikit-learn compatible wrappers around the functional core."""

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_cloud, check_clouds
from .attack import AttackConfig, run_attack
from .geometry import normalize_unit_ball
from .model import DEFAULT_HEAD_WIDTHS, DEFAULT_POINT_WIDTHS, ModelParams, critical_points, forward_batch
from .train import Dataset, TrainConfig, predict_batch, train_model


class UnitBallNormalizer(TransformerMixin, BaseEstimator):
    """Center each cloud on its centroid and scale its farthest point to norm 1.

    Stateless; ``fit`` only records the expected number of points per cloud.
    """

    def fit(self, X, y=None):
        X = check_clouds(X)
        self.n_points_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_points_in_")
        X = check_clouds(X)
        return np.stack([normalize_unit_ball(c) for c in X])


class PointNetClassifier(ClassifierMixin, BaseEstimator):
    """Shared per-point MLP, max-pool and MLP head, trained with Adam.

    Parameters
    ----------
    point_widths : tuple of int, default=(32, 64, 128)
        Widths of the shared per-point layers; the last is the global feature width.
    head_widths : tuple of int, default=(64,)
        Hidden widths of the classifier head.
    epochs, batch_size, learning_rate, beta1, beta2, eps
        Optimizer settings, see :class:`pcadv.train.TrainConfig`.
    random_state : int, default=0
        Seed for initialization and batch order.

    Attributes
    ----------
    params_ : ModelParams
    classes_ : ndarray of shape (n_classes,)
    loss_curve_ : list of float
        Mean training loss per epoch.
    """

    def __init__(
        self,
        point_widths=DEFAULT_POINT_WIDTHS,
        head_widths=DEFAULT_HEAD_WIDTHS,
        epochs=40,
        batch_size=16,
        learning_rate=1e-3,
        beta1=0.9,
        beta2=0.999,
        eps=1e-8,
        random_state=0,
    ):
        self.point_widths = point_widths
        self.head_widths = head_widths
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.random_state = random_state

    def fit(self, X, y):
        X = check_clouds(X)
        self.classes_, y_enc = np.unique(np.asarray(y), return_inverse=True)
        cfg = TrainConfig(
            self.epochs, self.batch_size, self.learning_rate, self.beta1, self.beta2, self.eps,
            self.random_state, tuple(self.point_widths), tuple(self.head_widths),
        )
        data = Dataset(X, y_enc, np.full(len(X), "train"), tuple(str(c) for c in self.classes_))
        self.loss_curve_ = []
        self.params_ = train_model(data, cfg, self.loss_curve_)
        self.n_points_in_ = X.shape[1]
        return self

    @classmethod
    def from_params(cls, params, classes=None):
        """Wrap already trained parameters (e.g. a loaded checkpoint)."""
        est = cls(point_widths=params.point_widths, head_widths=params.head_widths)
        est.params_ = params
        est.classes_ = np.arange(params.n_classes) if classes is None else np.asarray(classes)
        est.n_points_in_ = params.n_points
        est.loss_curve_ = []
        return est

    def decision_function(self, X):
        """Logits, shape (n_clouds, n_classes)."""
        check_is_fitted(self, "params_")
        X = check_clouds(X)
        return np.vstack([forward_batch(self.params_, X[i : i + 64]) for i in range(0, len(X), 64)])

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        check_is_fitted(self, "params_")
        return self.classes_[predict_batch(self.params_, check_clouds(X))]

    def critical_points(self, cloud):
        check_is_fitted(self, "params_")
        return critical_points(self.params_, check_cloud(cloud))


def _params_of(estimator):
    if isinstance(estimator, ModelParams):
        return estimator, None
    check_is_fitted(estimator, "params_")
    return estimator.params_, estimator.classes_


class _TargetedAttack(BaseEstimator):
    kind = None
    _config_fields = ()

    def _config(self, target):
        fields = {name: getattr(self, name) for name in self._config_fields}
        return AttackConfig.for_kind(self.kind, target=target, seed=self.random_state, **fields)

    def attack(self, victim, target, target_examples=None):
        """Run one targeted attack and return its :class:`AttackResult`."""
        params, classes = _params_of(self.estimator)
        if classes is not None:
            hits = np.flatnonzero(classes == target)
            if len(hits) != 1:
                raise ValueError(f"unknown target class {target!r}")
            target = int(hits[0])
        cfg = self._config(int(target))
        template = getattr(self, "template", None)
        if template is not None:
            cfg = cfg.replace(template=check_cloud(template, "template"))
        return run_attack(self.kind, params, check_cloud(victim, "victim"), cfg, target_examples)

    def generate(self, X, targets, target_examples=None):
        """Attack every cloud in ``X`` towards the matching entry of ``targets``.

        ``target_examples`` maps a target class to clouds of that class; the
        cluster and object attacks need it to locate vulnerable regions.
        """
        X = check_clouds(X)
        if len(targets) != len(X):
            raise ValueError("need one target per cloud")
        out = []
        for victim, t in zip(X, targets):
            examples = None if target_examples is None else target_examples.get(t)
            out.append(self.attack(victim, t, examples))
        return out


class PerturbationAttack(_TargetedAttack):
    """Shift existing points under an L2 budget."""

    kind = "perturb"
    _config_fields = ("lambda_init", "search_steps", "inner_iters", "learning_rate")

    def __init__(self, estimator=None, lambda_init=10.0, search_steps=10, inner_iters=500,
                 learning_rate=0.01, random_state=0):
        self.estimator = estimator
        self.lambda_init = lambda_init
        self.search_steps = search_steps
        self.inner_iters = inner_iters
        self.learning_rate = learning_rate
        self.random_state = random_state


class PointAdditionAttack(_TargetedAttack):
    """Add independent points seeded on critical points (Hausdorff or Chamfer budget)."""

    kind = "points"
    _config_fields = ("metric", "lambda_init", "search_steps", "inner_iters", "learning_rate",
                      "t_thre", "init_from")

    def __init__(self, estimator=None, metric="chamfer", lambda_init=10.0, search_steps=10,
                 inner_iters=500, learning_rate=0.01, t_thre=0.01, init_from="victim",
                 random_state=0):
        self.estimator = estimator
        self.metric = metric
        self.lambda_init = lambda_init
        self.search_steps = search_steps
        self.inner_iters = inner_iters
        self.learning_rate = learning_rate
        self.t_thre = t_thre
        self.init_from = init_from
        self.random_state = random_state


class ClusterAttack(_TargetedAttack):
    """Add 1-3 compact clusters at vulnerable regions of the target class."""

    kind = "clusters"
    _config_fields = ("k", "mu", "lambda_init", "search_steps", "inner_iters", "learning_rate",
                      "dbscan_eps", "dbscan_min_pts")

    def __init__(self, estimator=None, k=1, mu=0.1, lambda_init=10.0, search_steps=5,
                 inner_iters=500, learning_rate=0.01, dbscan_eps=0.15, dbscan_min_pts=4,
                 random_state=0):
        self.estimator = estimator
        self.k = k
        self.mu = mu
        self.lambda_init = lambda_init
        self.search_steps = search_steps
        self.inner_iters = inner_iters
        self.learning_rate = learning_rate
        self.dbscan_eps = dbscan_eps
        self.dbscan_min_pts = dbscan_min_pts
        self.random_state = random_state


class ObjectAttack(_TargetedAttack):
    """Add 1-3 freely posed, slightly deformed copies of a small template object."""

    kind = "objects"
    _config_fields = ("k", "mu", "lambda_init", "search_steps", "inner_iters", "learning_rate",
                      "dbscan_eps", "dbscan_min_pts")

    def __init__(self, estimator=None, k=1, mu=0.2, template=None, lambda_init=10.0,
                 search_steps=5, inner_iters=500, learning_rate=0.01, dbscan_eps=0.15,
                 dbscan_min_pts=4, random_state=0):
        self.estimator = estimator
        self.k = k
        self.mu = mu
        self.template = template
        self.lambda_init = lambda_init
        self.search_steps = search_steps
        self.inner_iters = inner_iters
        self.learning_rate = learning_rate
        self.dbscan_eps = dbscan_eps
        self.dbscan_min_pts = dbscan_min_pts
        self.random_state = random_state
