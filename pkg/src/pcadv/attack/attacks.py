"""The four targeted attacks: point shifting, independent points, clusters, objects."""

import numpy as np

from .. import geometry as geo
from .._validation import check_class_id, check_cloud
from ..geometry import MetricKind, RigidTransform
from ..model import (
    critical_points,
    forward,
    loss_and_added_gradient,
    loss_and_input_gradient,
    pooled_features,
)
from ..shapes import sample_shape
from .config import AttackResult
from .search import lambda_search, optimize_inner
from .seeding import critical_coordinates, vulnerable_regions


def _is_target(logits, target):
    return int(np.argmax(logits)) == target


def verify_success(params, cloud, target):
    return _is_target(forward(params, cloud), target)


def _prepare(params, victim, cfg):
    victim = check_cloud(victim, "victim")
    target = check_class_id(cfg.target, params.n_classes)
    return victim, target


# -- point perturbation ------------------------------------------------------


def attack_perturb(params, victim, cfg):
    """Shift every victim point, penalizing the L2 norm of all shifts."""
    victim, target = _prepare(params, victim, cfg)
    if verify_success(params, victim, target):
        return _perturb_result(params, victim, victim.copy(), target, 0.0, [])

    def evaluate(delta, lam):
        f, logits, grad = loss_and_input_gradient(params, victim + delta, target)
        D = float(np.sqrt((delta**2).sum()))
        if D > 0:
            grad = grad + lam * delta / D
        return f, D, grad, _is_target(logits, target)

    def body(lam):
        res = optimize_inner(evaluate, np.zeros_like(victim), lam, cfg)
        return res.success, res.distance, res.variables

    search = lambda_search(body, cfg)
    if not search.success:
        return AttackResult("perturb", target, victim, False, trace=search.trace)
    return _perturb_result(params, victim, victim + search.candidate, target, search.best_lambda, search.trace)


def _perturb_result(params, victim, adversarial, target, lam, trace):
    success = verify_success(params, adversarial, target)
    metrics = {MetricKind.L2_NORM.value: geo.lp_perturbation(victim, adversarial)}
    return AttackResult(
        "perturb", target, victim, success, lam, metrics[MetricKind.L2_NORM.value],
        adversarial=adversarial, metrics=metrics, trace=trace,
    )


# -- shared generation plumbing -----------------------------------------------


def _generation_metrics(params, victim, added, groups, t_thre):
    metrics = {
        MetricKind.HAUSDORFF.value: geo.hausdorff(victim, added),
        MetricKind.CHAMFER.value: geo.chamfer(victim, added),
        MetricKind.COUNT_ADDED.value: geo.count_added(victim, added, t_thre),
    }
    # added points that are critical in the joint cloud and farther than t_thre
    union = np.vstack([victim, added])
    crit = critical_points(params, union).indices
    crit_added = crit[crit >= len(victim)] - len(victim)
    if len(crit_added):
        metrics["count_added_critical"] = geo.count_added(victim, added[crit_added], t_thre)
    else:
        metrics["count_added_critical"] = 0
    if groups is not None:
        metrics[MetricKind.FARTHEST.value] = float(np.mean([geo.farthest_distance(g) for g in groups]))
        metrics[MetricKind.CLUSTER_COUNT.value] = geo.cluster_count(groups)
    return metrics


def _search_generation(params, victim, target, x0, evaluate, cfg):
    if not len(x0):
        return None

    def body(lam):
        res = optimize_inner(evaluate, x0, lam, cfg)
        return res.success, res.distance, res.variables

    return lambda_search(body, cfg)


# -- independent points --------------------------------------------------------


def attack_add_points(params, victim, cfg, target_examples=None):
    """Initialize new points on critical points, then shift them under a Hausdorff or Chamfer budget."""
    victim, target = _prepare(params, victim, cfg)
    kind = MetricKind(cfg.metric)
    if kind not in (MetricKind.HAUSDORFF, MetricKind.CHAMFER):
        raise ValueError("independent-point attacks use the hausdorff or chamfer metric")
    if cfg.init_from == "victim":
        init = critical_coordinates(params, victim)
    else:
        if not target_examples:
            raise ValueError("init_from='target' needs target-class examples")
        rng = np.random.default_rng([cfg.seed, target, 11])
        source = check_cloud(target_examples[rng.integers(len(target_examples))])
        init = critical_coordinates(params, source)

    def finish(added, lam, trace):
        success = verify_success(params, np.vstack([victim, added]), target)
        metrics = _generation_metrics(params, victim, added, None, cfg.t_thre)
        return AttackResult(
            "points", target, victim, success, lam, metrics[kind.value],
            added=added, metrics=metrics, trace=trace,
        )

    if verify_success(params, victim, target):
        return finish(init, 0.0, [])
    base = pooled_features(params, victim)
    dist = geo.hausdorff if kind is MetricKind.HAUSDORFF else geo.chamfer

    def evaluate(flat, lam):
        added = flat.reshape(-1, 3)
        f, logits, grad = loss_and_added_gradient(params, base, added, target)
        D = dist(victim, added)
        grad = grad + lam * geo.metric_gradient(kind, victim, added)
        return f, D, grad.ravel(), _is_target(logits, target)

    search = _search_generation(params, victim, target, init.ravel(), evaluate, cfg)
    if not search.success:
        return AttackResult("points", target, victim, False, trace=search.trace)
    return finish(search.candidate.reshape(-1, 3), search.best_lambda, search.trace)


# -- adversarial clusters ------------------------------------------------------


def attack_add_clusters(params, victim, target_examples, cfg, seeds=None):
    """Add ``k`` compact clusters near vulnerable regions of the target class.

    Distance term: sum over clusters of the farthest pairwise distance plus
    ``mu`` times the cluster's Chamfer distance to the victim.
    """
    victim, target = _prepare(params, victim, cfg)
    if seeds is None:
        seeds = vulnerable_regions(params, target_examples, cfg.k, cfg)
    m = cfg.points_per_cluster
    init = np.vstack([s.initial_points for s in seeds])
    k = len(seeds)

    def split(added):
        return [added[i * m : (i + 1) * m] for i in range(k)]

    def distance(groups):
        return float(sum(geo.farthest_distance(g) + cfg.mu * geo.chamfer(victim, g) for g in groups))

    def finish(added, lam, trace):
        groups = split(added)
        success = verify_success(params, np.vstack([victim, added]), target)
        metrics = _generation_metrics(params, victim, added, groups, cfg.t_thre)
        return AttackResult(
            "clusters", target, victim, success, lam, distance(groups),
            added=added, groups=groups, metrics=metrics, trace=trace,
        )

    # already the target: the seeded clusters are returned unmoved
    if verify_success(params, victim, target):
        return finish(init, 0.0, [])
    base = pooled_features(params, victim)

    def evaluate(flat, lam):
        added = flat.reshape(-1, 3)
        f, logits, grad = loss_and_added_gradient(params, base, added, target)
        far, far_grad = geo.group_farthest(added.reshape(k, m, 3))
        cham, cham_grad = geo.group_chamfer(victim, added, k)
        D = float(sum(far[i] + cfg.mu * cham[i] for i in range(k)))
        pen = far_grad.reshape(-1, 3) + cfg.mu * cham_grad
        return f, D, (grad + lam * pen).ravel(), _is_target(logits, target)

    search = _search_generation(params, victim, target, init.ravel(), evaluate, cfg)
    if not search.success:
        return AttackResult("clusters", target, victim, False, trace=search.trace)
    return finish(search.candidate.reshape(-1, 3), search.best_lambda, search.trace)


# -- adversarial objects -------------------------------------------------------


def default_template(cfg):
    """A small object: ``template_points`` surface samples scaled by ``template_scale``, centered."""
    pts = sample_shape(cfg.template_shape, cfg.template_points, seed=cfg.seed)
    pts = pts - pts.mean(axis=0)
    return pts * cfg.template_scale


def _unpack_objects(flat, k, m):
    per = 6 + 3 * m
    out = []
    for i in range(k):
        block = flat[i * per : (i + 1) * per]
        out.append((block[:3], block[3:6], block[6:].reshape(m, 3)))
    return out


def attack_add_objects(params, victim, target_examples, template, cfg, seeds=None):
    """Place ``k`` rigidly posed, slightly deformed copies of ``template``.

    Each object is ``R(rotation) @ (template + delta) + translation``. Only
    the deformation ``delta`` is penalized (its L2 norm, in the template
    frame); pose is free. The Chamfer term pulls objects towards the victim.
    """
    victim, target = _prepare(params, victim, cfg)
    template = default_template(cfg) if template is None else check_cloud(template, "template")
    if seeds is None:
        seeds = vulnerable_regions(params, target_examples, cfg.k, cfg)
    k = len(seeds)
    m = len(template)
    init = np.concatenate(
        [np.concatenate([np.zeros(3), s.center, np.zeros(3 * m)]) for s in seeds]
    )

    def build(flat):
        objs = _unpack_objects(flat, k, m)
        groups = []
        for rot, trans, delta in objs:
            groups.append((template + delta) @ geo.rotation_matrix(rot).T + trans)
        return objs, groups

    def distance(objs, groups):
        l2 = sum(np.sqrt((delta**2).sum()) for _, _, delta in objs)
        return float(l2 + cfg.mu * sum(geo.chamfer(victim, g) for g in groups))

    def finish(flat, lam, trace):
        objs, groups = build(flat)
        added = np.vstack(groups)
        success = verify_success(params, np.vstack([victim, added]), target)
        metrics = _generation_metrics(params, victim, added, groups, cfg.t_thre)
        metrics[MetricKind.L2_NORM.value] = float(np.mean([geo.lp_perturbation(template, template + d) for _, _, d in objs]))
        return AttackResult(
            "objects", target, victim, success, lam, distance(objs, groups),
            added=added, groups=groups,
            transforms=[RigidTransform(r, t) for r, t, _ in objs],
            deltas=[d.copy() for _, _, d in objs],
            metrics=metrics, trace=trace,
        )

    if verify_success(params, victim, target):
        return finish(init, 0.0, [])
    base = pooled_features(params, victim)

    def evaluate(flat, lam):
        objs = _unpack_objects(flat, k, m)
        rots = [geo.rotation_matrix(rot) for rot, _, _ in objs]
        bodies = [template + delta for _, _, delta in objs]
        added = np.vstack([b @ R.T + trans for b, R, (_, trans, _) in zip(bodies, rots, objs)])
        f, logits, gz = loss_and_added_gradient(params, base, added, target)
        cham, cham_grad = geo.group_chamfer(victim, added, k)
        gz = gz + lam * cfg.mu * cham_grad
        grads = []
        l2 = 0.0
        for i, ((rot, _, delta), R, body) in enumerate(zip(objs, rots, bodies)):
            gp = gz[i * m : (i + 1) * m]
            d_rot = np.einsum("kij,ij->k", geo.rotation_matrix_derivatives(rot, R), gp.T @ body)
            d_delta = gp @ R
            norm = np.sqrt((delta**2).sum())
            l2 += norm
            if norm > 0:
                d_delta += lam * delta / norm
            grads.append(np.concatenate([d_rot, gp.sum(axis=0), d_delta.ravel()]))
        D = float(l2 + cfg.mu * sum(cham[i] for i in range(k)))
        return f, D, np.concatenate(grads), _is_target(logits, target)

    search = _search_generation(params, victim, target, init, evaluate, cfg)
    if not search.success:
        return AttackResult("objects", target, victim, False, trace=search.trace)
    return finish(search.candidate, search.best_lambda, search.trace)


def run_attack(kind, params, victim, cfg, target_examples=None, seeds=None):
    """Dispatch one job by attack kind name."""
    if kind == "perturb":
        return attack_perturb(params, victim, cfg)
    if kind == "points":
        return attack_add_points(params, victim, cfg, target_examples)
    if kind == "clusters":
        return attack_add_clusters(params, victim, target_examples, cfg, seeds)
    if kind == "objects":
        return attack_add_objects(params, victim, target_examples, cfg.template, cfg, seeds)
    raise ValueError(f"unknown attack kind {kind!r}")
