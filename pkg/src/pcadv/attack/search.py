"""Adam inner loop for one trade-off weight, and the binary search over it."""

from dataclasses import dataclass, field

import numpy as np

from ..optim import Adam


@dataclass
class InnerResult:
    variables: np.ndarray
    success: bool
    f: float
    distance: float
    best_objective: list = field(default_factory=list)
    aborted: bool = False


def optimize_inner(evaluate, x0, lam, cfg):
    """Minimize ``f + lam * D`` from ``x0`` with ``cfg.inner_iters`` Adam steps.

    ``evaluate(v, lam)`` returns ``(f, D, grad, success)`` where ``grad`` is
    the gradient of the whole objective. The iterate kept is the successful
    one with the smallest ``D``; without any success it is the final one.
    ``best_objective`` records the running minimum of the objective.
    """
    v = np.array(x0, dtype=np.float64, copy=True)
    opt = Adam([v], cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    best = None
    running = np.inf
    trace = []
    for it in range(cfg.inner_iters + 1):
        f, D, grad, success = evaluate(v, lam)
        objective = f + lam * D
        if not (np.isfinite(objective) and np.all(np.isfinite(grad))):
            return InnerResult(v, False, float(f), float(D), trace, aborted=True)
        running = min(running, objective)
        trace.append(running)
        if success and (best is None or D < best[1]):
            best = (v.copy(), D, f)
        if it == cfg.inner_iters:
            break
        opt.step([v], [grad])
    if best is not None:
        return InnerResult(best[0], True, float(best[2]), float(best[1]), trace)
    return InnerResult(v, False, float(f), float(D), trace)


@dataclass
class SearchResult:
    success: bool
    best_lambda: float
    distance: float
    candidate: object
    trace: list


def lambda_search(body, cfg):
    """Binary search over the distance weight.

    ``body(lam)`` returns ``(success, D, candidate)``. Success raises the
    weight (asking for a smaller perturbation), failure lowers it. Until both
    a success and a failure have been seen the weight is doubled or halved;
    afterwards the bracket is bisected. All probes stay within
    ``[lambda_lo, lambda_hi]``. The successful candidate with the smallest D
    over all probes is returned.
    """
    lam = float(np.clip(cfg.lambda_init, cfg.lambda_lo, cfg.lambda_hi))
    lo = hi = None
    best = None
    trace = []
    for _ in range(cfg.search_steps):
        success, D, candidate = body(lam)
        trace.append((lam, bool(success), float(D)))
        if success:
            if best is None or D < best[1]:
                best = (lam, D, candidate)
            lo = lam if lo is None else max(lo, lam)
            nxt = lam * 2.0 if hi is None else 0.5 * (lo + hi)
        else:
            hi = lam if hi is None else min(hi, lam)
            nxt = lam / 2.0 if lo is None else 0.5 * (lo + hi)
        lam = float(np.clip(nxt, cfg.lambda_lo, cfg.lambda_hi))
    if best is None:
        return SearchResult(False, float("nan"), float("nan"), None, trace)
    return SearchResult(True, best[0], float(best[1]), best[2], trace)
