"""Attack matrices over (victim, target) pairs, case summaries and report files."""

import csv
import io as _io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .attack import AttackConfig, SeedingError, default_template, run_attack, vulnerable_regions
from .geometry import MetricKind, nearest_original
from .train import predict_batch

SHIFT_BREAKPOINTS = (0.005, 0.01, 0.02, 0.03, 0.05)
NEAREST_BIN_EDGES = (0.0, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, math.inf)

CSV_COLUMNS = (
    "attack_kind",
    "victim_class",
    "target_class",
    "k",
    "success_rate",
    "mean_L2",
    "mean_hausdorff",
    "mean_chamfer",
    "mean_far",
    "mean_count_added",
    "wall_time_s",
)
CASE_COLUMNS = ("case",) + CSV_COLUMNS
CASES = ("best", "average", "worst")

_METRIC_COLUMNS = {
    "mean_L2": MetricKind.L2_NORM.value,
    "mean_hausdorff": MetricKind.HAUSDORFF.value,
    "mean_chamfer": MetricKind.CHAMFER.value,
    "mean_far": MetricKind.FARTHEST.value,
    "mean_count_added": MetricKind.COUNT_ADDED.value,
}


class InsufficientVictimsError(RuntimeError):
    pass


def primary_metric(kind, cfg):
    """Metric column used to rank pairs for the best and worst cases."""
    if kind == "points":
        return "mean_" + {"hausdorff": "hausdorff", "chamfer": "chamfer"}[MetricKind(cfg.metric).value]
    return {"perturb": "mean_L2", "clusters": "mean_far", "objects": "mean_L2"}[kind]


@dataclass
class JobRecord:
    attack_kind: str
    victim_id: int
    victim_class: int
    target_class: int
    k: int
    success: bool
    best_lambda: float
    distance: float
    metrics: dict
    wall_time_s: float
    error: str = None
    result: object = field(default=None, repr=False, compare=False)

    def to_json(self):
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "result"}
        for key in ("best_lambda", "distance"):
            if not math.isfinite(out[key]):
                out[key] = None
        return json.dumps(out, sort_keys=True)


@dataclass
class Summary:
    """One CSV row: a class pair, or a best/average/worst case."""

    attack_kind: str
    victim_class: object
    target_class: object
    k: int
    success_rate: float
    mean_L2: float
    mean_hausdorff: float
    mean_chamfer: float
    mean_far: float
    mean_count_added: float
    wall_time_s: float
    n_jobs: int = field(default=0, compare=False)


@dataclass
class AttackMatrixReport:
    attack_kind: str
    k: int
    primary: str
    records: list
    pairs: list
    cases: dict
    shift_cdf: list = None
    nearest_histogram: list = None


# -- aggregation -------------------------------------------------------------


def _mean(values):
    return float(np.mean(values)) if values else math.nan


def summarize(records, kind, k, victim_class="all", target_class="all"):
    ok = [r for r in records if r.success]
    row = {
        col: _mean([float(r.metrics[name]) for r in ok if name in r.metrics])
        for col, name in _METRIC_COLUMNS.items()
    }
    rate = len(ok) / len(records) if records else math.nan
    return Summary(
        kind, victim_class, target_class, k, rate, **row,
        wall_time_s=float(sum(r.wall_time_s for r in records)), n_jobs=len(records),
    )


def aggregate(records, kind, k, primary):
    """Per-pair summaries plus the best, average and worst cases."""
    by_pair = {}
    for r in records:
        by_pair.setdefault((r.victim_class, r.target_class), []).append(r)
    pairs = [summarize(rs, kind, k, v, t) for (v, t), rs in sorted(by_pair.items())]
    cases = {}
    if pairs:
        def dist(p):
            d = getattr(p, primary)
            return math.inf if math.isnan(d) else d

        perfect = [p for p in pairs if p.success_rate == 1.0]
        if perfect:
            best = min(perfect, key=dist)
        else:
            best = min(pairs, key=lambda p: (-p.success_rate, dist(p)))
        worst = min(pairs, key=lambda p: (p.success_rate, -dist(p)))
        cases = {
            "best": best,
            "average": summarize(records, kind, k),
            "worst": worst,
        }
    return pairs, cases


def shift_distribution(results, breakpoints=SHIFT_BREAKPOINTS):
    """Fraction of per-point shift magnitudes at or below each breakpoint.

    Only successful perturbation results carry a shifted cloud; failed ones
    are skipped.
    """
    mags = []
    for r in results:
        if r.kind != "perturb":
            raise ValueError(f"shift distribution needs perturbation results, got {r.kind!r}")
        if r.adversarial is not None:
            mags.append(np.sqrt(((r.adversarial - r.original) ** 2).sum(axis=1)))
    if not mags:
        return [(b, math.nan) for b in breakpoints]
    mags = np.concatenate(mags)
    return [(b, float(np.mean(mags <= b))) for b in breakpoints]


def nearest_distance_histogram(results, edges=NEAREST_BIN_EDGES):
    """Counts of added points by unsquared distance to their nearest original point."""
    dists = []
    for r in results:
        if r.added is None:
            raise ValueError("nearest-distance histogram needs generation results")
        if r.success:
            dists.append(np.sqrt(nearest_original(r.original, r.added)[1]))
    d = np.concatenate(dists) if dists else np.empty(0)
    counts = [int(np.count_nonzero((d >= lo) & (d < hi))) for lo, hi in zip(edges[:-1], edges[1:])]
    return [(lo, hi, c) for lo, hi, c in zip(edges[:-1], edges[1:], counts)]


# -- matrix execution --------------------------------------------------------

_STATE = {}


def _init_worker(params, dataset, kind, cfg, seeds):
    _STATE.update(params=params, dataset=dataset, kind=kind, cfg=cfg, seeds=seeds)


def _run_job(job):
    victim_id, target = job
    params, dataset, kind, cfg = _STATE["params"], _STATE["dataset"], _STATE["kind"], _STATE["cfg"]
    seeds = _STATE["seeds"].get(target)
    victim_class = int(dataset.labels[victim_id])
    start = time.perf_counter()
    if isinstance(seeds, str):
        return JobRecord(kind, victim_id, victim_class, target, cfg.k, False, math.nan, math.nan, {},
                         0.0, error=seeds)
    job_cfg = cfg.replace(target=target, seed=int(np.random.SeedSequence([cfg.seed, victim_id, target]).generate_state(1)[0]))
    target_examples = None
    if kind == "points" and cfg.init_from == "target":
        idx = dataset.indices("test")
        target_examples = [dataset.clouds[i] for i in idx if dataset.labels[i] == target]
    res = run_attack(kind, params, dataset.clouds[victim_id], job_cfg, target_examples, seeds)
    elapsed = time.perf_counter() - start
    metrics = {key: (int(v) if isinstance(v, (int, np.integer)) else float(v)) for key, v in res.metrics.items()}
    return JobRecord(kind, victim_id, victim_class, target, cfg.k, bool(res.success),
                     float(res.best_lambda), float(res.distance), metrics, elapsed, result=res)


def select_victims(params, dataset, victims_per_class, seed):
    """Correctly classified test examples per class, in a seeded random order."""
    test = dataset.indices("test")
    preds = dict(zip(test.tolist(), predict_batch(params, dataset.clouds[test]).tolist()))
    chosen = {}
    for c in range(dataset.n_classes):
        pool = test[dataset.labels[test] == c]
        pool = pool[np.random.default_rng([seed, c]).permutation(len(pool))]
        good = [int(i) for i in pool if preds[int(i)] == c][:victims_per_class]
        if len(good) < victims_per_class:
            raise InsufficientVictimsError(
                f"class {c} ({dataset.class_names[c]}) has only {len(good)} correctly classified "
                f"test examples; {victims_per_class} needed"
            )
        chosen[c] = good
    return chosen


def matrix_jobs(victims, n_classes):
    return [(v, t) for c in sorted(victims) for v in victims[c] for t in range(n_classes) if t != c]


def _seed_target(params, dataset, cfg, t):
    test = dataset.indices("test")
    examples = [dataset.clouds[i] for i in test if dataset.labels[i] == t]
    try:
        return vulnerable_regions(params, examples, cfg.k, cfg.replace(target=t))
    except SeedingError as exc:
        return str(exc)


def _target_seeds(params, dataset, kind, cfg, targets=None):
    if kind not in ("clusters", "objects"):
        return {}
    targets = range(dataset.n_classes) if targets is None else targets
    return {t: _seed_target(params, dataset, cfg, t) for t in targets}


def _check_compatible(params, dataset):
    if dataset.n_classes != params.n_classes:
        raise ValueError(f"model has {params.n_classes} classes but dataset has {dataset.n_classes}")
    if params.n_points and dataset.n_points != params.n_points:
        raise ValueError(f"model was trained on {params.n_points} points but dataset clouds have {dataset.n_points}")


def run_job(params, dataset, kind, cfg, victim_id, target):
    """A single matrix cell, seeded exactly as :func:`run_matrix` would seed it."""
    _check_compatible(params, dataset)
    if not 0 <= victim_id < len(dataset.labels):
        raise ValueError(f"victim id {victim_id} outside 0..{len(dataset.labels) - 1}")
    if not 0 <= target < dataset.n_classes:
        raise ValueError(f"target {target} outside 0..{dataset.n_classes - 1}")
    if kind == "objects" and cfg.template is None:
        cfg = cfg.replace(template=default_template(cfg))
    _init_worker(params, dataset, kind, cfg, _target_seeds(params, dataset, kind, cfg, [target]))
    try:
        return _run_job((victim_id, target))
    finally:
        _STATE.clear()


def run_matrix(params, dataset, kind, cfg=None, victims_per_class=5, workers=1, log_path=None):
    """Attack every selected victim towards every other class and aggregate."""
    if cfg is None:
        cfg = AttackConfig.for_kind(kind)
    _check_compatible(params, dataset)
    if kind == "objects" and cfg.template is None:
        cfg = cfg.replace(template=default_template(cfg))
    victims = select_victims(params, dataset, victims_per_class, cfg.seed)
    jobs = matrix_jobs(victims, dataset.n_classes)
    seeds = _target_seeds(params, dataset, kind, cfg)
    if workers <= 1:
        _init_worker(params, dataset, kind, cfg, seeds)
        records = [_run_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(workers, initializer=_init_worker,
                                 initargs=(params, dataset, kind, cfg, seeds)) as pool:
            records = list(pool.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    if log_path is not None:
        write_run_log(records, log_path)
    return build_report(records, kind, cfg)


def build_report(records, kind, cfg):
    primary = primary_metric(kind, cfg)
    pairs, cases = aggregate(records, kind, cfg.k, primary)
    results = [r.result for r in records if r.result is not None]
    report = AttackMatrixReport(kind, cfg.k, primary, records, pairs, cases)
    if kind == "perturb":
        report.shift_cdf = shift_distribution(results)
    elif kind == "points":
        report.nearest_histogram = nearest_distance_histogram(results)
    return report


def write_run_log(records, path):
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


# -- report files --------------------------------------------------------------


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _row(summary, include_timing):
    d = asdict(summary)
    if not include_timing:
        d["wall_time_s"] = ""
    return [_fmt(d[c]) for c in CSV_COLUMNS]


def _csv_text(header, rows):
    buf = _io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _md_num(v):
    if isinstance(v, float) and math.isnan(v):
        return "-"
    return f"{v:.4g}"


_MD_LAYOUT = {
    "perturb": (("mean loss (L2)", "mean_L2"),),
    "points": (
        ("mean loss (D_H)", "mean_hausdorff"),
        ("mean loss (D_C)", "mean_chamfer"),
        ("#points added", "mean_count_added"),
    ),
    "clusters": (("D_far", "mean_far"), ("D_C", "mean_chamfer")),
    "objects": (("D_L2", "mean_L2"), ("D_C", "mean_chamfer")),
}


def markdown_table(report):
    cols = _MD_LAYOUT[report.attack_kind]
    lines = [
        f"### {report.attack_kind} (k={report.k})",
        "",
        "| Case | " + " | ".join(c for c, _ in cols) + " | success rate | pair |",
        "|---" * (len(cols) + 3) + "|",
    ]
    for name in CASES:
        if name not in report.cases:
            continue
        s = report.cases[name]
        vals = " | ".join(_md_num(getattr(s, attr)) for _, attr in cols)
        lines.append(
            f"| {name.capitalize()} | {vals} | {100 * s.success_rate:.1f}% | {s.victim_class}->{s.target_class} |"
        )
    return "\n".join(lines) + "\n"


def emit_report(report, out_dir, formats=("csv", "markdown"), include_timing=False):
    """Write pair/case tables and histograms; returns the written paths.

    Output bytes depend only on the report. Wall times vary between runs, so
    the ``wall_time_s`` column is left blank unless ``include_timing``.
    """
    os.makedirs(out_dir, exist_ok=True)
    files = {}
    if "csv" in formats:
        files["pairs.csv"] = _csv_text(CSV_COLUMNS, [_row(p, include_timing) for p in report.pairs])
        files["cases.csv"] = _csv_text(
            CASE_COLUMNS,
            [[name] + _row(report.cases[name], include_timing) for name in CASES if name in report.cases],
        )
        if report.shift_cdf is not None:
            files["shift_cdf.csv"] = _csv_text(
                ("breakpoint", "fraction"), [[_fmt(b), _fmt(f)] for b, f in report.shift_cdf]
            )
        if report.nearest_histogram is not None:
            files["nearest_distances.csv"] = _csv_text(
                ("bin_lo", "bin_hi", "count"),
                [[_fmt(lo), _fmt(hi), str(c)] for lo, hi, c in report.nearest_histogram],
            )
    if "markdown" in formats:
        files["report.md"] = markdown_table(report)
    paths = []
    for name, text in files.items():
        path = os.path.join(out_dir, name)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        paths.append(path)
    return paths


def _parse_cell(col, text):
    if col == "attack_kind":
        return text
    if col in ("victim_class", "target_class"):
        return int(text) if text.lstrip("-").isdigit() else text
    if col == "k":
        return int(text)
    if text == "":
        return math.nan
    return float(text)


def read_summaries(path):
    """Parse a pairs.csv or cases.csv file back into :class:`Summary` rows."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = []
        for rec in reader:
            d = dict(zip(header, rec))
            case = d.pop("case", None)
            s = Summary(**{c: _parse_cell(c, d[c]) for c in CSV_COLUMNS})
            rows.append((case, s) if case is not None else s)
    return rows
