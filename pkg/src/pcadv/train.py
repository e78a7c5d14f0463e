"""Synthetic dataset generation, victim training and accuracy evaluation."""

import json
import os
from dataclasses import dataclass

import numpy as np

from . import io
from .geometry import normalize_unit_ball
from .model import (
    DEFAULT_HEAD_WIDTHS,
    DEFAULT_POINT_WIDTHS,
    ModelParams,
    forward_batch,
    init_params,
    param_gradient,
    to_float32_grid,
)
from .optim import Adam
from .shapes import SHAPE_KINDS, jittered_spec, sample_shape

TRAIN_FRACTION = 0.8


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class Dataset:
    clouds: np.ndarray  # (N, n, 3)
    labels: np.ndarray  # (N,)
    splits: np.ndarray  # (N,) of "train" / "test"
    class_names: tuple
    seed: int = 0
    n_per_class: int = 0

    @property
    def n_classes(self):
        return len(self.class_names)

    @property
    def n_points(self):
        return self.clouds.shape[1]

    def indices(self, split):
        return np.flatnonzero(self.splits == split)

    def split(self, split):
        idx = self.indices(split)
        return self.clouds[idx], self.labels[idx]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    point_widths: tuple = DEFAULT_POINT_WIDTHS
    head_widths: tuple = DEFAULT_HEAD_WIDTHS

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not (self.learning_rate > 0 and self.eps > 0):
            raise ValueError("learning_rate and eps must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("moment decays must lie in (0, 1)")


def make_cloud(class_id, index, n_points, seed, kind):
    ss = np.random.SeedSequence([seed, class_id, index])
    spec_seed, sample_seed = ss.generate_state(2)
    spec = jittered_spec(kind, np.random.default_rng(spec_seed))
    cloud = normalize_unit_ball(sample_shape(spec, n_points, int(sample_seed)))
    return to_float32_grid(cloud)


def generate_dataset(n_per_class, points_per_cloud, seed, classes=SHAPE_KINDS):
    """Clouds for every class, class-major; the first 80% of each class is training data."""
    if n_per_class < 1 or points_per_cloud < 1:
        raise ValueError("counts must be at least 1")
    n_train = int(round(TRAIN_FRACTION * n_per_class))
    clouds, labels, splits = [], [], []
    for c, kind in enumerate(classes):
        for i in range(n_per_class):
            clouds.append(make_cloud(c, i, points_per_cloud, seed, kind))
            labels.append(c)
            splits.append("train" if i < n_train else "test")
    return Dataset(
        np.stack(clouds), np.array(labels), np.array(splits), tuple(classes), seed, n_per_class
    )


def train_model(dataset, cfg=TrainConfig(), loss_history=None):
    """Minimize batch cross-entropy with Adam; deterministic given ``cfg.seed``.

    Per-epoch mean losses are appended to ``loss_history`` when given.
    """
    X, y = dataset.split("train")
    if len(X) == 0:
        raise ValueError("dataset has no training examples")
    params = init_params(dataset.n_classes, cfg.point_widths, cfg.head_widths, cfg.seed)
    arrays = [a.copy() for a in params.arrays()]
    opt = Adam(arrays, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    rng = np.random.default_rng([cfg.seed, 1])
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        losses = []
        for start in range(0, len(X), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss, grads = param_gradient(params.with_arrays(arrays), X[batch], y[batch])
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"training loss became non-finite in epoch {epoch}")
            opt.step(arrays, grads)
            losses.append(loss * len(batch))
        if loss_history is not None:
            loss_history.append(sum(losses) / len(X))
    arrays = [to_float32_grid(a) for a in arrays]
    out = params.with_arrays(arrays)
    return ModelParams(out.per_point, out.head, dataset.n_points)


def predict_batch(params, clouds, chunk=64):
    preds = [np.argmax(forward_batch(params, clouds[i : i + chunk]), axis=1) for i in range(0, len(clouds), chunk)]
    return np.concatenate(preds)


def evaluate_accuracy(params, dataset, split="test"):
    X, y = dataset.split(split)
    if len(X) == 0:
        raise ValueError(f"split {split!r} is empty")
    return float(np.mean(predict_batch(params, X) == y))


# -- dataset directory -------------------------------------------------------

MANIFEST = "manifest.json"


def save_dataset(dataset, directory):
    os.makedirs(os.path.join(directory, "clouds"), exist_ok=True)
    examples = []
    for i, (cloud, label, split) in enumerate(zip(dataset.clouds, dataset.labels, dataset.splits)):
        name = f"clouds/{i:05d}.txt"
        io.write_text(os.path.join(directory, name), cloud)
        examples.append({"file": name, "label": int(label), "split": str(split)})
    manifest = {
        "format": 1,
        "class_names": list(dataset.class_names),
        "n_points": int(dataset.n_points),
        "n_per_class": int(dataset.n_per_class),
        "seed": int(dataset.seed),
        "examples": examples,
    }
    with open(os.path.join(directory, MANIFEST), "w", encoding="ascii", newline="\n") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_dataset(directory):
    path = os.path.join(directory, MANIFEST)
    try:
        with open(path, encoding="ascii") as fh:
            manifest = json.load(fh)
        class_names = tuple(manifest["class_names"])
        n_points = int(manifest["n_points"])
        entries = manifest["examples"]
        clouds = [io.read_text(os.path.join(directory, e["file"])) for e in entries]
        labels = np.array([int(e["label"]) for e in entries])
        splits = np.array([str(e["split"]) for e in entries])
    except (OSError, KeyError, TypeError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read dataset at {directory}: {exc}") from None
    if any(c.shape != (n_points, 3) for c in clouds):
        raise ValueError(f"dataset at {directory}: clouds do not all have {n_points} points")
    if len(labels) and (labels.min() < 0 or labels.max() >= len(class_names)):
        raise ValueError(f"dataset at {directory}: label out of range")
    if not set(splits) <= {"train", "test"}:
        raise ValueError(f"dataset at {directory}: unknown split tag")
    return Dataset(
        np.stack(clouds) if clouds else np.empty((0, n_points, 3)),
        labels,
        splits,
        class_names,
        int(manifest.get("seed", 0)),
        int(manifest.get("n_per_class", 0)),
    )
