import json

import numpy as np
import pytest
from sklearn.neighbors import NearestCentroid

from pcadv.model import ModelParams, init_params, load_checkpoint, save_checkpoint
from pcadv.train import (
    Dataset,
    TrainConfig,
    TrainingDivergedError,
    evaluate_accuracy,
    generate_dataset,
    load_dataset,
    save_dataset,
    train_model,
)


def test_desk_counts(desk_dataset):
    assert desk_dataset.clouds.shape == (500, 256, 3)
    assert len(desk_dataset.indices("train")) == 400
    assert len(desk_dataset.indices("test")) == 100
    assert np.array_equal(np.bincount(desk_dataset.labels), [50] * 10)


def test_every_cloud_is_unit_ball_normalized(desk_dataset):
    c = desk_dataset.clouds
    assert np.abs(c.mean(axis=1)).max() < 1e-6
    assert np.abs(np.linalg.norm(c, axis=2).max(axis=1) - 1).max() < 1e-6


def test_generation_is_deterministic(tiny_dataset):
    again = generate_dataset(8, 64, seed=5, classes=("sphere", "cube", "torus"))
    assert again.clouds.tobytes() == tiny_dataset.clouds.tobytes()
    assert np.array_equal(again.labels, tiny_dataset.labels)
    other = generate_dataset(8, 64, seed=6, classes=("sphere", "cube", "torus"))
    assert not np.array_equal(other.clouds, tiny_dataset.clouds)


def test_classes_are_separable_but_not_trivial(desk_dataset):
    # nearest centroid on per-axis sorted coordinates (removes the arbitrary point order)
    def feats(X):
        return np.sort(X, axis=1).reshape(len(X), -1)

    Xtr, ytr = desk_dataset.split("train")
    Xte, yte = desk_dataset.split("test")
    acc = NearestCentroid().fit(feats(Xtr), ytr).score(feats(Xte), yte)
    assert 1 / desk_dataset.n_classes < acc < 1.0


def test_zero_epochs_returns_seeded_init(tiny_dataset):
    params = train_model(tiny_dataset, TrainConfig(epochs=0, seed=9))
    init = init_params(3, seed=9)
    for a, b in zip(params.arrays(), init.arrays()):
        assert a.tobytes() == b.tobytes()
    assert params.n_points == 64


def test_training_is_deterministic(tiny_dataset, tiny_model, tmp_path):
    again = train_model(tiny_dataset, TrainConfig(epochs=15, seed=3))
    save_checkpoint(tmp_path / "a", tiny_model)
    save_checkpoint(tmp_path / "b", again)
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_trained_params_are_on_the_float32_grid(tiny_model):
    for a in tiny_model.arrays():
        assert np.array_equal(a, a.astype(np.float32).astype(np.float64))


def test_desk_model_accuracy(desk_dataset, desk_model):
    test_acc = evaluate_accuracy(desk_model, desk_dataset, "test")
    train_acc = evaluate_accuracy(desk_model, desk_dataset, "train")
    assert test_acc >= 0.90
    assert train_acc >= test_acc - 0.05


def test_loss_non_increasing_over_five_epoch_blocks(desk_training):
    _, history, _ = desk_training
    assert len(history) == TrainConfig().epochs
    blocks = np.asarray(history).reshape(-1, 5).mean(axis=1)
    assert (np.diff(blocks) <= 0).all(), blocks


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_the_epoch(tiny_dataset):
    with pytest.raises(TrainingDivergedError, match="epoch 0"):
        train_model(tiny_dataset, TrainConfig(epochs=2, learning_rate=1e300))


def test_config_validation():
    for bad in (dict(epochs=-1), dict(batch_size=0), dict(learning_rate=0.0), dict(beta1=1.0), dict(beta2=0.0)):
        with pytest.raises(ValueError):
            TrainConfig(**bad)


def test_accuracy_examples():
    clouds = np.random.default_rng(0).uniform(-1, 1, size=(20, 8, 3))
    labels = np.arange(20) % 10
    data = Dataset(clouds, labels, np.array(["test"] * 20), tuple("abcdefghij"))
    params = init_params(10, seed=0)
    arrays = params.arrays()
    arrays[-2] = np.zeros_like(arrays[-2])
    arrays[-1] = np.where(np.arange(10) == 0, 1.0, 0.0)
    always_zero = params.with_arrays(arrays)
    assert evaluate_accuracy(always_zero, data) == pytest.approx(0.1)
    one = Dataset(clouds[:1], np.array([0]), np.array(["train"]), tuple("abcdefghij"))
    assert evaluate_accuracy(always_zero, one, "train") == 1.0
    with pytest.raises(ValueError):
        evaluate_accuracy(always_zero, one, "test")


def test_accuracy_invariant_to_example_order(tiny_dataset, tiny_model):
    perm = np.random.default_rng(0).permutation(len(tiny_dataset.labels))
    shuffled = Dataset(tiny_dataset.clouds[perm], tiny_dataset.labels[perm], tiny_dataset.splits[perm],
                       tiny_dataset.class_names)
    for split in ("train", "test"):
        assert evaluate_accuracy(tiny_model, shuffled, split) == evaluate_accuracy(tiny_model, tiny_dataset, split)


def test_dataset_directory_round_trip(tiny_dataset, tmp_path):
    save_dataset(tiny_dataset, tmp_path / "d")
    loaded = load_dataset(tmp_path / "d")
    assert loaded.clouds.tobytes() == tiny_dataset.clouds.tobytes()
    assert np.array_equal(loaded.labels, tiny_dataset.labels)
    assert np.array_equal(loaded.splits, tiny_dataset.splits)
    assert loaded.class_names == tiny_dataset.class_names
    manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
    assert manifest["seed"] == 5 and manifest["n_points"] == 64
    assert len(list((tmp_path / "d" / "clouds").iterdir())) == 24


def test_corrupt_dataset_rejected(tiny_dataset, tmp_path):
    save_dataset(tiny_dataset, tmp_path / "d")
    (tmp_path / "d" / "manifest.json").write_text("{not json")
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "d")
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "missing")
