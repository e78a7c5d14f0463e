import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pcadv.model import (
    ModelParams,
    _pool,
    adversarial_loss,
    critical_points,
    forward,
    forward_batch,
    init_params,
    input_gradient,
    load_checkpoint,
    loss_and_added_gradient,
    param_gradient,
    point_activations,
    pooled_features,
    predict,
    save_checkpoint,
    softmax_cross_entropy,
)
from pcadv.shapes import SHAPE_KINDS, sample_shape

SMALL = dict(point_widths=(8, 16), head_widths=(8,))


def rel_err(a, b):
    return np.abs(a - b).max() / max(np.abs(a).max(), np.abs(b).max(), 1e-8)


def random_cloud(rng, n=32):
    return rng.uniform(-1, 1, size=(n, 3))


def _pattern(params, cloud, target):
    # which linear piece the loss is on: ReLU masks, pool winners, hinge runner-up
    acts = point_activations(params, cloud)
    _, idx = _pool(acts[-1])
    logits = forward(params, cloud)
    others = np.where(np.arange(len(logits)) == target, -np.inf, logits)
    masks = b"".join(np.packbits(a > 0).tobytes() for a in acts[1:])
    return masks + idx.tobytes() + bytes([int(np.argmax(others))])


def input_fd_error(seed):
    """Relative FD error, or None when a kink lies inside the stencil."""
    rng = np.random.default_rng(seed)
    params = init_params(4, seed=seed)
    cloud = random_cloud(rng, 16)
    logits = forward(params, cloud)
    target = int(np.argmin(logits))
    analytic = input_gradient(params, cloud, target)
    numeric = np.zeros_like(cloud)
    h = 1e-5
    base = _pattern(params, cloud, target)
    for idx in np.ndindex(cloud.shape):
        xp, xm = cloud.copy(), cloud.copy()
        xp[idx] += h
        xm[idx] -= h
        if _pattern(params, xp, target) != base or _pattern(params, xm, target) != base:
            return None
        numeric[idx] = (adversarial_loss(forward(params, xp), target)[0]
                        - adversarial_loss(forward(params, xm), target)[0]) / (2 * h)
    return rel_err(analytic, numeric)


def smooth_instances(error_fn, count=50, max_seeds=200):
    errors, skipped = [], 0
    for seed in range(max_seeds):
        err = error_fn(seed)
        if err is None:
            skipped += 1
        else:
            errors.append(err)
        if len(errors) == count:
            return errors, skipped
    raise AssertionError(f"only {len(errors)} smooth instances in {max_seeds} seeds")


def param_fd_error(seed):
    rng = np.random.default_rng(seed)
    params = init_params(3, seed=seed, **SMALL)
    # non-zero biases so every parameter is exercised
    arrays = [a + rng.normal(scale=0.1, size=a.shape) for a in params.arrays()]
    params = params.with_arrays(arrays)
    clouds = rng.uniform(-1, 1, size=(4, 12, 3))
    labels = rng.integers(0, 3, size=4)
    _, grads = param_gradient(params, clouds, labels)
    h = 1e-5
    worst = 0.0
    for a_i, a in enumerate(arrays):
        numeric = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [x.copy() for x in arrays]
            minus = [x.copy() for x in arrays]
            plus[a_i][idx] += h
            minus[a_i][idx] -= h
            lp = softmax_cross_entropy(forward_batch(params.with_arrays(plus), clouds), labels)[0]
            lm = softmax_cross_entropy(forward_batch(params.with_arrays(minus), clouds), labels)[0]
            numeric[idx] = (lp - lm) / (2 * h)
        worst = max(worst, rel_err(grads[a_i], numeric))
    return worst


# -- examples ------------------------------------------------------------------------------


def test_adversarial_loss_examples():
    assert adversarial_loss([2.0, 5.0, 1.0], 1)[0] == 0.0
    value, grad = adversarial_loss([2.0, 5.0, 1.0], 0)
    assert value == 3.0
    np.testing.assert_array_equal(grad, [-1.0, 1.0, 0.0])
    assert adversarial_loss([4.0, 4.0, 0.0], 0)[0] == 0.0
    with pytest.raises(ValueError):
        adversarial_loss([1.0, 2.0], 2)


def test_adversarial_loss_tie_credits_lowest_index():
    _, grad = adversarial_loss([0.0, 3.0, 3.0], 0)
    np.testing.assert_array_equal(grad, [-1.0, 1.0, 0.0])


def test_output_length_is_class_count():
    params = init_params(7, seed=0)
    for n in (1, 5, 300):
        assert forward(params, np.zeros((n, 3)) + 0.1).shape == (7,)


def test_permutation_and_duplication_invariance():
    params = init_params(5, seed=1)
    rng = np.random.default_rng(1)
    cloud = random_cloud(rng, 64)
    base = forward(params, cloud)
    for _ in range(5):
        assert forward(params, cloud[rng.permutation(64)]).tobytes() == base.tobytes()
    assert forward(params, np.vstack([cloud, cloud])).tobytes() == base.tobytes()


def test_forward_batch_matches_forward_bitwise():
    params = init_params(4, seed=2)
    clouds = np.random.default_rng(2).uniform(-1, 1, size=(6, 40, 3))
    batch = forward_batch(params, clouds)
    for i in range(6):
        assert batch[i].tobytes() == forward(params, clouds[i]).tobytes()


def test_zero_gradient_inside_hinge_margin():
    params = init_params(3, seed=3)
    cloud = random_cloud(np.random.default_rng(3))
    assert not input_gradient(params, cloud, predict(params, cloud)).any()


def test_uncredited_points_get_zero_gradient():
    params = init_params(3, seed=4)
    cloud = random_cloud(np.random.default_rng(4), 128)
    target = int(np.argmin(forward(params, cloud)))
    grad = input_gradient(params, cloud, target)
    crit = critical_points(params, cloud).indices
    others = np.setdiff1d(np.arange(128), crit)
    assert len(others) > 0
    assert not grad[others].any()


def test_saturated_example_has_near_zero_param_gradient():
    params = init_params(2, seed=5)
    cloud = random_cloud(np.random.default_rng(5))[None]
    label = int(np.argmax(forward(params, cloud[0])))
    # scale the last layer so the softmax saturates
    arrays = params.arrays()
    arrays[-2] = arrays[-2] * 1e4
    arrays[-1] = arrays[-1] + np.where(np.arange(2) == label, 1e3, -1e3)
    loss, grads = param_gradient(params.with_arrays(arrays), cloud, [label])
    assert loss < 1e-12
    assert max(np.abs(g).max() for g in grads) < 1e-8


def test_duplicated_batch_gives_same_mean_gradient():
    params = init_params(3, seed=6)
    cloud = random_cloud(np.random.default_rng(6))[None]
    l1, g1 = param_gradient(params, cloud, [1])
    l2, g2 = param_gradient(params, np.concatenate([cloud, cloud]), [1, 1])
    assert l1 == pytest.approx(l2, rel=1e-14)
    for a, b in zip(g1, g2):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_param_gradient_rejects_bad_labels():
    params = init_params(3, seed=0)
    with pytest.raises(ValueError):
        param_gradient(params, np.zeros((1, 4, 3)), [3])
    with pytest.raises(ValueError):
        param_gradient(params, np.zeros((2, 4, 3)), [0])


def test_params_validate_layer_chain():
    params = init_params(3, seed=0)
    W, b = params.per_point[1]
    with pytest.raises(ValueError):
        ModelParams(params.per_point[:1] + ((W[:-1], b),) + params.per_point[2:], params.head)


# -- finite differences ---------------------------------------------------------------------


def test_input_gradient_matches_finite_differences():
    errors, skipped = smooth_instances(input_fd_error)
    assert skipped < 25
    assert max(errors) < 1e-4


def test_param_gradient_matches_finite_differences():
    errors = [param_fd_error(seed) for seed in range(50)]
    assert max(errors) < 1e-4


def test_added_gradient_equals_full_gradient_on_added_rows():
    params = init_params(4, seed=8)
    rng = np.random.default_rng(8)
    victim, added = random_cloud(rng, 64), random_cloud(rng, 8) * 1.3
    target = int(np.argmin(forward(params, np.vstack([added, victim]))))
    f, logits, grad = loss_and_added_gradient(params, pooled_features(params, victim), added, target)
    full = input_gradient(params, np.vstack([added, victim]), target)
    np.testing.assert_allclose(grad, full[:8], rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(logits, forward(params, np.vstack([added, victim])))


# -- critical points ---------------------------------------------------------------------------


def test_critical_point_examples():
    params = init_params(3, seed=0)
    single = critical_points(params, [[0.2, -0.1, 0.4]])
    np.testing.assert_array_equal(single.indices, [0])
    np.testing.assert_array_equal(single.channel_counts, [params.feature_width])
    dup = critical_points(params, np.tile([[0.3, 0.1, -0.2]], (10, 1)))
    np.testing.assert_array_equal(dup.indices, [0])


def test_critical_subset_reproduces_logits_bitwise():
    params = init_params(10, seed=9)
    for i in range(100):
        cloud = sample_shape(SHAPE_KINDS[i % 10], 256, seed=i)
        crit = critical_points(params, cloud)
        assert crit.channel_counts.sum() == params.feature_width
        assert forward(params, cloud[crit.indices]).tobytes() == forward(params, cloud).tobytes()


def test_top_orders_by_count_then_index():
    from pcadv.model import CriticalPointSet

    s = CriticalPointSet(np.array([1, 4, 7, 9]), np.array([2, 5, 2, 5]))
    np.testing.assert_array_equal(s.top(3), [4, 9, 1])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**31))
def test_critical_set_invariants(n, seed):
    params = init_params(3, seed=seed % 7, **SMALL)
    cloud = np.random.default_rng(seed).uniform(-1, 1, size=(n, 3))
    crit = critical_points(params, cloud)
    assert crit.channel_counts.sum() == params.feature_width
    assert len(np.unique(crit.indices)) == len(crit.indices)
    assert (crit.channel_counts >= 1).all()


# -- checkpoints ------------------------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    params = init_params(5, seed=11)
    save_checkpoint(tmp_path / "a.ckpt", params)
    loaded = load_checkpoint(tmp_path / "a.ckpt")
    assert loaded.point_widths == params.point_widths and loaded.head_widths == params.head_widths
    for a, b in zip(params.arrays(), loaded.arrays()):
        assert a.tobytes() == b.tobytes()
    save_checkpoint(tmp_path / "b.ckpt", loaded)
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    save_checkpoint(tmp_path / "a.ckpt", init_params(3, seed=0))
    data = (tmp_path / "a.ckpt").read_bytes()
    (tmp_path / "short.ckpt").write_bytes(data[:-4])
    (tmp_path / "long.ckpt").write_bytes(data + b"\0")
    (tmp_path / "magic.ckpt").write_bytes(b"X" + data[1:])
    for name in ("short", "long", "magic"):
        with pytest.raises(ValueError):
            load_checkpoint(tmp_path / f"{name}.ckpt")
