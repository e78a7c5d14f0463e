import numpy as np
import pytest

from pcadv.shapes import SHAPE_KINDS, ShapeSpec, jittered_spec, sample_shape


def test_sphere_points_have_unit_norm():
    pts = sample_shape(ShapeSpec("sphere", {"radius": 1.0}), 4, seed=7)
    assert pts.shape == (4, 3)
    np.testing.assert_allclose(np.linalg.norm(pts, axis=1), 1.0, atol=1e-9)


def test_sampling_is_deterministic():
    a = sample_shape(ShapeSpec("cube", {"side": 2.0}), 256, seed=1)
    b = sample_shape(ShapeSpec("cube", {"side": 2.0}), 256, seed=1)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, sample_shape("cube", 256, seed=2))


def test_cube_faces_are_equally_likely():
    pts = sample_shape(ShapeSpec("cube", {"side": 2.0}), 100000, seed=3)
    half = np.abs(pts).max()
    on_face = np.isclose(np.abs(pts), half, atol=1e-12)
    axis = np.argmax(on_face, axis=1)
    sign = pts[np.arange(len(pts)), axis] > 0
    fractions = np.bincount(axis * 2 + sign, minlength=6) / len(pts)
    np.testing.assert_allclose(fractions, 1 / 6, atol=0.01)


@pytest.mark.parametrize("kind", SHAPE_KINDS)
def test_every_shape_is_inside_the_unit_ball(kind):
    pts = sample_shape(kind, 500, seed=0)
    norms = np.linalg.norm(pts, axis=1)
    assert norms.max() == pytest.approx(1.0, abs=1e-12)
    assert np.isfinite(pts).all()


def test_cylinder_area_split():
    # lateral area 2*pi*r*h vs caps 2*pi*r^2 with r=0.5, h=2: lateral share 0.8
    pts = sample_shape("cylinder", 50000, seed=4)
    top = pts[:, 2].max()
    on_caps = np.isclose(np.abs(pts[:, 2]), top, atol=1e-12)
    assert on_caps.mean() == pytest.approx(0.2, abs=0.01)


def test_unknown_shape_and_parameter():
    with pytest.raises(ValueError, match="unknown shape"):
        sample_shape("dodecahedron", 10, seed=0)
    with pytest.raises(ValueError, match="unknown parameters"):
        sample_shape(ShapeSpec("sphere", {"edge": 1.0}), 10, seed=0)
    with pytest.raises(ValueError):
        sample_shape("sphere", 0, seed=0)


def test_jittered_spec_stays_in_range():
    rng = np.random.default_rng(0)
    spec = jittered_spec("torus", rng, amount=0.2)
    assert 0.8 <= spec.params["major"] <= 1.2
    assert 0.24 <= spec.params["minor"] <= 0.36
