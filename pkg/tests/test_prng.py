import numpy as np

from efftemp.prng import TAG_INIT, TAG_PHASE, normal, stream, uniform_angles


def test_same_key_same_draws():
    a = stream(TAG_INIT, 42).standard_normal(100)
    b = stream(TAG_INIT, 42).standard_normal(100)
    assert np.array_equal(a, b)


def test_tags_are_independent_streams():
    a = stream(TAG_INIT, 0).standard_normal(50)
    b = stream(TAG_PHASE, 0).standard_normal(50)
    assert not np.allclose(a, b)


def test_seeds_are_independent():
    a = normal(TAG_INIT, 1, 50, 0.1)
    b = normal(TAG_INIT, 2, 50, 0.1)
    assert not np.allclose(a, b)


def test_normal_scale():
    draws = normal(TAG_INIT, 3, 200_000, 0.1)
    assert abs(draws.std() - 0.1) < 2e-3
    assert abs(draws.mean()) < 2e-3


def test_uniform_angles_range():
    ang = uniform_angles(TAG_PHASE, 7, 10_000)
    assert ang.min() >= 0.0
    assert ang.max() < 2.0 * np.pi
