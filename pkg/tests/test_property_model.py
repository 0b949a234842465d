"""Running Gaussian property statistics and the 3-sigma inlier check."""

import numpy as np
import pytest

from moana.property_model import GaussianPropertyModel, is_inlier, update_properties


def feed(model, rows):
    for vx, vy, w, h in rows:
        update_properties(model, np.array([vx, vy]), w, h)


def random_rows(rng, n):
    return rng.normal(loc=[0.1, -0.05, 0.55, 1.75], scale=[0.3, 0.2, 0.05, 0.08], size=(n, 4))


def test_statistics_match_batch_oracle():
    rng = np.random.default_rng(17)
    rows = random_rows(rng, 257)
    model = GaussianPropertyModel()
    feed(model, rows)
    assert model.count == 257
    np.testing.assert_allclose(model.mean, rows.mean(axis=0), rtol=1e-10)
    np.testing.assert_allclose(model.std(), rows.std(axis=0, ddof=1), rtol=1e-10)


def test_statistics_oracle_across_sizes():
    rng = np.random.default_rng(99)
    for n in (2, 3, 10, 64):
        rows = random_rows(rng, n)
        model = GaussianPropertyModel()
        feed(model, rows)
        np.testing.assert_allclose(model.std(), rows.std(axis=0, ddof=1), rtol=1e-9)


def test_std_is_zero_before_two_samples():
    model = GaussianPropertyModel()
    np.testing.assert_array_equal(model.std(), np.zeros(4))
    update_properties(model, np.array([1.0, 2.0]), 0.5, 1.7)
    np.testing.assert_array_equal(model.std(), np.zeros(4))
    update_properties(model, np.array([1.2, 2.1]), 0.6, 1.8)
    assert np.all(model.std() > 0)


def test_warmup_accepts_anything():
    model = GaussianPropertyModel()
    feed(model, random_rows(np.random.default_rng(0), 9))
    # Nine samples is below the default warm-up count of ten.
    assert is_inlier(model, np.array([1e6, -1e6]), 1e6, 1e6)


def test_mean_is_inlier_after_warmup():
    rng = np.random.default_rng(5)
    rows = random_rows(rng, 50)
    model = GaussianPropertyModel()
    feed(model, rows)
    m = model.mean
    assert is_inlier(model, m[:2], m[2], m[3])


def test_four_sigma_rejected_on_each_axis():
    rng = np.random.default_rng(11)
    rows = rng.normal(loc=[0.1, 0.0, 0.55, 1.75], scale=0.2, size=(200, 4))
    model = GaussianPropertyModel()
    feed(model, rows)
    m, s = model.mean, np.maximum(model.std(), 0.05)
    for axis in range(4):
        probe = m.copy()
        probe[axis] += 4.0 * s[axis]
        assert not is_inlier(model, probe[:2], probe[2], probe[3])
        probe[axis] = m[axis] - 4.0 * s[axis]
        assert not is_inlier(model, probe[:2], probe[2], probe[3])


def test_exactly_three_sigma_is_inside():
    model = GaussianPropertyModel()
    feed(model, np.random.default_rng(2).normal(loc=0.5, scale=0.3, size=(100, 4)))
    m = model.mean
    s = np.maximum(model.std(), 0.05)
    probe = m + 3.0 * s  # boundary is inclusive
    assert is_inlier(model, probe[:2], probe[2], probe[3])


def test_sigma_floor_guards_degenerate_spread():
    # Constant observations give zero variance; without the floor any
    # deviation at all would be rejected.
    model = GaussianPropertyModel()
    feed(model, [(0.1, 0.0, 0.55, 1.75)] * 30)
    assert is_inlier(model, np.array([0.1, 0.0]), 0.55 + 0.14, 1.75)
    assert not is_inlier(model, np.array([0.1, 0.0]), 0.55 + 0.16, 1.75)


def test_custom_floor_and_min_count():
    model = GaussianPropertyModel()
    feed(model, [(0.0, 0.0, 0.5, 1.7)] * 5)
    assert is_inlier(model, np.array([9.9, 9.9]), 9.9, 9.9, min_count=6)
    assert not is_inlier(model, np.array([9.9, 9.9]), 9.9, 9.9, min_count=5)
    # A generous floor re-admits the same probe.
    assert is_inlier(model, np.array([9.9, 9.9]), 9.9, 9.9, min_count=5, sigma_floor=(4.0,) * 4)


def test_bad_velocity_shape_raises():
    model = GaussianPropertyModel()
    with pytest.raises(ValueError):
        update_properties(model, np.array([1.0, 2.0, 3.0]), 0.5, 1.7)
    feed(model, [(0.0, 0.0, 0.5, 1.7)] * 12)
    with pytest.raises(ValueError):
        is_inlier(model, np.array([1.0]), 0.5, 1.7)
