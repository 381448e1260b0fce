import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcacc.augment import (CropTriplet, OverlapMap, make_views, perturb,
                           sample_crop_boundaries)


@given(T=st.integers(3, 400), min_overlap=st.integers(1, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_sampled_crops_are_valid(T, min_overlap, seed):
    if T < min_overlap + 2:
        with pytest.raises(ValueError):
            sample_crop_boundaries(T, min_overlap, seed)
        return
    c = sample_crop_boundaries(T, min_overlap, seed)
    assert 0 <= c.m1 < c.n1 <= c.m2 <= c.n2 <= T
    assert c.m2 - c.n1 >= min_overlap


def test_small_series_boundaries():
    rng = np.random.default_rng(0)
    seen = {sample_crop_boundaries(3, 1, rng) for _ in range(500)}
    for c in seen:
        assert c.is_valid(3)
    # every feasible triplet for T=3 shows up
    assert len(seen) == 5
    with pytest.raises(ValueError):
        sample_crop_boundaries(2, 1, rng)


def feasible(T, min_overlap):
    return [CropTriplet(m1, n1, m2, n2) for m1 in range(T) for n1 in range(m1 + 1, T + 1)
            for m2 in range(n1, T + 1) for n2 in range(m2, T + 1) if m2 - n1 >= min_overlap]


@pytest.mark.parametrize("T,min_overlap", [(5, 1), (7, 3)])
def test_crop_sampling_is_uniform(T, min_overlap):
    rng = np.random.default_rng(1)
    support = feasible(T, min_overlap)
    counts = dict.fromkeys(support, 0)
    for _ in range(30000):
        counts[sample_crop_boundaries(T, min_overlap, rng)] += 1
    freq = np.array(list(counts.values())) / 30000
    assert np.allclose(freq, 1 / len(support), rtol=0.15)


def test_long_overlap_is_fast():
    rng = np.random.default_rng(2)
    for _ in range(200):
        c = sample_crop_boundaries(500, 497, rng)
        assert c.m2 - c.n1 >= 497 and 0 <= c.m1 < c.n1 <= c.m2 <= c.n2 <= 500


def test_perturb_identity_and_shape():
    x = np.arange(12.0).reshape(3, 4)
    np.testing.assert_array_equal(perturb(x, 0.0, 0), x)
    for shape in [(5,), (2, 3), (2, 3, 4)]:
        assert perturb(np.zeros(shape), 0.3, 0).shape == shape


def test_perturb_moments_and_determinism():
    x = np.zeros((100, 200))
    a, b = perturb(x, 0.1, 7), perturb(x, 0.1, 7)
    np.testing.assert_array_equal(a, b)
    assert abs((a - x).std() - 0.1) < 0.02
    assert abs((a - x).mean()) < 0.01


def test_hand_index_example():
    batch = np.arange(10.0)[None, :]
    v = make_views(batch, CropTriplet(0, 2, 6, 9), sigma=0.0)
    assert v.xb.tolist() == [[0, 1, 2, 3, 4, 5]]
    assert v.xc.tolist() == [[2, 3, 4, 5, 6, 7, 8]]
    assert v.xa.tolist() == [[2, 3, 4, 5]]
    assert v.overlap == OverlapMap(a_start=0, b_start=2, c_start=0, length=4)


def test_views_agree_on_overlap_without_noise():
    rng = np.random.default_rng(2)
    batch = rng.normal(size=(8, 50))
    for _ in range(200):
        crop = sample_crop_boundaries(50, 1, rng)
        v = make_views(batch, crop, sigma=0.0, rng=rng)
        np.testing.assert_array_equal(v.on_overlap("a"), v.on_overlap("b"))
        np.testing.assert_array_equal(v.on_overlap("b"), v.on_overlap("c"))
        np.testing.assert_array_equal(v.on_overlap("b"), batch[:, crop.n1:crop.m2])
        assert v.xa.shape[0] == v.xb.shape[0] == v.xc.shape[0] == 8


def test_noisy_view_only_differs_in_a():
    batch = np.random.default_rng(4).normal(size=(4, 30))
    crop = CropTriplet(3, 10, 20, 25)
    v = make_views(batch, crop, sigma=0.5, rng=0)
    np.testing.assert_array_equal(v.xb, batch[:, 3:20])
    np.testing.assert_array_equal(v.xc, batch[:, 10:25])
    assert v.xa.shape == (4, 10)
    assert not np.allclose(v.xa, batch[:, 10:20])


@settings(max_examples=200)
@given(T=st.integers(4, 200), seed=st.integers(0, 10 ** 6))
def test_pairing_supports(T, seed):
    c = sample_crop_boundaries(T, 1, seed)
    a, b, cc = set(range(c.n1, c.m2)), set(range(c.m1, c.m2)), set(range(c.n1, c.n2))
    assert a <= b          # subseries pair
    assert b != cc         # contextual pair has distinct supports
    assert a <= cc and a == b & cc


def test_crop_exceeding_series():
    with pytest.raises(ValueError):
        make_views(np.zeros((2, 5)), CropTriplet(0, 2, 4, 6))
