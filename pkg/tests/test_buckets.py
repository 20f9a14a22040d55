import numpy as np
import pytest
from hypothesis import given, strategies as st

from drill.buckets import (
    BucketDistribution,
    expectation,
    make_buckets,
    normalized_std,
    softmax,
    target_bucket,
    target_buckets,
)

finite_logits = st.lists(
    st.floats(min_value=-30, max_value=30, allow_nan=False), min_size=1, max_size=64
)


def random_distribution(rng, n):
    return softmax(rng.standard_normal(n) * 2.0)


class TestMakeBuckets:
    def test_unit_capacity(self):
        spec = make_buckets(0, 4, 5)
        assert np.array_equal(spec.values, [0.0, 1.0, 2.0, 3.0, 4.0])
        assert spec.capacity == 1.0

    def test_default_grid_on_a_1_to_5_scale(self):
        spec = make_buckets(1, 5, 200)
        assert spec.values[0] == 1.0
        assert spec.values[-1] == 5.0
        assert spec.capacity == pytest.approx(4.0 / 199.0, rel=0, abs=1e-15)

    def test_wide_integer_range(self):
        spec = make_buckets(0, 24, 100)
        assert spec.capacity == pytest.approx(24.0 / 99.0, rel=0, abs=1e-12)
        assert spec.count == 100

    def test_values_strictly_increasing_constant_step(self):
        spec = make_buckets(-2.5, 7.0, 37)
        steps = np.diff(spec.values)
        assert np.all(steps > 0)
        assert np.allclose(steps, spec.capacity, rtol=0, atol=1e-12)

    @pytest.mark.parametrize(
        "lo,hi,count",
        [(0, 0, 5), (1, -1, 5), (0, 4, 1), (0, 4, 0), (np.inf, 4, 5), (0, np.nan, 5)],
    )
    def test_invalid_arguments(self, lo, hi, count):
        with pytest.raises(ValueError):
            make_buckets(lo, hi, count)


class TestSoftmax:
    def test_uniform_on_equal_logits(self):
        assert np.allclose(softmax([0, 0, 0, 0]), 0.25, rtol=0, atol=1e-15)

    def test_closed_form_two_entries(self):
        out = softmax([np.log(1.0), np.log(3.0)])
        assert np.allclose(out, [0.25, 0.75], rtol=0, atol=1e-12)

    @given(finite_logits, st.floats(min_value=-50, max_value=50, allow_nan=False))
    def test_shift_invariance(self, logits, shift):
        a = softmax(np.asarray(logits))
        b = softmax(np.asarray(logits) + shift)
        assert np.allclose(a, b, rtol=0, atol=1e-12)

    @given(finite_logits)
    def test_normalized_positive_argmax_preserved(self, logits):
        z = np.asarray(logits)
        p = softmax(z)
        assert abs(p.sum() - 1.0) < 1e-12
        assert np.all(p > 0) and np.all(p < 1 + 1e-12)
        assert p.argmax() == z.argmax()

    def test_rejects_empty_and_non_finite(self):
        with pytest.raises(ValueError):
            softmax([])
        with pytest.raises(ValueError):
            softmax([1.0, np.inf])


class TestExpectation:
    def test_uniform_mean(self):
        spec = make_buckets(0, 4, 5)
        dist = BucketDistribution(np.full(5, 0.2))
        assert expectation(dist, spec) == pytest.approx(2.0, abs=1e-15)

    def test_direct_summation(self):
        spec = make_buckets(0, 3, 4)
        dist = BucketDistribution(np.array([0.1, 0.2, 0.3, 0.4]))
        # 0.1*0 + 0.2*1 + 0.3*2 + 0.4*3
        assert expectation(dist, spec) == pytest.approx(2.0, abs=1e-15)

    def test_one_hot_hits_bucket_values_exactly(self):
        spec = make_buckets(1, 5, 9)
        for i in range(spec.count):
            probs = np.zeros(9)
            probs[i] = 1.0
            assert expectation(BucketDistribution(probs), spec) == spec.values[i]

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            expectation(BucketDistribution(np.full(4, 0.25)), make_buckets(0, 1, 5))

    @given(st.integers(min_value=2, max_value=40), st.integers(min_value=0, max_value=2**32 - 1))
    def test_within_bucket_range(self, count, seed):
        spec = make_buckets(-3, 11, count)
        dist = BucketDistribution(random_distribution(np.random.default_rng(seed), count))
        val = expectation(dist, spec)
        assert spec.values[0] <= val <= spec.values[-1]


class TestTargetBucket:
    def test_nearest_bucket(self):
        spec = make_buckets(0, 4, 5)
        t = target_bucket(2.4, spec)
        assert spec.values[t] == 2.0

    def test_exact_hits(self):
        spec = make_buckets(1, 5, 17)
        for i, v in enumerate(spec.values):
            assert target_bucket(float(v), spec) == i

    def test_midpoint_tie_goes_low(self):
        spec = make_buckets(0, 1, 2)
        assert spec.values[target_bucket(0.5, spec)] == 0.0

    def test_out_of_range_clamped(self):
        spec = make_buckets(1, 5, 5)
        assert target_bucket(-100.0, spec) == 0
        assert target_bucket(100.0, spec) == spec.count - 1

    def test_rejects_non_finite(self):
        spec = make_buckets(0, 1, 3)
        with pytest.raises(ValueError):
            target_bucket(np.nan, spec)

    def test_batch_matches_scalar(self):
        spec = make_buckets(-1, 1, 11)
        labels = np.linspace(-1.3, 1.3, 31)
        batch = target_buckets(labels, spec)
        assert [target_bucket(v, spec) for v in labels] == list(batch)

    @given(st.integers(min_value=2, max_value=64))
    def test_round_trip_over_grid(self, count):
        spec = make_buckets(-2, 9, count)
        assert np.array_equal(target_buckets(spec.values, spec), np.arange(count))


class TestNormalizedStd:
    def test_one_hot_is_zero(self):
        spec = make_buckets(0, 4, 5)
        probs = np.zeros(5)
        probs[3] = 1.0
        assert normalized_std(BucketDistribution(probs), spec) == 0.0

    def test_two_point_extreme(self):
        spec = make_buckets(0, 7, 2)
        dist = BucketDistribution(np.array([0.5, 0.5]))
        assert normalized_std(dist, spec) == pytest.approx(0.5, abs=1e-15)

    def test_uniform_five_buckets(self):
        spec = make_buckets(2, 3, 5)
        dist = BucketDistribution(np.full(5, 0.2))
        # direct summation over positions [0, .25, .5, .75, 1]
        assert normalized_std(dist, spec) == pytest.approx(np.sqrt(0.125), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            normalized_std(BucketDistribution(np.full(4, 0.25)), make_buckets(0, 1, 5))

    @given(st.integers(min_value=2, max_value=128), st.integers(min_value=0, max_value=2**32 - 1))
    def test_bounded_by_half(self, count, seed):
        spec = make_buckets(0, 10, count)
        dist = BucketDistribution(random_distribution(np.random.default_rng(seed), count))
        assert 0.0 <= normalized_std(dist, spec) <= 0.5 + 1e-12


class TestBucketDistribution:
    def test_from_logits_consistency(self):
        dist = BucketDistribution.from_logits([1.0, 2.0, 0.5])
        assert np.allclose(dist.probs, softmax([1.0, 2.0, 0.5]), atol=0)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError):
            BucketDistribution(np.array([0.5, 0.6]))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            BucketDistribution(np.array([1.2, -0.2]))

    def test_rejects_length_mismatch(self):
        with pytest.raises(ValueError):
            BucketDistribution(np.array([0.5, 0.5]), logits=np.zeros(3))
