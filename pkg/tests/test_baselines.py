import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairnorm.baselines import (
    MinMaxStats,
    baseline_decide,
    fit_minmax,
    minmax_normalize,
    slf_fuse,
    slf_fuse_arrays,
)
from fairnorm.errors import NumericError
from fairnorm.thresholds import threshold_at_fmr


class TestBaselineDecide:
    def test_above(self):
        assert baseline_decide(0.7, 0.6) is True

    def test_tie_is_match(self):
        assert baseline_decide(0.6, 0.6) is True

    def test_below(self):
        assert baseline_decide(0.5, 0.6) is False


class TestMinMax:
    def test_fit(self):
        stats = fit_minmax([0.2, 0.5, 0.8])
        assert (stats.lo, stats.hi) == (0.2, 0.8)

    def test_midpoint(self):
        stats = MinMaxStats(0.2, 0.8)
        assert minmax_normalize(0.5, stats) == pytest.approx(0.5)

    def test_out_of_range_not_clipped(self):
        stats = MinMaxStats(0.2, 0.8)
        assert minmax_normalize(0.9, stats) == pytest.approx(7.0 / 6.0)
        assert minmax_normalize(0.0, stats) < 0.0

    def test_degenerate_rejected(self):
        with pytest.raises(NumericError, match="degenerate"):
            fit_minmax([0.4, 0.4, 0.4])
        with pytest.raises(NumericError):
            fit_minmax([0.4])
        with pytest.raises(NumericError):
            MinMaxStats(0.5, 0.5)


class TestFuse:
    def test_both_at_max(self):
        stats = [MinMaxStats(0.0, 1.0), MinMaxStats(-1.0, 2.0)]
        assert slf_fuse([1.0, 2.0], stats) == pytest.approx(2.0)

    def test_both_at_midrange(self):
        stats = [MinMaxStats(0.0, 1.0), MinMaxStats(0.0, 2.0)]
        assert slf_fuse([0.5, 1.0], stats) == pytest.approx(1.0)

    def test_hand_case(self):
        # 0.5 in [0,1] -> 0.5; 0.3 in [0.1,0.6] -> 0.4; sum 0.9
        stats = [MinMaxStats(0.0, 1.0), MinMaxStats(0.1, 0.6)]
        assert slf_fuse([0.5, 0.3], stats) == pytest.approx(0.9)

    def test_length_mismatch(self):
        with pytest.raises(NumericError, match="scores for"):
            slf_fuse([0.5], [MinMaxStats(0.0, 1.0), MinMaxStats(0.0, 1.0)])

    def test_needs_two_systems(self):
        with pytest.raises(NumericError, match="at least 2"):
            slf_fuse([0.5], [MinMaxStats(0.0, 1.0)])

    @given(
        s1=st.floats(-1, 1), s2=st.floats(-1, 1),
        bump=st.floats(min_value=1e-6, max_value=0.5),
        which=st.integers(0, 1),
    )
    @settings(max_examples=300)
    def test_strictly_increasing_in_each_score(self, s1, s2, bump, which):
        stats = [MinMaxStats(-1.0, 1.0), MinMaxStats(-2.0, 2.0)]
        base = slf_fuse([s1, s2], stats)
        bumped = [s1, s2]
        bumped[which] += bump
        assert slf_fuse(bumped, stats) > base

    def test_array_fusion_matches_scalar(self, rng):
        stats = [MinMaxStats(-1.0, 1.0), MinMaxStats(0.0, 0.5)]
        a = rng.uniform(-1, 1, size=50)
        b = rng.uniform(0, 0.5, size=50)
        fused = slf_fuse_arrays([a, b], stats)
        for idx in range(50):
            assert fused[idx] == pytest.approx(
                slf_fuse([a[idx], b[idx]], stats), abs=1e-12
            )

    def test_affine_rescaling_invariance_of_decisions(self, rng):
        # rescaling a system's raw scores consistently in train and test leaves
        # fused decisions at an FMR-anchored threshold unchanged
        train = [rng.uniform(-1, 1, size=400), rng.uniform(-1, 1, size=400)]
        test = [rng.uniform(-1, 1, size=300), rng.uniform(-1, 1, size=300)]
        genuine = rng.random(300) < 0.3

        def decisions(scale, offset):
            tr = [train[0] * scale + offset, train[1]]
            te = [test[0] * scale + offset, test[1]]
            stats = [fit_minmax(s) for s in tr]
            fused = slf_fuse_arrays(te, stats)
            t = threshold_at_fmr(fused[~genuine], 0.05)
            return fused >= t

        base = decisions(1.0, 0.0)
        scaled = decisions(3.5, -0.7)
        assert np.array_equal(base, scaled)
