import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_profile
from phytopulse import (
    count_peaks,
    derived_features,
    extract_features,
    percentile,
    proposed_features,
    shannon_entropy,
    third_central_moment,
    with_scaled_feature,
)
from phytopulse.features import FeatureMatrix, feature_names

finite_values = st.lists(
    st.floats(min_value=-1e4, max_value=1e4, allow_nan=False, allow_infinity=False),
    min_size=1,
    max_size=40,
)


class TestPercentile:
    def test_single_element(self):
        assert percentile([5], 30) == 5

    def test_hand_evaluated_interpolation(self):
        # h = 9 * 0.3 = 2.7 -> v[2] + 0.7 * (v[3] - v[2]) = 30 + 7
        assert percentile([10, 20, 30, 40, 50, 60, 70, 80, 90, 100], 30) == pytest.approx(37.0)

    def test_zero_is_minimum(self):
        assert percentile([9, 2, 5], 0) == 2

    def test_hundred_is_maximum(self):
        assert percentile([9, 2, 5], 100) == 9

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            percentile([], 30)

    def test_out_of_range_m_rejected(self):
        with pytest.raises(ValueError):
            percentile([1.0], 130)

    @settings(max_examples=150, deadline=None)
    @given(finite_values, st.floats(min_value=0, max_value=100))
    def test_matches_oracle(self, values, m):
        assert percentile(values, m) == pytest.approx(
            oracles.percentile_oracle(values, m), abs=1e-9, rel=1e-9
        )

    @settings(max_examples=100, deadline=None)
    @given(finite_values, st.floats(0, 100), st.floats(0, 100))
    def test_monotone_in_m(self, values, m1, m2):
        lo, hi = sorted((m1, m2))
        assert percentile(values, lo) <= percentile(values, hi) + 1e-12


class TestThirdMoment:
    def test_symmetric_sequence_is_zero(self):
        assert third_central_moment([1, 2, 3]) == pytest.approx(0.0, abs=1e-12)

    def test_constant_is_zero(self):
        assert third_central_moment([0, 0, 0]) == 0.0

    def test_direct_evaluation(self):
        assert third_central_moment([0, 0, 3]) == pytest.approx(2.0)

    @settings(max_examples=150, deadline=None)
    @given(finite_values)
    def test_matches_oracle(self, values):
        scale = max(1.0, max(abs(v) for v in values)) ** 3
        assert third_central_moment(values) == pytest.approx(
            oracles.third_moment_oracle(values), abs=1e-9 * scale
        )

    @settings(max_examples=100, deadline=None)
    @given(finite_values)
    def test_mirrored_sequence_is_zero(self, values):
        mirrored = list(values) + [2 * np.mean(values) - v for v in values]
        scale = max(1.0, max(abs(v) for v in mirrored)) ** 3
        assert abs(third_central_moment(mirrored)) <= 1e-9 * scale


class TestEntropy:
    def test_uniform_maximizes(self):
        assert shannon_entropy([1, 1, 1, 1]) == pytest.approx(math.log(4))

    def test_point_mass_is_zero(self):
        assert shannon_entropy([0, 7, 0]) == 0.0

    def test_direct_evaluation(self):
        expected = -(0.25 * math.log(0.25) + 0.75 * math.log(0.75))
        assert shannon_entropy([1, 3]) == pytest.approx(expected, abs=1e-6)
        assert expected == pytest.approx(0.562335, abs=1e-6)

    def test_all_zero_mass_is_zero(self):
        assert shannon_entropy([0.0, 0.0]) == 0.0
        assert shannon_entropy([-1.0, -2.0]) == 0.0

    def test_negatives_clamped(self):
        assert shannon_entropy([-5.0, 7.0]) == 0.0

    @settings(max_examples=200, deadline=None)
    @given(finite_values)
    def test_range_and_oracle(self, values):
        e = shannon_entropy(values)
        assert 0.0 <= e <= math.log(len(values)) + 1e-12
        assert e == pytest.approx(oracles.entropy_oracle(values), abs=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=1e-3, max_value=1e4), st.integers(1, 30))
    def test_constant_positive_hits_log_n(self, value, n):
        assert shannon_entropy([value] * n) == pytest.approx(math.log(n), abs=1e-9)


class TestCountPeaks:
    @pytest.mark.parametrize(
        "values,expected",
        [
            ([0, 1, 0], 1),
            ([1, 2, 3, 4], 0),
            ([0, 2, 1, 3, 0], 2),
            ([0, 2, 2, 1], 1),
            ([5], 0),
            ([2, 2, 2], 0),
            ([0, 1], 0),
            ([1, 0, 1], 0),
            ([0, 2, 2, 3, 1], 1),
        ],
    )
    def test_cases(self, values, expected):
        assert count_peaks(values) == expected

    @settings(max_examples=200, deadline=None)
    @given(finite_values)
    def test_matches_oracle(self, values):
        assert count_peaks(values) == oracles.count_peaks_oracle(values)

    @settings(max_examples=150, deadline=None)
    @given(finite_values)
    def test_reversal_invariant(self, values):
        assert count_peaks(values) == count_peaks(values[::-1])


class TestProposedFeatures:
    def test_all_zero_profile_block(self):
        vec = proposed_features(make_profile([0.0, 0.0, 0.0]))
        assert vec.shape == (72,)
        for c in range(8):
            block = vec[c * 9 : (c + 1) * 9]
            assert block.tolist() == [0, 0, 0, 0, 0, 0, 0, 3, 0]

    def test_dimension_is_72(self, small_dataset):
        assert proposed_features(small_dataset.profiles[0]).shape == (72,)

    def test_hand_evaluated_block(self):
        vec = proposed_features(make_profile([0.0, 1.0, 0.0]))
        block = vec[:9]
        expected = [0.0, 1.0, 1 / 3, math.sqrt(2 / 9), 0.0, 2 / 27, 1.0, 3.0, 0.0]
        assert block == pytest.approx(expected, abs=1e-12)
        assert block[5] == pytest.approx(0.0740741, abs=1e-7)

    def test_pure_function_bit_identical(self, small_dataset):
        p = small_dataset.profiles[0]
        assert np.array_equal(proposed_features(p), proposed_features(p))


class TestDerivedFeatures:
    def test_hand_evaluated_block(self):
        vec = derived_features(make_profile([0.0, 4.0, 0.0], sampling_step=0.5))
        assert vec[:4].tolist() == [1.5, 4.0, 4.0, 1.0]

    def test_dimension_is_32(self, small_dataset):
        assert derived_features(small_dataset.profiles[0]).shape == (32,)

    def test_zero_channel_of_length_two(self):
        vec = derived_features(make_profile([0.0, 0.0], sampling_step=0.5))
        assert vec[:4].tolist() == [1.0, 0.0, 0.0, 0.0]


class TestFeatureMatrix:
    def test_extract_layout(self, small_dataset):
        fm = extract_features(small_dataset, "proposed")
        assert fm.rows.shape == (len(small_dataset), 72)
        assert fm.names[:2] == ("fws_percentile30", "fws_max")
        assert fm.names[9] == "sws_hs_percentile30"
        assert fm.row_ids == small_dataset.ids()

    def test_derived_names(self):
        names = feature_names("derived")
        assert len(names) == 32
        assert names[0] == "fws_length_um"
        assert names[-1] == "fly_ls_nop"

    def test_wrong_dimension_rejected(self):
        with pytest.raises(ValueError, match="32"):
            FeatureMatrix(
                family="derived",
                names=("a", "b"),
                rows=np.zeros((1, 2)),
                row_ids=("x",),
                labels=("l",),
            )

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            FeatureMatrix(
                family="dissimilarity",
                names=("a",),
                rows=np.array([[np.inf]]),
                row_ids=("x",),
                labels=(None,),
            )

    def test_with_scaled_feature(self, small_dataset):
        fm = extract_features(small_dataset, "proposed")
        scaled = with_scaled_feature(fm, "fws_max", 4.0)
        i = fm.names.index("fws_max")
        assert np.allclose(scaled.rows[:, i], fm.rows[:, i] * 4.0)
        other = [j for j in range(fm.p) if j != i]
        assert np.array_equal(scaled.rows[:, other], fm.rows[:, other])
        with pytest.raises(ValueError):
            with_scaled_feature(fm, "fws_max", 0.0)
