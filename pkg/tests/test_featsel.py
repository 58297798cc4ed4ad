import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loadpatterns.errors import LengthMismatchError
from loadpatterns.featsel import (
    CONTINUOUS,
    DISCRETE,
    FeatureColumn,
    MeritSubsetSelector,
    discretize_column,
    entropy,
    merit,
    mutual_info,
    pearson_matrix,
    quantile_discretize,
    select_subset,
    symmetric_uncertainty,
)
from loadpatterns.ingest import CONTINUOUS_FEATURES, FEATURE_NAMES, feature_matrix
from loadpatterns.synthgen import _draw_survey, true_distributions


def naive_entropy(values):
    counts = Counter(values)
    n = len(values)
    return -sum(c / n * math.log2(c / n) for c in counts.values())


def naive_mi(x, y):
    joint = Counter(zip(x, y))
    px, py = Counter(x), Counter(y)
    n = len(x)
    total = 0.0
    for (a, b), c in joint.items():
        p = c / n
        total += p * math.log2(p / ((px[a] / n) * (py[b] / n)))
    return total


def table_to_columns(joint_counts):
    """Expand a {(x, y): count} table into paired label arrays."""
    xs, ys = [], []
    for (a, b), c in joint_counts.items():
        xs += [a] * c
        ys += [b] * c
    return np.array(xs), np.array(ys)


class TestDiscretize:
    def test_equal_frequency_on_1_to_100(self):
        labels = quantile_discretize(np.arange(1, 101), bins=5)
        assert sorted(Counter(labels.tolist()).values()) == [20, 20, 20, 20, 20]

    def test_constant_column_single_label(self):
        labels = quantile_discretize(np.full(30, 7.0), bins=5)
        assert set(labels.tolist()) == {0}

    def test_bins_validation(self):
        with pytest.raises(ValueError):
            quantile_discretize(np.arange(10), bins=1)

    def test_discrete_column_passes_through_untouched(self):
        codes = np.array([1, 4, 2, 3, 1, 2])
        col = FeatureColumn("education", codes, DISCRETE)
        assert np.array_equal(discretize_column(col, bins=5), codes)

    def test_continuous_column_is_binned(self):
        col = FeatureColumn("sqft", np.linspace(800, 4000, 50), CONTINUOUS)
        assert set(discretize_column(col, bins=5).tolist()) == {0, 1, 2, 3, 4}


class TestEntropy:
    def test_uniform_binary_is_one_bit(self):
        assert entropy([0, 1] * 10) == pytest.approx(1.0, abs=1e-12)

    def test_constant_is_zero(self):
        assert entropy([3] * 8) == 0.0

    def test_quarter_three_quarter_split(self):
        values = [0] * 25 + [1] * 75
        assert entropy(values) == pytest.approx(0.8112781244591328, abs=1e-12)

    def test_matches_naive_counter_evaluation(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            values = rng.integers(0, 5, int(rng.integers(5, 60))).tolist()
            assert entropy(values) == pytest.approx(naive_entropy(values), abs=1e-12)


class TestMutualInfo:
    def test_constructed_independent_columns(self):
        # product table: every (x, y) combination appears n_x * m_y times
        x, y = table_to_columns({(a, b): (a + 1) * (b + 2) for a in range(3) for b in range(2)})
        assert mutual_info(x, y) == pytest.approx(0.0, abs=1e-12)

    def test_self_information_equals_entropy(self):
        rng = np.random.default_rng(1)
        x = rng.integers(0, 4, 40)
        assert mutual_info(x, x) == pytest.approx(entropy(x), abs=1e-12)

    def test_two_by_two_table(self):
        x, y = table_to_columns({(0, 0): 40, (0, 1): 10, (1, 0): 10, (1, 1): 40})
        assert mutual_info(x, y) == pytest.approx(0.27807190511263774, abs=1e-10)

    def test_matches_naive_counter_evaluation(self):
        rng = np.random.default_rng(2)
        for _ in range(30):
            n = int(rng.integers(5, 60))
            x = rng.integers(0, 4, n)
            y = rng.integers(0, 3, n)
            assert mutual_info(x, y) == pytest.approx(naive_mi(x, y), abs=1e-12)

    def test_non_negative(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(4, 40))
            assert mutual_info(rng.integers(0, 5, n), rng.integers(0, 5, n)) >= 0.0

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatchError):
            mutual_info([0, 1], [0, 1, 2])


class TestSymmetricUncertainty:
    def test_identical_non_constant_column(self):
        x = np.array([0, 1, 2, 0, 1, 2])
        assert symmetric_uncertainty(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_independent_columns(self):
        x, y = table_to_columns({(a, b): 10 for a in range(2) for b in range(2)})
        assert symmetric_uncertainty(x, y) == pytest.approx(0.0, abs=1e-12)

    def test_two_by_two_table_with_uniform_marginals(self):
        x, y = table_to_columns({(0, 0): 40, (0, 1): 10, (1, 0): 10, (1, 1): 40})
        assert symmetric_uncertainty(x, y) == pytest.approx(0.27807190511263774, abs=1e-10)

    def test_both_constant_is_zero(self):
        assert symmetric_uncertainty([1] * 10, [2] * 10) == 0.0

    def test_symmetry_and_bounds(self):
        rng = np.random.default_rng(4)
        for _ in range(60):
            n = int(rng.integers(4, 50))
            x = rng.integers(0, 4, n)
            y = rng.integers(0, 4, n)
            su_xy = symmetric_uncertainty(x, y)
            su_yx = symmetric_uncertainty(y, x)
            assert abs(su_xy - su_yx) <= 1e-12
            assert 0.0 <= su_xy <= 1.0

    @given(st.data())
    @settings(max_examples=50, deadline=None)
    def test_relabeling_leaves_measures_unchanged(self, data):
        n = data.draw(st.integers(min_value=4, max_value=30))
        x = np.array(data.draw(st.lists(
            st.integers(min_value=0, max_value=3), min_size=n, max_size=n)))
        y = np.array(data.draw(st.lists(
            st.integers(min_value=0, max_value=3), min_size=n, max_size=n)))
        relabel = {0: 7, 1: 3, 2: 11, 3: 5}
        x2 = np.array([relabel[v] for v in x])
        assert entropy(x2) == pytest.approx(entropy(x), abs=1e-12)
        assert mutual_info(x2, y) == pytest.approx(mutual_info(x, y), abs=1e-12)
        assert symmetric_uncertainty(x2, y) == pytest.approx(
            symmetric_uncertainty(x, y), abs=1e-12
        )


class TestMerit:
    def test_singleton_equals_target_su(self):
        su_target = np.array([0.4, 0.7])
        su_pair = np.eye(2)
        assert merit((1,), su_target, su_pair) == pytest.approx(0.7, abs=1e-15)

    def test_two_independent_features_scale_by_sqrt2(self):
        s = 0.6
        su_target = np.array([s, s])
        su_pair = np.eye(2)  # zero cross-redundancy
        assert merit((0, 1), su_target, su_pair) == pytest.approx(
            s * math.sqrt(2), abs=1e-12
        )

    def test_three_feature_subset_matches_reimplementation(self):
        rng = np.random.default_rng(5)
        n = 80
        cols = [rng.integers(0, 3, n) for _ in range(3)]
        target = rng.integers(0, 4, n)
        su_t = np.array([symmetric_uncertainty(c, target) for c in cols])
        su_p = np.eye(3)
        for i in range(3):
            for j in range(i + 1, 3):
                su_p[i, j] = su_p[j, i] = symmetric_uncertainty(cols[i], cols[j])

        # independent recomputation: explicit double sum over the SU matrix
        subset = (0, 1, 2)
        numer = sum(su_t[i] for i in subset)
        denom = sum(su_p[i, j] for i in subset for j in subset)
        assert merit(subset, su_t, su_p) == pytest.approx(
            numer / math.sqrt(denom), abs=1e-12
        )

    def test_diagonal_toggle(self):
        su_target = np.array([0.5, 0.5])
        su_pair = np.array([[1.0, 0.2], [0.2, 1.0]])
        with_diag = merit((0, 1), su_target, su_pair, include_diagonal=True)
        without = merit((0, 1), su_target, su_pair, include_diagonal=False)
        assert with_diag == pytest.approx(1.0 / math.sqrt(2.4), abs=1e-12)
        assert without == pytest.approx(1.0 / math.sqrt(0.4), abs=1e-12)


def survey_columns(records):
    matrix = feature_matrix(records)
    return [
        FeatureColumn(
            name,
            matrix[:, j],
            CONTINUOUS if name in CONTINUOUS_FEATURES else DISCRETE,
        )
        for j, name in enumerate(FEATURE_NAMES)
    ]


class TestSelectSubset:
    def test_planted_pair_recovered_on_most_seeds(self):
        dependence = {"age_65p": {0: 1.5}, "education": {0: 1.5}}
        hits = 0
        for seed in range(20):
            records = _draw_survey(np.random.default_rng(seed), 240)
            target = true_distributions(records, dependence, 4)[:, 0]
            result = select_subset(survey_columns(records), target, bins=5)
            if {"age_65p", "education"} <= set(result.members):
                hits += 1
        assert hits >= 18

    def test_contained_within_planted_plus_one_extra(self):
        dependence = {"age_65p": {0: 1.5}, "education": {0: 1.5}}
        hits = 0
        for seed in range(20):
            records = _draw_survey(np.random.default_rng(seed), 240)
            target = true_distributions(records, dependence, 4)[:, 0]
            members = set(select_subset(survey_columns(records), target, bins=5).members)
            extras = members - {"age_65p", "education"}
            if "age_65p" in members and len(extras) <= 1:
                hits += 1
        assert hits >= 18

    def test_independent_target_flags_low_confidence(self):
        records = _draw_survey(np.random.default_rng(0), 200)
        target = np.random.default_rng(99).random(200)  # unrelated to any feature
        result = select_subset(survey_columns(records), target, bins=5)
        assert result.low_confidence

    def test_planted_target_is_confident(self):
        dependence = {"age_65p": {0: 1.5}, "education": {0: 1.5}}
        records = _draw_survey(np.random.default_rng(1), 240)
        target = true_distributions(records, dependence, 4)[:, 0]
        result = select_subset(survey_columns(records), target, bins=5)
        assert not result.low_confidence

    def test_invariant_under_column_reordering(self):
        dependence = {"age_65p": {0: 1.5}, "education": {0: 1.5}}
        records = _draw_survey(np.random.default_rng(2), 200)
        target = true_distributions(records, dependence, 4)[:, 0]
        cols = survey_columns(records)
        forward = select_subset(cols, target, bins=5)
        backward = select_subset(list(reversed(cols)), target, bins=5)
        assert set(forward.members) == set(backward.members)

    def test_constant_target_is_low_confidence(self):
        records = _draw_survey(np.random.default_rng(5), 100)
        result = select_subset(survey_columns(records), np.full(100, 0.25), bins=5)
        assert result.low_confidence
        assert result.merit == 0.0

    def test_winner_beats_every_subset_without_planted_features(self):
        import itertools as it

        dependence = {"age_65p": {0: 1.5}, "education": {0: 1.5}}
        records = _draw_survey(np.random.default_rng(6), 240)
        target = true_distributions(records, dependence, 4)[:, 0]
        cols = survey_columns(records)
        best = select_subset(cols, target, bins=5)

        planted = {"age_65p", "education"}
        others = [c for c in cols if c.name not in planted]
        rival = -1.0
        for size in range(1, len(others) + 1):
            for combo in it.combinations(others, size):
                rival = max(rival, select_subset(list(combo), target, bins=5).merit)
        assert best.merit > rival

    def test_merit_recomputable_from_members(self):
        dependence = {"age_65p": {0: 1.5}}
        records = _draw_survey(np.random.default_rng(3), 150)
        target = true_distributions(records, dependence, 3)[:, 0]
        cols = survey_columns(records)
        result = select_subset(cols, target, bins=5, pattern_id="weekday/G1")
        kept = [c for c in cols if c.name in result.members]
        again = select_subset(kept, target, bins=5)
        assert again.merit == pytest.approx(result.merit, abs=1e-12)


class TestMeritSubsetSelector:
    def test_fit_transform_keeps_selected_columns(self):
        dependence = {"age_65p": {0: 1.5}, "education": {0: 1.5}}
        records = _draw_survey(np.random.default_rng(4), 200)
        target = true_distributions(records, dependence, 4)[:, 0]
        X = feature_matrix(records)
        sel = MeritSubsetSelector(
            bins=5,
            feature_names=list(FEATURE_NAMES),
            continuous=[n in CONTINUOUS_FEATURES for n in FEATURE_NAMES],
        )
        reduced = sel.fit_transform(X, target)
        assert reduced.shape == (200, len(sel.selected_names_))
        assert sel.get_support().sum() == len(sel.selected_names_)
        assert "age_65p" in sel.selected_names_

    def test_get_params_round_trip(self):
        sel = MeritSubsetSelector(bins=7, include_diagonal=False)
        params = sel.get_params()
        assert params["bins"] == 7 and params["include_diagonal"] is False
        clone = MeritSubsetSelector(**params)
        assert clone.get_params() == params


class TestPearson:
    def test_self_correlation_is_exactly_one(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        result = pearson_matrix([x, x * 2], ["a", "b"])
        assert result.matrix[0, 0] == 1.0 and result.matrix[1, 1] == 1.0

    def test_perfect_anticorrelation(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        result = pearson_matrix([x, -x], ["a", "b"])
        assert result.matrix[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_known_pair(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        y = np.array([2.0, 4.0, 5.0, 9.0])
        result = pearson_matrix([x, y], ["x", "y"])
        # direct covariance / sigma evaluation gives 11 / sqrt(130)
        assert result.matrix[0, 1] == pytest.approx(0.9647638212377322, abs=1e-10)

    def test_constant_column_marked_undefined(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        c = np.full(4, 5.0)
        result = pearson_matrix([x, c], ["x", "const"])
        assert not result.defined[0, 1] and not result.defined[1, 1]
        assert np.isnan(result.matrix[0, 1])
        csv_text = result.to_csv()
        assert "const,,\n" in csv_text  # undefined cells render empty

    def test_symmetric_and_bounded(self):
        rng = np.random.default_rng(6)
        cols = [rng.random(30) for _ in range(5)]
        result = pearson_matrix(cols, [f"c{i}" for i in range(5)])
        m = result.matrix
        assert np.allclose(m, m.T, equal_nan=True)
        assert np.all(np.abs(m[~np.isnan(m)]) <= 1.0)
