import numpy as np
import pytest

from repnet.domain.errors import ParamValidationError
from repnet.retrieval.metrics import (
    average_precision,
    average_precision_from_hits,
    hits,
    mean_average_precision,
    precision_at_k,
    precision_curve,
)


def oracle_ap(labels, query_label, n_relevant):
    """Second implementation written straight from the AP definition."""
    total = 0.0
    for k in range(1, len(labels) + 1):
        if labels[k - 1] == query_label:
            total += sum(1 for x in labels[:k] if x == query_label) / k
    return total / n_relevant


@pytest.mark.unit
class TestPrecisionAtK:
    def test_formula(self):
        assert precision_at_k([5, 1, 5], 5, 3) == pytest.approx(2 / 3)

    def test_none_relevant(self):
        assert precision_at_k([1, 2, 3], 9, 3) == 0.0

    def test_all_relevant(self):
        assert precision_at_k([4, 4, 4, 1], 4, 3) == 1.0

    def test_short_ranking_counts_misses(self):
        assert precision_at_k([4], 4, 5) == pytest.approx(0.2)

    def test_k_must_be_positive(self):
        with pytest.raises(ParamValidationError):
            precision_at_k([1], 1, 0)


@pytest.mark.unit
class TestAveragePrecision:
    def test_formula(self):
        ap = average_precision([7, 2, 7], 7, 2)
        assert ap == (1 + 2 / 3) / 2
        assert ap == pytest.approx(5 / 6)

    def test_perfect_ranking(self):
        assert average_precision([3, 3, 3, 1, 2], 3, 3) == 1.0

    def test_missing_relevant_items_lower_ap(self):
        # T counts relevant items that never made it into the list
        assert average_precision([3, 1], 3, 4) == pytest.approx(0.25)

    def test_empty_ranking(self):
        assert average_precision_from_hits([], 3) == 0.0

    def test_zero_ground_truth_rejected(self):
        with pytest.raises(ParamValidationError):
            average_precision_from_hits([1, 0], 0)

    def test_random_scenarios_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            labels = rng.integers(0, 4, size=int(rng.integers(1, 30))).tolist()
            query = int(rng.integers(0, 4))
            t = labels.count(query) + int(rng.integers(0, 3))
            if t == 0:
                continue
            assert average_precision(labels, query, t) == pytest.approx(oracle_ap(labels, query, t), abs=1e-12)


@pytest.mark.unit
class TestMeanAveragePrecision:
    def test_thirty_query_run_matches_oracle(self):
        rng = np.random.default_rng(11)
        hit_lists, truth, oracle = [], [], []
        for _ in range(30):
            labels = rng.integers(0, 3, size=10).tolist()
            t = max(1, labels.count(0))
            hit_lists.append(hits(labels, 0))
            truth.append(t)
            oracle.append(oracle_ap(labels, 0, t))
        result = mean_average_precision(hit_lists, truth)
        assert result.value == pytest.approx(float(np.mean(oracle)), abs=1e-12)
        assert result.evaluated == 30 and result.excluded == 0

    @pytest.mark.parametrize("rank", [1, 2, 5, 9])
    def test_single_relevant_item_at_rank_r(self, rank):
        hit_list = [0] * 9
        hit_list[rank - 1] = 1
        assert mean_average_precision([hit_list], [1]).value == pytest.approx(1 / rank)

    def test_zero_ground_truth_queries_excluded(self):
        result = mean_average_precision([[1, 0], [0, 0], [1, 1]], [1, 0, 2])
        assert result.value == pytest.approx(1.0)
        assert result.evaluated == 2
        assert result.excluded == 1

    def test_nothing_evaluable(self):
        result = mean_average_precision([[0]], [0])
        assert result.value == 0.0 and result.evaluated == 0

    def test_length_mismatch(self):
        with pytest.raises(ParamValidationError):
            mean_average_precision([[1]], [1, 2])


@pytest.mark.unit
def test_precision_curve():
    curve = precision_curve([[1, 0, 1], [0, 0, 0]], [1, 3])
    assert curve == {1: 0.5, 3: pytest.approx(1 / 3)}


@pytest.mark.unit
def test_precision_curve_without_queries():
    assert precision_curve([], [1, 5]) == {1: 0.0, 5: 0.0}
