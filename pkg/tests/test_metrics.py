"""Metric fixtures with hand-computed expectations."""

import math

import numpy as np
import pytest

from xsr.errors import ContractError, ParseError
from xsr.metrics import (EvalRecord, accuracy_at_k, load_gold_tsv, mrr_at_n,
                         precision_at_k, records_from_ranked, spearman)


def rec(qid, ranked, gold):
    return EvalRecord(qid, ranked, set(gold))


class TestAccuracy:
    def test_gold_at_rank_one(self):
        records = [rec(i, [i, 99], [i]) for i in range(5)]
        assert accuracy_at_k(records, 1) == 1.0

    def test_gold_never_retrieved(self):
        records = [rec(i, [90 + i], [i]) for i in range(5)]
        assert accuracy_at_k(records, 5) == 0.0

    def test_hand_count(self):
        records = [rec(0, [1, 2, 3, 4, 5], [3]),      # hit in top-5
                   rec(1, [9, 8, 7, 6, 5], [5]),      # hit at rank 5
                   rec(2, [1, 2, 3, 4, 5], [2, 9]),   # hit
                   rec(3, [1, 2, 3, 4, 5], [70])]     # miss
        assert accuracy_at_k(records, 5) == 0.75

    def test_monotone_in_k(self):
        rng = np.random.default_rng(0)
        records = []
        for qid in range(30):
            ranked = list(rng.permutation(50)[:20])
            records.append(rec(qid, ranked, rng.integers(0, 50, size=2)))
        last = 0.0
        for k in range(1, 21):
            acc = accuracy_at_k(records, k)
            assert acc >= last
            last = acc

    def test_empty_records_rejected(self):
        with pytest.raises(ContractError):
            accuracy_at_k([], 1)


class TestPrecision:
    def test_single_gold_rank_one(self):
        assert precision_at_k([rec(0, [4, 5], [4])], 1) == 1.0

    def test_two_gold_in_top_five(self):
        assert precision_at_k([rec(0, [1, 2, 3, 4, 5], [2, 5])], 5) == 0.4

    def test_hand_average(self):
        records = [rec(0, [1, 2, 3], [1]),        # 1/3 of top-3
                   rec(1, [4, 5, 6], [5, 6]),     # 2/3
                   rec(2, [7, 8, 9], [99])]       # 0
        assert abs(precision_at_k(records, 3) - (1 / 3 + 2 / 3 + 0) / 3) < 1e-12


class TestMrr:
    def test_first_gold_rank_one(self):
        assert mrr_at_n([rec(0, [3, 1], [3])], 10) == 1.0

    def test_first_gold_rank_three(self):
        assert abs(mrr_at_n([rec(0, [9, 8, 3], [3])], 10) - 1 / 3) < 1e-9

    def test_gold_beyond_cutoff_counts_zero(self):
        ranked = list(range(10, 21))  # gold id 20 sits at rank 11
        assert mrr_at_n([rec(0, ranked, [20])], 10) == 0.0

    def test_le_accuracy_for_single_gold(self):
        rng = np.random.default_rng(1)
        records = []
        for qid in range(40):
            records.append(rec(qid, list(rng.permutation(30)[:10]), [int(rng.integers(0, 30))]))
        assert mrr_at_n(records, 10) <= accuracy_at_k(records, 10) + 1e-12


class TestSpearman:
    def test_increasing(self):
        assert abs(spearman([1, 2, 3, 4], [10, 20, 30, 40]) - 1.0) < 1e-12

    def test_decreasing(self):
        assert abs(spearman([1, 2, 3, 4], [9, 7, 5, 1]) + 1.0) < 1e-12

    def test_tied_fixture_hand_ranked(self):
        # x = [1,2,2,3] -> ranks [1, 2.5, 2.5, 4]; y -> [1,2,3,4]
        # Pearson of those ranks = 4.5 / sqrt(4.5 * 5) = 3/sqrt(10)
        got = spearman([1, 2, 2, 3], [1, 2, 3, 4])
        assert abs(got - 3 / math.sqrt(10)) < 1e-12

    def test_matches_scipy(self):
        from scipy.stats import spearmanr
        rng = np.random.default_rng(2)
        for _ in range(20):
            x = rng.normal(size=15)
            y = rng.normal(size=15)
            assert abs(spearman(x, y) - spearmanr(x, y).statistic) < 1e-12

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=20)
        y = rng.normal(size=20)
        base = spearman(x, y)
        assert abs(spearman(np.exp(x), y) - base) < 1e-12
        assert abs(spearman(x, 5 * y + 3) - base) < 1e-12

    def test_range(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            r = spearman(rng.normal(size=8), rng.normal(size=8))
            assert -1.0 - 1e-12 <= r <= 1.0 + 1e-12

    def test_errors(self):
        with pytest.raises(ContractError):
            spearman([1, 2], [1, 2, 3])
        with pytest.raises(ContractError):
            spearman([1.0], [2.0])
        with pytest.raises(ContractError):
            spearman([5, 5, 5], [1, 2, 3])


class TestRecordPlumbing:
    def test_gold_tsv(self, tmp_path):
        p = tmp_path / "gold.tsv"
        p.write_text("0\t3,4\n1\t7\n", encoding="utf-8")
        assert load_gold_tsv(p) == {0: {3, 4}, 1: {7}}

    def test_gold_tsv_bad_row(self, tmp_path):
        p = tmp_path / "gold.tsv"
        p.write_text("0\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_gold_tsv(p)

    def test_join_with_ranked(self):
        records = records_from_ranked({0: [5, 2], 1: [3]}, {0: {2}, 1: {9}})
        assert records[0].ranked_ids == [5, 2]
        with pytest.raises(ContractError):
            records_from_ranked({0: [1]}, {0: {1}, 2: {5}})

    def test_record_invariants(self):
        with pytest.raises(ContractError):
            EvalRecord(0, [1, 1], {2})
        with pytest.raises(ContractError):
            EvalRecord(0, [1], set())
