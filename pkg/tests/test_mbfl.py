"""Tests for mutation-based fault localization."""

import random

import pytest

from mutkit.execution import TestOutcomeVector
from mutkit.mbfl import (
    FLGlobals,
    MbflError,
    MutantFLStats,
    SuspiciousnessReport,
    aggregate,
    fl_metrics,
    fl_stats,
    localize,
    metallaxis_score,
    muse_score,
    rank,
)
from oracles import oracle_metallaxis, oracle_muse, oracle_tie_ranks


def vector(program_id, **outcomes):
    return TestOutcomeVector(program_id=program_id, outcomes=dict(outcomes))


ORIGINAL = vector("buggy", t1="fail", t2="fail", t3="pass", t4="pass")


class TestFlStats:
    def test_flip_of_one_failing_test_counts_as_failed_m(self):
        mutants = {"m1": vector("m1", t1="pass", t2="fail", t3="pass", t4="pass")}
        stats, globals_ = fl_stats(ORIGINAL, mutants, {"m1": 7})
        assert stats[0].failed_m == 1
        assert stats[0].passed_m == 0
        assert stats[0].statement == 7
        assert globals_.totalfailed == 2

    def test_identical_outcomes_count_nothing(self):
        mutants = {"m1": vector("m1", t1="fail", t2="fail", t3="pass", t4="pass")}
        stats, globals_ = fl_stats(ORIGINAL, mutants, {"m1": 3})
        assert stats[0].failed_m == 0
        assert stats[0].passed_m == 0
        assert globals_.f2p == 0
        assert globals_.p2f == 0

    def test_globals_sum_over_mutants(self):
        original = vector("buggy", t1="fail", t2="fail", t3="pass")
        flips = {"m1": 1, "m2": 0, "m3": 2, "m4": 1}
        mutants = {}
        for mutant_id, failed_m in flips.items():
            outcomes = {"t1": "fail", "t2": "fail", "t3": "pass"}
            if failed_m >= 1:
                outcomes["t1"] = "pass"
            if failed_m >= 2:
                outcomes["t2"] = "pass"
            mutants[mutant_id] = TestOutcomeVector(mutant_id, outcomes)
        stats, globals_ = fl_stats(original, mutants, {m: 1 for m in mutants})
        assert [s.failed_m for s in stats] == [1, 0, 2, 1]
        assert globals_.f2p == 4

    def test_pass_to_fail_flip_counts_as_passed_m(self):
        mutants = {"m1": vector("m1", t1="fail", t2="fail", t3="fail", t4="fail")}
        stats, globals_ = fl_stats(ORIGINAL, mutants, {"m1": 2})
        assert stats[0].passed_m == 2
        assert globals_.p2f == 2

    def test_requires_a_failing_test(self):
        healthy = vector("fixed", t1="pass")
        with pytest.raises(MbflError, match="no failing test"):
            fl_stats(healthy, {}, {})

    def test_rejects_mismatched_test_sets(self):
        mutants = {"m1": vector("m1", t1="pass")}
        with pytest.raises(MbflError, match="test set differs"):
            fl_stats(ORIGINAL, mutants, {"m1": 1})

    def test_rejects_unmapped_mutants(self):
        mutants = {"m1": vector("m1", t1="fail", t2="fail", t3="pass", t4="pass")}
        with pytest.raises(MbflError, match="no statement mapping"):
            fl_stats(ORIGINAL, mutants, {})


class TestMuseScore:
    def test_hand_value(self):
        stats = MutantFLStats("m", 1, failed_m=2, passed_m=1)
        globals_ = FLGlobals(totalfailed=4, f2p=4, p2f=2)
        assert muse_score(stats, globals_) == 0.0

    def test_no_passed_flips_leaves_failed_count(self):
        stats = MutantFLStats("m", 1, failed_m=3, passed_m=0)
        globals_ = FLGlobals(totalfailed=4, f2p=9, p2f=5)
        assert muse_score(stats, globals_) == 3.0

    def test_zero_p2f_drops_penalty_term(self):
        stats = MutantFLStats("m", 1, failed_m=1, passed_m=3)
        globals_ = FLGlobals(totalfailed=4, f2p=2, p2f=0)
        assert muse_score(stats, globals_) == 1.0

    def test_matches_oracle_on_random_counts(self):
        rng = random.Random(501)
        for _ in range(300):
            failed_m = rng.randint(0, 10)
            passed_m = rng.randint(0, 10)
            f2p = rng.randint(failed_m, 40)
            p2f = rng.randint(0, 40)
            stats = MutantFLStats("m", 1, failed_m=failed_m, passed_m=passed_m)
            globals_ = FLGlobals(totalfailed=10, f2p=f2p, p2f=p2f)
            assert muse_score(stats, globals_) == pytest.approx(
                oracle_muse(failed_m, passed_m, f2p, p2f))


class TestMetallaxisScore:
    def test_hand_value(self):
        stats = MutantFLStats("m", 1, failed_m=1, passed_m=0)
        assert metallaxis_score(stats, totalfailed=4) == pytest.approx(0.5)

    def test_no_failed_flips_scores_zero(self):
        stats = MutantFLStats("m", 1, failed_m=0, passed_m=3)
        assert metallaxis_score(stats, totalfailed=4) == 0.0

    def test_full_flip_scores_one(self):
        stats = MutantFLStats("m", 1, failed_m=4, passed_m=0)
        assert metallaxis_score(stats, totalfailed=4) == pytest.approx(1.0)

    def test_zero_denominator_scores_zero(self):
        stats = MutantFLStats("m", 1, failed_m=0, passed_m=0)
        assert metallaxis_score(stats, totalfailed=4) == 0.0

    def test_bounded_and_maximal_only_at_full_flip(self):
        rng = random.Random(502)
        for _ in range(300):
            totalfailed = rng.randint(1, 10)
            failed_m = rng.randint(0, totalfailed)
            passed_m = rng.randint(0, 10)
            stats = MutantFLStats("m", 1, failed_m=failed_m, passed_m=passed_m)
            value = metallaxis_score(stats, totalfailed)
            assert 0.0 <= value <= 1.0
            assert value == pytest.approx(
                oracle_metallaxis(failed_m, passed_m, totalfailed))
            if value == pytest.approx(1.0):
                assert failed_m == totalfailed and passed_m == 0


class TestAggregate:
    def test_metallaxis_takes_maximum(self):
        scores = {"m1": 0.2, "m2": 0.8}
        statement_of = {"m1": 5, "m2": 5}
        assert aggregate(scores, statement_of, "metallaxis") == {5: 0.8}

    def test_muse_takes_mean(self):
        scores = {"m1": 0.2, "m2": 0.8}
        statement_of = {"m1": 5, "m2": 5}
        assert aggregate(scores, statement_of, "muse") == {5: 0.5}

    def test_mutantless_statement_scores_zero(self):
        scores = {"m1": 0.9}
        result = aggregate(scores, {"m1": 5}, "muse", statements=[5, 6, 7])
        assert result[6] == 0.0
        assert result[7] == 0.0
        assert result[5] == 0.9

    def test_unknown_method_rejected(self):
        with pytest.raises(MbflError, match="unknown aggregation"):
            aggregate({}, {}, "tarantula")

    def test_unmapped_mutant_rejected(self):
        with pytest.raises(MbflError, match="no statement mapping"):
            aggregate({"m1": 0.5}, {}, "muse")


class TestRank:
    def test_tie_group_shares_expected_rank(self):
        ranks = rank({1: 0.9, 2: 0.5, 3: 0.5})
        assert ranks == {1: 1.0, 2: 2.5, 3: 2.5}

    def test_distinct_scores_get_integer_ranks(self):
        ranks = rank({1: 0.1, 2: 0.9, 3: 0.4})
        assert ranks == {2: 1.0, 3: 2.0, 1: 3.0}

    def test_all_equal_scores_share_middle_rank(self):
        ranks = rank({s: 0.5 for s in range(1, 6)})
        assert all(value == 3.0 for value in ranks.values())

    def test_ranks_sum_to_triangular_number(self):
        rng = random.Random(503)
        for _ in range(200):
            n = rng.randint(1, 20)
            scores = {s: rng.choice([0.0, 0.25, 0.5, 0.75, 1.0])
                      for s in range(n)}
            ranks = rank(scores)
            assert sum(ranks.values()) == pytest.approx(n * (n + 1) / 2)

    def test_matches_oracle_tie_ranks(self):
        rng = random.Random(504)
        for _ in range(200):
            n = rng.randint(1, 15)
            scores = {s: rng.choice([0.1, 0.2, 0.3]) for s in range(n)}
            assert rank(scores) == oracle_tie_ranks(scores)


class TestLocalize:
    def build_single_fault_instance(self):
        # Statement 4 is faulty: only its mutants flip the failing test.
        original = vector("buggy", t1="fail", t2="pass", t3="pass")
        mutants = {
            "m1": vector("m1", t1="pass", t2="pass", t3="pass"),
            "m2": vector("m2", t1="pass", t2="pass", t3="pass"),
            "m3": vector("m3", t1="fail", t2="fail", t3="pass"),
            "m4": vector("m4", t1="fail", t2="pass", t3="pass"),
        }
        statement_of = {"m1": 4, "m2": 4, "m3": 9, "m4": 12}
        return original, mutants, statement_of

    @pytest.mark.parametrize("method", ["muse", "metallaxis"])
    def test_single_fault_statement_ranks_first(self, method):
        original, mutants, statement_of = self.build_single_fault_instance()
        report = localize("bug-1", original, mutants, statement_of,
                          method, faulty_statements=[4])
        assert report.expected_ranks[4] == 1.0
        assert report.faulty_ranks() == [1.0]

    def test_statement_universe_padding(self):
        original, mutants, statement_of = self.build_single_fault_instance()
        report = localize("bug-1", original, mutants, statement_of,
                          "metallaxis", statements=range(1, 15))
        assert set(report.scores) == set(range(1, 15))
        assert report.scores[1] == 0.0

    def test_unknown_method_rejected(self):
        original, mutants, statement_of = self.build_single_fault_instance()
        with pytest.raises(MbflError, match="unknown aggregation"):
            localize("bug-1", original, mutants, statement_of, "sbfl")

    def test_missing_faulty_statement_is_reported(self):
        original, mutants, statement_of = self.build_single_fault_instance()
        report = localize("bug-1", original, mutants, statement_of,
                          "muse", faulty_statements=[4, 99])
        assert report.missing_faulty() == (99,)
        assert report.faulty_ranks() == [1.0]


def report_with_ranks(bug_id, rank_of_faulty, universe=10):
    """A ranked report whose faulty statements land at the given ranks."""
    scores = {s: float(universe - s) for s in range(1, universe + 1)}
    ranks = rank(scores)
    faulty = [s for s, r in ranks.items() if r in rank_of_faulty]
    assert len(faulty) == len(rank_of_faulty)
    return SuspiciousnessReport(bug_id=bug_id, method="muse", scores=scores,
                                expected_ranks=ranks,
                                faulty_statements=frozenset(faulty))


class TestFlMetrics:
    def test_perfect_localization(self):
        metrics = fl_metrics([report_with_ranks("b1", [1.0])])
        assert metrics.top_k == {1: 1, 3: 1, 5: 1}
        assert metrics.mar == 1.0
        assert metrics.mfr == 1.0
        assert metrics.first_rank_mean == 1.0

    def test_two_bugs_hand_aggregation(self):
        reports = [report_with_ranks("b1", [2.0]), report_with_ranks("b2", [4.0])]
        metrics = fl_metrics(reports)
        assert metrics.top_k[3] == 1
        assert metrics.mfr == 3.0

    def test_multi_fault_bug_contributions(self):
        metrics = fl_metrics([report_with_ranks("b1", [2.0, 6.0])])
        assert metrics.mfr == 2.0
        assert metrics.mar == 4.0

    def test_topk_monotone_in_k(self):
        rng = random.Random(505)
        reports = [report_with_ranks(f"b{i}", [float(rng.randint(1, 10))])
                   for i in range(20)]
        metrics = fl_metrics(reports, k_list=(1, 2, 3, 5, 8, 10))
        counts = [metrics.top_k[k] for k in (1, 2, 3, 5, 8, 10)]
        assert counts == sorted(counts)
        assert metrics.top_k[10] == 20

    def test_bug_with_no_present_faulty_statement_is_excluded(self):
        good = report_with_ranks("b1", [2.0])
        orphan = SuspiciousnessReport(
            bug_id="b2", method="muse", scores={1: 0.5},
            expected_ranks={1: 1.0}, faulty_statements=frozenset([42]))
        metrics = fl_metrics([good, orphan])
        assert metrics.excluded_bugs == ("b2",)
        assert metrics.evaluated_bugs == 1
        assert metrics.missing_statements["b2"] == (42,)
        assert metrics.mfr == 2.0

    def test_all_bugs_excluded_raises(self):
        orphan = SuspiciousnessReport(
            bug_id="b1", method="muse", scores={1: 0.5},
            expected_ranks={1: 1.0}, faulty_statements=frozenset([42]))
        with pytest.raises(MbflError, match="excluded"):
            fl_metrics([orphan])

    def test_empty_reports_raise(self):
        with pytest.raises(MbflError, match="no reports"):
            fl_metrics([])

    def test_report_without_ground_truth_raises(self):
        bare = SuspiciousnessReport(
            bug_id="b1", method="muse", scores={1: 0.5},
            expected_ranks={1: 1.0})
        with pytest.raises(MbflError, match="no faulty statements"):
            fl_metrics([bare])
