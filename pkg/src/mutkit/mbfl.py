"""Mutation-based fault localization over buggy-version kill data.

Given the test outcomes of a buggy program and of each mutant generated
on it, every mutant gets a MUSE and a Metallaxis suspiciousness score
from its outcome flips.  Scores aggregate per statement (the physical
line the mutant targets), statements are ranked with expected ranks for
tie groups, and rankings across bugs roll up into Top-k counts and mean
ranks.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

from .execution import TestOutcomeVector

logger = logging.getLogger(__name__)

AGGREGATION_METHODS = ("muse", "metallaxis")
DEFAULT_K_LIST = (1, 3, 5)


class MbflError(Exception):
    """Raised for unusable localization inputs."""


@dataclass(frozen=True)
class MutantFLStats:
    """Outcome-flip counts for one mutant against the buggy original.

    failed_m counts tests that fail on the original but pass on the
    mutant; passed_m counts tests that pass on the original but fail on
    the mutant.
    """

    mutant_id: str
    statement: int
    failed_m: int
    passed_m: int

    def __post_init__(self):
        if self.failed_m < 0 or self.passed_m < 0:
            raise MbflError(f"mutant {self.mutant_id}: negative flip counts")


@dataclass(frozen=True)
class FLGlobals:
    """Corpus-wide flip totals shared by every MUSE score."""

    totalfailed: int
    f2p: int
    p2f: int

    def __post_init__(self):
        if self.totalfailed < 0 or self.f2p < 0 or self.p2f < 0:
            raise MbflError("flip totals cannot be negative")


@dataclass(frozen=True)
class SuspiciousnessReport:
    """Ranked per-statement suspiciousness for one bug."""

    bug_id: str
    method: str
    scores: dict[int, float]
    expected_ranks: dict[int, float]
    faulty_statements: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.method not in AGGREGATION_METHODS:
            raise MbflError(f"unknown aggregation method {self.method!r}")
        if set(self.scores) != set(self.expected_ranks):
            raise MbflError(
                f"bug {self.bug_id}: ranks and scores cover different statements")

    def faulty_ranks(self) -> list[float]:
        """Expected ranks of the faulty statements present in the report."""
        return sorted(self.expected_ranks[s] for s in self.faulty_statements
                      if s in self.expected_ranks)

    def missing_faulty(self) -> tuple[int, ...]:
        """Faulty statements absent from the ranked report."""
        return tuple(sorted(s for s in self.faulty_statements
                            if s not in self.expected_ranks))


def fl_stats(
    original: TestOutcomeVector,
    mutant_outcomes: Mapping[str, TestOutcomeVector],
    statement_of: Mapping[str, int],
) -> tuple[list[MutantFLStats], FLGlobals]:
    """Per-mutant flip counts plus the shared totals.

    Args:
        original: outcomes of the buggy program; must have a failing test.
        mutant_outcomes: mutant id to its outcomes over the same tests.
        statement_of: mutant id to the line number it mutates.

    Raises:
        MbflError: when the original has no failing test, a mutant ran a
            different test set, or a mutant has no statement mapping.
    """
    failing = original.failing()
    if not failing:
        raise MbflError(
            f"program {original.program_id}: no failing test, nothing to localize")
    original_tests = set(original.outcomes)
    stats = []
    for mutant_id in sorted(mutant_outcomes):
        vector = mutant_outcomes[mutant_id]
        if set(vector.outcomes) != original_tests:
            raise MbflError(
                f"mutant {mutant_id}: test set differs from the original run")
        if mutant_id not in statement_of:
            raise MbflError(f"mutant {mutant_id}: no statement mapping")
        failed_m = sum(1 for t in failing if vector.outcomes[t] == "pass")
        passed_m = sum(1 for t in original_tests - failing
                       if vector.outcomes[t] == "fail")
        stats.append(MutantFLStats(mutant_id=mutant_id,
                                   statement=statement_of[mutant_id],
                                   failed_m=failed_m, passed_m=passed_m))
    globals_ = FLGlobals(totalfailed=len(failing),
                         f2p=sum(s.failed_m for s in stats),
                         p2f=sum(s.passed_m for s in stats))
    return stats, globals_


def muse_score(stats: MutantFLStats, globals_: FLGlobals) -> float:
    """MUSE suspiciousness: pass-making flips minus weighted fail-making ones.

    With no pass-to-fail flips anywhere the penalty weight is undefined,
    so the second term drops and the score is just failed_m.
    """
    if globals_.p2f == 0:
        return float(stats.failed_m)
    return stats.failed_m - (globals_.f2p / globals_.p2f) * stats.passed_m


def metallaxis_score(stats: MutantFLStats, totalfailed: int) -> float:
    """Metallaxis suspiciousness, normalized into [0, 1]."""
    denominator = math.sqrt(totalfailed * (stats.failed_m + stats.passed_m))
    if denominator == 0:
        return 0.0
    return stats.failed_m / denominator


def aggregate(
    mutant_scores: Mapping[str, float],
    statement_of: Mapping[str, int],
    method: str,
    statements: Iterable[int] = (),
) -> dict[int, float]:
    """Fold per-mutant scores into per-statement scores.

    MUSE averages the scores of a statement's mutants; Metallaxis takes
    their maximum.  Statements listed in `statements` but carrying no
    mutants score 0.
    """
    if method not in AGGREGATION_METHODS:
        raise MbflError(f"unknown aggregation method {method!r}")
    by_statement: dict[int, list[float]] = {}
    for mutant_id, score in mutant_scores.items():
        if mutant_id not in statement_of:
            raise MbflError(f"mutant {mutant_id}: no statement mapping")
        by_statement.setdefault(statement_of[mutant_id], []).append(score)
    result = {statement: 0.0 for statement in statements}
    for statement, scores in by_statement.items():
        if method == "muse":
            result[statement] = sum(scores) / len(scores)
        else:
            result[statement] = max(scores)
    return result


def rank(scores: Mapping[int, float]) -> dict[int, float]:
    """Expected inspection rank per statement, ties sharing their mean.

    A tie group of size g whose first member sits at 1-based position a
    gets expected rank a + (g - 1) / 2 for every member.
    """
    ordered = sorted(scores, key=lambda s: (-scores[s], s))
    ranks: dict[int, float] = {}
    position = 1
    for statement in ordered:
        if statement in ranks:
            continue
        group = [s for s in ordered if scores[s] == scores[statement]]
        expected = position + (len(group) - 1) / 2
        for member in group:
            ranks[member] = expected
        position += len(group)
    return {s: ranks[s] for s in ordered}


def localize(
    bug_id: str,
    original: TestOutcomeVector,
    mutant_outcomes: Mapping[str, TestOutcomeVector],
    statement_of: Mapping[str, int],
    method: str,
    statements: Iterable[int] = (),
    faulty_statements: Iterable[int] = (),
) -> SuspiciousnessReport:
    """End-to-end localization for one bug with one aggregation method."""
    stats, globals_ = fl_stats(original, mutant_outcomes, statement_of)
    if method == "muse":
        mutant_scores = {s.mutant_id: muse_score(s, globals_) for s in stats}
    elif method == "metallaxis":
        mutant_scores = {s.mutant_id: metallaxis_score(s, globals_.totalfailed)
                         for s in stats}
    else:
        raise MbflError(f"unknown aggregation method {method!r}")
    statement_scores = aggregate(mutant_scores, statement_of, method, statements)
    return SuspiciousnessReport(
        bug_id=bug_id, method=method, scores=statement_scores,
        expected_ranks=rank(statement_scores),
        faulty_statements=frozenset(faulty_statements))


@dataclass(frozen=True)
class FLMetrics:
    """Localization quality over a set of bugs.

    mar averages each bug's mean faulty rank, mfr averages each bug's
    best faulty rank, and first_rank_mean repeats mfr under the literal
    first-rank reading so reports can show both labels side by side.
    """

    top_k: dict[int, int]
    mar: float
    mfr: float
    first_rank_mean: float
    evaluated_bugs: int
    excluded_bugs: tuple[str, ...]
    missing_statements: dict[str, tuple[int, ...]]


def fl_metrics(
    reports: Iterable[SuspiciousnessReport],
    k_list: tuple[int, ...] = DEFAULT_K_LIST,
) -> FLMetrics:
    """Top-k counts, MAR, and MFR over per-bug rankings.

    Bugs whose faulty statements are all missing from their report are
    excluded from every mean and listed in excluded_bugs; partially
    missing statements are flagged in missing_statements but the bug
    still counts through its present ones.
    """
    reports = list(reports)
    if not reports:
        raise MbflError("no reports to aggregate")
    top_k = {k: 0 for k in k_list}
    first_ranks: list[float] = []
    mean_ranks: list[float] = []
    excluded: list[str] = []
    missing: dict[str, tuple[int, ...]] = {}
    for report in reports:
        if not report.faulty_statements:
            raise MbflError(f"bug {report.bug_id}: no faulty statements given")
        absent = report.missing_faulty()
        if absent:
            missing[report.bug_id] = absent
        ranks = report.faulty_ranks()
        if not ranks:
            excluded.append(report.bug_id)
            continue
        best = min(ranks)
        first_ranks.append(best)
        mean_ranks.append(sum(ranks) / len(ranks))
        for k in k_list:
            if best <= k:
                top_k[k] += 1
    if not first_ranks:
        raise MbflError("every bug was excluded; no ranks to average")
    mfr = sum(first_ranks) / len(first_ranks)
    return FLMetrics(
        top_k=top_k,
        mar=sum(mean_ranks) / len(mean_ranks),
        mfr=mfr,
        first_rank_mean=mfr,
        evaluated_bugs=len(first_ranks),
        excluded_bugs=tuple(excluded),
        missing_statements=missing,
    )
