"""Mutation effectiveness metrics: MS, Ochiai coupling, R.B.D., and friends.

All functions consume kill matrices whose rows are the useful mutants
(compilable minus duplicates) of one bug, plus the bug's set of
bug-revealing tests (the tests that fail on the buggy version).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .execution import KillMatrix

logger = logging.getLogger(__name__)

HIGH_SIMILARITY_THRESHOLD = 0.8


class MetricsError(Exception):
    """Raised for empty mutant sets and inconsistent contexts."""


@dataclass
class BugContext:
    """One bug's kill matrix over its useful mutants plus fT_b."""

    bug_id: str
    matrix: KillMatrix
    bug_revealing_tests: frozenset[str]

    def __post_init__(self):
        self.bug_revealing_tests = frozenset(self.bug_revealing_tests)
        unknown = self.bug_revealing_tests - set(self.matrix.test_ids)
        if unknown:
            raise MetricsError(
                f"bug {self.bug_id}: revealing tests not in matrix: {sorted(unknown)}")

    @property
    def useful_mutants(self) -> tuple[str, ...]:
        return self.matrix.mutant_ids


def mutation_score(ctx: BugContext) -> float:
    """Mutation score: killed mutants over useful mutants."""
    total = len(ctx.matrix.mutant_ids)
    if total == 0:
        raise MetricsError(f"bug {ctx.bug_id}: mutation score needs >= 1 mutant")
    return len(ctx.matrix.killed_mutants()) / total


def ochiai(failing_on_mutant: set[str], failing_on_bug: set[str]) -> float:
    """Ochiai coefficient between two failing-test sets.

    Defined as 0 when either set is empty (the numerator is already 0).
    """
    if not failing_on_mutant or not failing_on_bug:
        return 0.0
    shared = len(set(failing_on_mutant) & set(failing_on_bug))
    return shared / math.sqrt(len(failing_on_mutant) * len(failing_on_bug))


def bug_ochiai(ctx: BugContext) -> float | None:
    """Per-bug mean Ochiai over the useful mutants; None when empty."""
    if not ctx.matrix.mutant_ids:
        return None
    revealing = set(ctx.bug_revealing_tests)
    values = [ochiai(ctx.matrix.killed_tests(m), revealing)
              for m in ctx.matrix.mutant_ids]
    return sum(values) / len(values)


def aoc(per_bug_values: dict[str, float | None]) -> float:
    """Average Ochiai coefficient over bugs with a defined value."""
    defined = [v for v in per_bug_values.values() if v is not None]
    if not defined:
        raise MetricsError("AOC needs at least one bug with a defined Ochiai value")
    return sum(defined) / len(defined)


@dataclass
class DetectionRates:
    """R.B.D. aggregates: unweighted bug mean and pooled test fraction."""

    macro: float
    micro: float
    per_bug: dict[str, float] = field(default_factory=dict)


def real_bug_detection(contexts: list[BugContext]) -> DetectionRates:
    """Fraction of bug-revealing tests that kill at least one mutant.

    Emits both aggregations: macro is the unweighted mean of per-bug
    fractions, micro pools every bug-revealing test into one fraction.
    """
    if not contexts:
        raise MetricsError("real_bug_detection needs at least one bug")
    per_bug: dict[str, float] = {}
    detected_total = 0
    revealing_total = 0
    for ctx in contexts:
        if not ctx.bug_revealing_tests:
            raise MetricsError(f"bug {ctx.bug_id} has no bug-revealing tests")
        detected = sum(1 for t in ctx.bug_revealing_tests
                       if ctx.matrix.killing_mutants(t))
        per_bug[ctx.bug_id] = detected / len(ctx.bug_revealing_tests)
        detected_total += detected
        revealing_total += len(ctx.bug_revealing_tests)
    macro = sum(per_bug.values()) / len(per_bug)
    micro = detected_total / revealing_total
    return DetectionRates(macro=macro, micro=micro, per_bug=per_bug)


def coupled_mutants(ctx: BugContext) -> set[str]:
    """Mutants killed by at least one bug-revealing test."""
    coupled = set()
    for test_id in ctx.bug_revealing_tests:
        coupled |= ctx.matrix.killing_mutants(test_id)
    return coupled


def coupling_rate(ctx: BugContext) -> float:
    """Fraction of useful mutants coupled to the real bug."""
    total = len(ctx.matrix.mutant_ids)
    if total == 0:
        raise MetricsError(f"bug {ctx.bug_id}: coupling rate needs >= 1 mutant")
    return len(coupled_mutants(ctx)) / total


def high_similarity_count(per_bug_values: dict[str, float | None],
                          threshold: float = HIGH_SIMILARITY_THRESHOLD) -> int:
    """Count of bugs whose mean Ochiai is at least the threshold (inclusive)."""
    return sum(1 for v in per_bug_values.values()
               if v is not None and v >= threshold)


@dataclass
class EffectivenessReport:
    """Aggregate effectiveness summary over a set of bugs."""

    mutation_score_micro: float
    mutation_score_macro: float
    rbd_macro: float
    rbd_micro: float
    coupling_rate_micro: float
    coupling_rate_macro: float
    bug_ochiai: dict[str, float | None]
    aoc: float
    high_similarity_count: int
    per_bug_mutation_score: dict[str, float] = field(default_factory=dict)
    excluded_bugs: list[str] = field(default_factory=list)


def effectiveness_report(contexts: list[BugContext]) -> EffectivenessReport:
    """Compute the full effectiveness summary over the given bugs.

    Bugs with zero useful mutants are excluded from all aggregates and
    listed in excluded_bugs; micro aggregates pool mutants (or revealing
    tests) across bugs, macro aggregates average the per-bug values.
    """
    active = [ctx for ctx in contexts if ctx.matrix.mutant_ids]
    excluded = [ctx.bug_id for ctx in contexts if not ctx.matrix.mutant_ids]
    if not active:
        raise MetricsError("no bug has a non-empty useful mutant set")

    per_bug_ms = {ctx.bug_id: mutation_score(ctx) for ctx in active}
    killed_total = sum(len(ctx.matrix.killed_mutants()) for ctx in active)
    mutant_total = sum(len(ctx.matrix.mutant_ids) for ctx in active)

    per_bug_ochiai = {ctx.bug_id: bug_ochiai(ctx) for ctx in active}
    detection = real_bug_detection(active)

    per_bug_coupling = {ctx.bug_id: coupling_rate(ctx) for ctx in active}
    coupled_total = sum(len(coupled_mutants(ctx)) for ctx in active)

    return EffectivenessReport(
        mutation_score_micro=killed_total / mutant_total,
        mutation_score_macro=sum(per_bug_ms.values()) / len(per_bug_ms),
        rbd_macro=detection.macro,
        rbd_micro=detection.micro,
        coupling_rate_micro=coupled_total / mutant_total,
        coupling_rate_macro=sum(per_bug_coupling.values()) / len(per_bug_coupling),
        bug_ochiai=per_bug_ochiai,
        aoc=aoc(per_bug_ochiai),
        high_similarity_count=high_similarity_count(per_bug_ochiai),
        per_bug_mutation_score=per_bug_ms,
        excluded_bugs=excluded,
    )
