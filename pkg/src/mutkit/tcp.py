"""Kill-matrix-guided test-case prioritization and APFD.

Three greedy strategies order a bug's tests: GRK maximizes additional
killed mutants, GRD maximizes additional distinguished mutant pairs (a
test distinguishes a pair when it kills exactly one of the two), and
HYB-omega takes a normalized weighted sum of both gains.  When no
remaining test adds anything, the covered sets reset and the greedy
continues, so every strategy yields a total ordering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .execution import KillMatrix

logger = logging.getLogger(__name__)

DEFAULT_HYB_WEIGHT = 0.5


class TcpError(Exception):
    """Raised for empty matrices, bad weights, or undetected bugs."""


@dataclass(frozen=True)
class PrioritizedSuite:
    """A total test ordering plus its per-step gain audit trail."""

    strategy: str
    order: tuple[str, ...]
    step_kills: tuple[int, ...]
    step_pairs: tuple[int, ...]

    def __post_init__(self):
        if len(self.order) != len(set(self.order)):
            raise TcpError("ordering repeats a test id")
        if not (len(self.order) == len(self.step_kills) == len(self.step_pairs)):
            raise TcpError("audit trails must align with the ordering")


def _pair_gain_matrix(columns: np.ndarray, distinguished: np.ndarray) -> np.ndarray:
    """Per-test counts of not-yet-distinguished pairs each column splits."""
    # columns: (mutants, tests) bool; distinguished: (mutants, mutants) bool.
    m = columns.shape[0]
    gains = np.zeros(columns.shape[1], dtype=np.int64)
    upper = np.triu(np.ones((m, m), dtype=bool), k=1)
    candidate_mask = upper & ~distinguished
    for j in range(columns.shape[1]):
        col = columns[:, j]
        split = col[:, None] != col[None, :]
        gains[j] = int(np.count_nonzero(split & candidate_mask))
    return gains


def _greedy(matrix: KillMatrix, strategy: str, weight: float) -> PrioritizedSuite:
    if not matrix.test_ids:
        raise TcpError(f"bug {matrix.bug_id}: matrix has no tests")
    test_ids = list(matrix.test_ids)
    kills = matrix.kills
    mutant_count = kills.shape[0]
    pair_count = mutant_count * (mutant_count - 1) // 2

    remaining = list(range(len(test_ids)))
    covered = np.zeros(mutant_count, dtype=bool)
    distinguished = np.zeros((mutant_count, mutant_count), dtype=bool)

    order: list[str] = []
    step_kills: list[int] = []
    step_pairs: list[int] = []

    def gains() -> tuple[np.ndarray, np.ndarray]:
        kill_gain = np.array(
            [int(np.count_nonzero(kills[:, j] & ~covered)) for j in remaining],
            dtype=np.int64)
        if strategy == "GRK":
            pair_gain = np.zeros(len(remaining), dtype=np.int64)
        else:
            pair_gain = _pair_gain_matrix(
                kills[:, remaining], distinguished)
        return kill_gain, pair_gain

    def scores(kill_gain: np.ndarray, pair_gain: np.ndarray) -> np.ndarray:
        if strategy == "GRK":
            return kill_gain.astype(float)
        if strategy == "GRD":
            return pair_gain.astype(float)
        kill_term = kill_gain / mutant_count if mutant_count else np.zeros_like(kill_gain, dtype=float)
        pair_term = pair_gain / pair_count if pair_count else np.zeros_like(pair_gain, dtype=float)
        return weight * kill_term + (1.0 - weight) * pair_term

    while remaining:
        kill_gain, pair_gain = gains()
        step_scores = scores(kill_gain, pair_gain)
        if step_scores.max() <= 0 and (covered.any() or distinguished.any()):
            covered[:] = False
            distinguished[:] = False
            kill_gain, pair_gain = gains()
            step_scores = scores(kill_gain, pair_gain)
        best_score = step_scores.max()
        choice = min(
            (k for k in range(len(remaining)) if step_scores[k] == best_score),
            key=lambda k: test_ids[remaining[k]])
        j = remaining.pop(choice)
        column = kills[:, j]
        gained_kills = int(np.count_nonzero(column & ~covered))
        split = column[:, None] != column[None, :]
        upper = np.triu(np.ones((mutant_count, mutant_count), dtype=bool), k=1)
        gained_pairs = int(np.count_nonzero(split & upper & ~distinguished))
        covered |= column
        distinguished |= split
        order.append(test_ids[j])
        step_kills.append(gained_kills)
        step_pairs.append(gained_pairs)

    name = {"GRK": "GRK", "GRD": "GRD"}.get(strategy, f"HYB({weight:g})")
    return PrioritizedSuite(strategy=name, order=tuple(order),
                            step_kills=tuple(step_kills),
                            step_pairs=tuple(step_pairs))


def grk(matrix: KillMatrix) -> PrioritizedSuite:
    """Greedy additional-kill prioritization."""
    return _greedy(matrix, "GRK", weight=1.0)


def grd(matrix: KillMatrix) -> PrioritizedSuite:
    """Greedy additional-distinguished-pairs prioritization."""
    return _greedy(matrix, "GRD", weight=0.0)


def hyb(matrix: KillMatrix, weight: float = DEFAULT_HYB_WEIGHT) -> PrioritizedSuite:
    """Hybrid prioritization: omega weights kills against pairs.

    Both gains are normalized (kills by the mutant count, pairs by the
    number of mutant pairs) so the weight is scale-free; weight 1 matches
    grk and weight 0 matches grd.
    """
    if not 0.0 <= weight <= 1.0:
        raise TcpError(f"weight must be in [0, 1], got {weight}")
    return _greedy(matrix, "HYB", weight=weight)


def apfd(order: tuple[str, ...] | list[str], detection: dict[str, set[str]]) -> float:
    """Average percentage of faults detected by a test ordering.

    Args:
        order: the prioritized test ordering (n tests).
        detection: per bug, the set of tests that detect it (r bugs).

    Raises:
        TcpError: if a bug is detected by no test in the ordering.
    """
    if not order:
        raise TcpError("ordering is empty")
    if not detection:
        raise TcpError("no bugs given")
    position = {test_id: k + 1 for k, test_id in enumerate(order)}
    n = len(order)
    r = len(detection)
    total = 0
    for bug_id, detecting in detection.items():
        positions = [position[t] for t in detecting if t in position]
        if not positions:
            raise TcpError(f"bug {bug_id} is not detected by any test in the ordering")
        total += min(positions)
    return 1.0 - total / (n * r) + 1.0 / (2 * n)
