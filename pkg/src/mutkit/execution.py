"""Suite execution against original and mutated programs, and kill matrices.

The test runner is a pluggable external command that prints one status line
per test (``<test-id> PASS|FAIL``); a kill is a pass/fail status flip
relative to the original program.  Matrices can also be loaded from
externally produced files, so every metric module works without any
compiler or test runner installed.
"""

from __future__ import annotations

import logging
import os
import re
import subprocess
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .validity import substitute_command

logger = logging.getLogger(__name__)

_STATUS_LINE = re.compile(r"^(\S+)\s+(PASS|FAIL)\s*$")


class RunnerError(Exception):
    """Raised when the external runner crashes or emits ambiguous output."""


class MatrixError(Exception):
    """Raised for inconsistent or malformed kill matrices."""


@dataclass
class TestOutcomeVector:
    """Pass/fail outcomes of one program, plus per-test anomaly flags."""

    __test__ = False  # not a pytest class, despite the name

    program_id: str
    outcomes: dict[str, str]
    flags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for test_id, status in self.outcomes.items():
            if status not in ("pass", "fail"):
                raise RunnerError(
                    f"outcome for {test_id} must be pass or fail, got {status!r}")

    def failing(self) -> set[str]:
        return {t for t, status in self.outcomes.items() if status == "fail"}


def parse_outcome_lines(text: str) -> dict[str, str]:
    """Parse runner stdout into {test-id: pass|fail}.

    Non-matching lines are ignored (runners may log freely); duplicate
    test ids are an error because the outcome would be ambiguous.
    """
    outcomes: dict[str, str] = {}
    for line in text.splitlines():
        match = _STATUS_LINE.match(line.strip())
        if not match:
            continue
        test_id, status = match.group(1), match.group(2)
        if test_id in outcomes:
            raise RunnerError(f"ambiguous outcome: duplicate status line for {test_id}")
        outcomes[test_id] = status.lower()
    return outcomes


def run_suite(program_source: str, test_command: str, *, program_id: str,
              expected_tests: list[str] | None = None,
              timeout: float | None = None,
              suffix: str = ".java") -> TestOutcomeVector:
    """Run the external test command against one program source.

    Args:
        program_source: the full program text; written to an isolated
            temporary file substituted for {source} in the command.
        test_command: command template emitting one status line per test.
        program_id: id recorded on the vector (original or a mutant id).
        expected_tests: the bug's full test-id list; tests the runner did
            not report are recorded as FAIL with a flag (missing, or
            timeout when the run was cut off).
        timeout: per-program wall-clock cutoff in seconds.

    Raises:
        RunnerError: on crash with no status lines, unknown test ids, or
            duplicate status lines.
    """
    with tempfile.TemporaryDirectory() as tmp:
        source_path = os.path.join(tmp, f"program{suffix}")
        with open(source_path, "w", encoding="utf-8") as handle:
            handle.write(program_source)
        command = substitute_command(test_command, source_path)
        timed_out = False
        try:
            proc = subprocess.run(command, capture_output=True, text=True,
                                  timeout=timeout)
            stdout = proc.stdout
        except FileNotFoundError as exc:
            raise RunnerError(f"test command not found: {command[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            timed_out = True
            stdout = exc.stdout if isinstance(exc.stdout, str) else \
                (exc.stdout or b"").decode("utf-8", "replace")

    outcomes = parse_outcome_lines(stdout)
    if not outcomes and not timed_out:
        raise RunnerError(
            f"runner produced no test outcomes for {program_id}")
    flags: dict[str, str] = {}
    if expected_tests is not None:
        unknown = set(outcomes) - set(expected_tests)
        if unknown:
            raise RunnerError(
                f"runner reported unknown test ids: {sorted(unknown)}")
        for test_id in expected_tests:
            if test_id not in outcomes:
                outcomes[test_id] = "fail"
                flags[test_id] = "timeout" if timed_out else "missing"
    elif timed_out:
        raise RunnerError(
            f"run timed out for {program_id} and no expected test list "
            f"was given to complete the vector")
    return TestOutcomeVector(program_id=program_id, outcomes=outcomes, flags=flags)


_ID_WS = re.compile(r"\s")


def _check_ids(ids, what: str) -> None:
    seen = set()
    for one_id in ids:
        if not one_id or _ID_WS.search(one_id):
            raise MatrixError(f"{what} id {one_id!r} is empty or has whitespace")
        if one_id in seen:
            raise MatrixError(f"duplicate {what} id {one_id!r}")
        seen.add(one_id)


@dataclass
class KillMatrix:
    """Boolean kill matrix: rows are mutants, columns are tests."""

    bug_id: str
    mutant_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    kills: np.ndarray

    def __post_init__(self):
        _check_ids(self.mutant_ids, "mutant")
        _check_ids(self.test_ids, "test")
        self.kills = np.asarray(self.kills, dtype=bool)
        if self.kills.shape != (len(self.mutant_ids), len(self.test_ids)):
            raise MatrixError(
                f"cells shape {self.kills.shape} does not match "
                f"{len(self.mutant_ids)} mutants x {len(self.test_ids)} tests")

    def kill(self, mutant_id: str, test_id: str) -> bool:
        return bool(self.kills[self.mutant_ids.index(mutant_id),
                               self.test_ids.index(test_id)])

    def killed_tests(self, mutant_id: str) -> set[str]:
        row = self.kills[self.mutant_ids.index(mutant_id)]
        return {t for t, hit in zip(self.test_ids, row) if hit}

    def killing_mutants(self, test_id: str) -> set[str]:
        column = self.kills[:, self.test_ids.index(test_id)]
        return {m for m, hit in zip(self.mutant_ids, column) if hit}

    def killed_mutants(self) -> set[str]:
        return {m for m, row in zip(self.mutant_ids, self.kills) if row.any()}

    def same_as(self, other: "KillMatrix") -> bool:
        """Equality keyed by ids, not by storage order."""
        if set(self.mutant_ids) != set(other.mutant_ids):
            return False
        if set(self.test_ids) != set(other.test_ids):
            return False
        for mutant_id in self.mutant_ids:
            for test_id in self.test_ids:
                if self.kill(mutant_id, test_id) != other.kill(mutant_id, test_id):
                    return False
        return True

    def sorted_copy(self) -> "KillMatrix":
        """Canonical form with mutant and test ids sorted."""
        mutant_order = sorted(range(len(self.mutant_ids)),
                              key=lambda i: self.mutant_ids[i])
        test_order = sorted(range(len(self.test_ids)),
                            key=lambda j: self.test_ids[j])
        cells = self.kills[np.ix_(mutant_order, test_order)]
        return KillMatrix(
            bug_id=self.bug_id,
            mutant_ids=tuple(self.mutant_ids[i] for i in mutant_order),
            test_ids=tuple(self.test_ids[j] for j in test_order),
            kills=cells,
        )


def build_kill_matrix(original: TestOutcomeVector,
                      mutants: list[TestOutcomeVector],
                      bug_id: str | None = None) -> KillMatrix:
    """Assemble the kill matrix: cell = status XOR against the original.

    On a fixed version the original is all-pass, so a kill is simply a
    failing test on the mutant; on a buggy version a mutant making an
    originally failing test pass is also a kill (the f2p case).

    Raises:
        MatrixError: if any mutant's test-id set differs from the original's.
    """
    test_ids = tuple(sorted(original.outcomes))
    rows = []
    mutant_ids = []
    for vector in mutants:
        if set(vector.outcomes) != set(test_ids):
            raise MatrixError(
                f"test-id mismatch between original and {vector.program_id}")
        rows.append([vector.outcomes[t] != original.outcomes[t] for t in test_ids])
        mutant_ids.append(vector.program_id)
    cells = np.array(rows, dtype=bool) if rows else np.zeros((0, len(test_ids)), dtype=bool)
    return KillMatrix(bug_id=bug_id or original.program_id,
                      mutant_ids=tuple(mutant_ids), test_ids=test_ids, kills=cells)


def save_matrix(matrix: KillMatrix, path: str) -> None:
    """Write the matrix in canonical (id-sorted) text form."""
    canonical = matrix.sorted_copy()
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write("MUTANTS " + " ".join(canonical.mutant_ids) + "\n")
        handle.write("TESTS " + " ".join(canonical.test_ids) + "\n")
        for row in canonical.kills:
            handle.write("".join("1" if hit else "0" for hit in row) + "\n")


def load_matrix(path: str, bug_id: str | None = None) -> KillMatrix:
    """Read a matrix file; cells follow the header ids, not positions."""
    try:
        with open(path, encoding="utf-8") as handle:
            lines = [line.rstrip("\n") for line in handle]
    except OSError as exc:
        raise MatrixError(f"cannot read matrix file {path}: {exc}") from exc
    lines = [line for line in lines if line.strip()]
    if len(lines) < 2:
        raise MatrixError(f"matrix file {path} is empty or missing headers")
    if not lines[0].startswith("MUTANTS ") and lines[0] != "MUTANTS":
        raise MatrixError(f"matrix file {path}: first line must start with MUTANTS")
    if not lines[1].startswith("TESTS ") and lines[1] != "TESTS":
        raise MatrixError(f"matrix file {path}: second line must start with TESTS")
    mutant_ids = tuple(lines[0].split()[1:])
    test_ids = tuple(lines[1].split()[1:])
    rows = lines[2:]
    if len(rows) != len(mutant_ids):
        raise MatrixError(
            f"matrix file {path}: {len(mutant_ids)} mutants but {len(rows)} rows")
    cells = np.zeros((len(mutant_ids), len(test_ids)), dtype=bool)
    for i, row in enumerate(rows):
        row = row.strip()
        if len(row) != len(test_ids) or set(row) - {"0", "1"}:
            raise MatrixError(
                f"matrix file {path}: row {i + 1} is not {len(test_ids)} 0/1 cells")
        cells[i] = [ch == "1" for ch in row]
    if bug_id is None:
        bug_id = os.path.splitext(os.path.basename(path))[0]
    return KillMatrix(bug_id=bug_id, mutant_ids=mutant_ids,
                      test_ids=test_ids, kills=cells)


def run_mutant_suites(sources: dict[str, str], test_command: str, *,
                      expected_tests: list[str], timeout: float | None = None,
                      workers: int = 1, suffix: str = ".java") -> list[TestOutcomeVector]:
    """Run many mutants' suites with a bounded worker pool.

    Results are returned in the (sorted) mutant-id order regardless of
    completion order, keeping downstream matrices deterministic.
    """
    mutant_ids = sorted(sources)

    def run_one(mutant_id: str) -> TestOutcomeVector:
        return run_suite(sources[mutant_id], test_command, program_id=mutant_id,
                         expected_tests=expected_tests, timeout=timeout,
                         suffix=suffix)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(run_one, mutant_ids))


def save_outcomes(vector: TestOutcomeVector, path: str) -> None:
    """Persist an outcome vector in the runner's own line protocol."""
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        for test_id in sorted(vector.outcomes):
            handle.write(f"{test_id} {vector.outcomes[test_id].upper()}\n")


def load_outcomes(path: str, program_id: str) -> TestOutcomeVector:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise RunnerError(f"cannot read outcomes file {path}: {exc}") from exc
    outcomes = parse_outcome_lines(text)
    if not outcomes:
        raise RunnerError(f"outcomes file {path} has no status lines")
    return TestOutcomeVector(program_id=program_id, outcomes=outcomes)
