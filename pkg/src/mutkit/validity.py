"""Mutant validity accounting: sets A/D/C and the three validity rates.

A is every parsed mutation for a bug, D the duplicates within A, and C the
compilable subset; the useful set downstream is C minus D.  The equivalent
set E is deliberately not computed (undecidable); duplicate identity is
line-local because a mutant differs from the original on exactly one line.
"""

from __future__ import annotations

import logging
import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

_WS_RUN = re.compile(r"\s+")


class ValidityError(Exception):
    """Raised for malformed ledgers or unusable compile commands."""


@dataclass
class ValidityLedger:
    """Per-bug validity bookkeeping: Exp., set A, and subsets D and C."""

    bug_id: str
    expected: int
    generated: list[str] = field(default_factory=list)
    duplicates: set[str] = field(default_factory=set)
    compilable: set[str] = field(default_factory=set)

    def __post_init__(self):
        if self.expected < 0:
            raise ValidityError(f"expected must be >= 0, got {self.expected}")
        generated = set(self.generated)
        if not self.duplicates <= generated:
            raise ValidityError("duplicates must be a subset of generated")
        if not self.compilable <= generated:
            raise ValidityError("compilable must be a subset of generated")

    def useful(self) -> set[str]:
        """Useful mutants: compilable minus duplicates."""
        return self.compilable - self.duplicates


def normalize_line(text: str, collapse_whitespace: bool = True) -> str:
    """Trim the ends and optionally collapse internal whitespace runs."""
    trimmed = text.strip()
    return _WS_RUN.sub(" ", trimmed) if collapse_whitespace else trimmed


@dataclass
class DedupResult:
    """Duplicate partition: duplicate ids plus each key's canonical id."""

    duplicates: set[str]
    canonical: dict = field(default_factory=dict)


def dedup(mutants, original_source: str, collapse_whitespace: bool = True) -> DedupResult:
    """Partition mutants of one bug into canonical mutants and duplicates.

    A mutant is a duplicate iff its normalized mutated line equals the
    normalized original line at its target line, or another mutant with
    the same (target_line, normalized mutated line) key came earlier.
    The first occurrence of a key is canonical; |D| does not depend on
    the input order.
    """
    original_lines = original_source.split("\n")
    result = DedupResult(duplicates=set())
    for mutant in mutants:
        mutated = normalize_line(mutant.mutated_line_text, collapse_whitespace)
        index = mutant.target_line - 1
        if not 0 <= index < len(original_lines):
            raise ValidityError(
                f"mutant {mutant.id} targets line {mutant.target_line} "
                f"outside the original source")
        original = normalize_line(original_lines[index], collapse_whitespace)
        if mutated == original:
            result.duplicates.add(mutant.id)
            continue
        key = (mutant.target_line, mutated)
        if key in result.canonical:
            result.duplicates.add(mutant.id)
        else:
            result.canonical[key] = mutant.id
    return result


@dataclass
class CompileResult:
    ok: bool
    timed_out: bool = False
    stderr: str = ""


def substitute_command(template: str, source_path: str) -> list[str]:
    """Split a command template and substitute the {source} placeholder."""
    parts = shlex.split(template)
    if not parts:
        raise ValidityError("empty command template")
    if not any("{source}" in part for part in parts):
        raise ValidityError("command template must contain a {source} placeholder")
    return [part.replace("{source}", source_path) for part in parts]


def check_compile(source_text: str, compile_command: str, timeout: float = 60.0,
                  workdir: str | None = None, suffix: str = ".java") -> CompileResult:
    """Run the external compile command on a mutant's source.

    The command template must contain {source}; the source text is written
    to an isolated temporary file first.  Exit status 0 within the timeout
    means compilable; a timeout counts as non-compilable with a distinct
    flag.

    Raises:
        ValidityError: if the command executable does not exist.
    """
    with tempfile.TemporaryDirectory(dir=workdir) as tmp:
        source_path = os.path.join(tmp, f"mutant{suffix}")
        with open(source_path, "w", encoding="utf-8") as handle:
            handle.write(source_text)
        command = substitute_command(compile_command, source_path)
        try:
            proc = subprocess.run(command, capture_output=True, text=True,
                                  timeout=timeout)
        except FileNotFoundError as exc:
            raise ValidityError(f"compile command not found: {command[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            stderr = exc.stderr if isinstance(exc.stderr, str) else ""
            return CompileResult(ok=False, timed_out=True, stderr=stderr)
    return CompileResult(ok=proc.returncode == 0, stderr=proc.stderr)


def generation_rate(expected: int, generated_count: int) -> float | None:
    """Gen./Exp.; absent when nothing was expected."""
    if expected <= 0:
        return None
    return generated_count / expected


@dataclass
class ValidityRates:
    generation_rate: float | None
    nonduplicate_rate: float | None
    compilable_rate: float | None


def validity_metrics(ledger: ValidityLedger) -> ValidityRates:
    """The three validity rates for one bug's ledger.

    Rates whose denominator is zero are reported as absent (None).
    """
    total = len(ledger.generated)
    return ValidityRates(
        generation_rate=generation_rate(ledger.expected, total),
        nonduplicate_rate=(total - len(ledger.duplicates)) / total if total else None,
        compilable_rate=len(ledger.compilable) / total if total else None,
    )
