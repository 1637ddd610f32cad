"""Bug-fix corpus ingestion and line-level single-hunk extraction.

A corpus is a JSONL file of bug-fix records.  Each record carries the
pre-fix and post-fix text of one method; records whose fix touches more
than one contiguous line region are skipped, so every retained pair has
exactly one hunk.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

logger = logging.getLogger(__name__)

REQUIRED_FIELDS = ("id", "project", "pre_fix_code", "post_fix_code")

CONTEXT_LINES = 3


class CorpusError(Exception):
    """Raised for fatally malformed corpora (unreadable, duplicate ids, empty)."""


class HunkError(Exception):
    """Raised when a pre/post text pair does not form exactly one hunk."""


@dataclass(frozen=True)
class Hunk:
    """One contiguous line-level edit between a pre text and a post text.

    ``pre_start`` is the 1-based line in the pre text where the replaced
    region begins (for pure insertions, the line the new text is inserted
    before).  ``pre_lines`` and ``post_lines`` carry (line number, text)
    pairs numbered in their own versions.
    """

    pre_start: int
    pre_lines: tuple[tuple[int, str], ...]
    post_lines: tuple[tuple[int, str], ...]
    context_before: tuple[str, ...] = ()
    context_after: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.pre_lines and not self.post_lines:
            raise HunkError("a hunk must remove or add at least one line")
        for seq in (self.pre_lines, self.post_lines):
            numbers = [n for n, _ in seq]
            if numbers and numbers != list(range(numbers[0], numbers[0] + len(numbers))):
                raise HunkError("hunk lines must be contiguous")
        if self.pre_lines and self.pre_lines[0][0] != self.pre_start:
            raise HunkError("pre_start must match the first removed line")


@dataclass(frozen=True)
class BugFixPair:
    """A validated single-hunk bug-fix record."""

    id: str
    project: str
    pre_fix_code: str
    post_fix_code: str
    hunk: Hunk
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class SkippedRecord:
    """A corpus record that failed validation, with the reason."""

    record_id: str | None
    line_no: int
    reason: str


@dataclass
class Corpus:
    """An ingested corpus: accepted pairs plus the skip report."""

    pairs: list[BugFixPair]
    skipped: list[SkippedRecord]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    def get(self, pair_id: str) -> BugFixPair:
        for pair in self.pairs:
            if pair.id == pair_id:
                return pair
        raise KeyError(pair_id)

    def by_id(self) -> dict[str, BugFixPair]:
        return {pair.id: pair for pair in self.pairs}


def _lcs_table(a: list[str], b: list[str]) -> list[list[int]]:
    """Longest-common-subsequence length table for two line lists."""
    n, m = len(a), len(b)
    table = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n - 1, -1, -1):
        row, below = table[i], table[i + 1]
        for j in range(m - 1, -1, -1):
            if a[i] == b[j]:
                row[j] = below[j + 1] + 1
            else:
                row[j] = below[j] if below[j] >= row[j + 1] else row[j + 1]
    return table


def _changed_regions(a: list[str], b: list[str]) -> list[tuple[int, int, int, int]]:
    """Maximal runs of non-matching lines as (i1, i2, j1, j2) index ranges.

    Backtracks an LCS alignment; on ties it prefers consuming from ``a``
    first, which keeps the result deterministic.
    """
    table = _lcs_table(a, b)
    regions: list[tuple[int, int, int, int]] = []
    i = j = 0
    ri, rj = 0, 0
    in_region = False
    while i < len(a) or j < len(b):
        if i < len(a) and j < len(b) and a[i] == b[j]:
            if in_region:
                regions.append((ri, i, rj, j))
                in_region = False
            i += 1
            j += 1
            continue
        if not in_region:
            ri, rj = i, j
            in_region = True
        if j == len(b) or (i < len(a) and table[i + 1][j] >= table[i][j + 1]):
            i += 1
        else:
            j += 1
    if in_region:
        regions.append((ri, i, rj, j))
    return regions


def diff_hunk(pre_text: str, post_text: str) -> Hunk:
    """Diff two texts and return their single hunk.

    Raises HunkError if the texts are identical or differ in more than
    one contiguous region.
    """
    a = pre_text.split("\n")
    b = post_text.split("\n")
    regions = _changed_regions(a, b)
    if not regions:
        raise HunkError("texts are identical")
    if len(regions) > 1:
        raise HunkError(f"multi-hunk edit ({len(regions)} regions)")
    i1, i2, j1, j2 = regions[0]
    return Hunk(
        pre_start=i1 + 1,
        pre_lines=tuple((k + 1, a[k]) for k in range(i1, i2)),
        post_lines=tuple((k + 1, b[k]) for k in range(j1, j2)),
        context_before=tuple(a[max(0, i1 - CONTEXT_LINES):i1]),
        context_after=tuple(a[i2:i2 + CONTEXT_LINES]),
    )


def apply_hunk(hunk: Hunk, pre_text: str) -> str:
    """Apply ``hunk`` to ``pre_text`` and return the post text."""
    lines = pre_text.split("\n")
    start = hunk.pre_start - 1
    if start < 0 or start > len(lines):
        raise HunkError(f"hunk start {hunk.pre_start} outside text")
    for offset, (_, text) in enumerate(hunk.pre_lines):
        idx = start + offset
        if idx >= len(lines) or lines[idx] != text:
            raise HunkError(f"hunk does not match pre text at line {idx + 1}")
    replacement = [text for _, text in hunk.post_lines]
    lines[start:start + len(hunk.pre_lines)] = replacement
    return "\n".join(lines)


def _validate_record(raw: dict) -> str | None:
    """Return a rejection reason for a raw record, or None if it is well formed."""
    for name in REQUIRED_FIELDS:
        if name not in raw:
            return f"missing field: {name}"
        if not isinstance(raw[name], str):
            return f"field is not a string: {name}"
    if not raw["id"]:
        return "empty id"
    if "metadata" in raw and not isinstance(raw["metadata"], dict):
        return "metadata is not an object"
    return None


def ingest_corpus(path: str) -> Corpus:
    """Read a JSONL corpus file, keeping single-hunk pairs and reporting skips.

    Args:
        path: JSONL file with one record per line; each record needs the
            fields id, project, pre_fix_code and post_fix_code.

    Returns:
        A Corpus of accepted pairs in file order plus skip records.

    Raises:
        CorpusError: if the file is unreadable, contains duplicate ids, or
            yields zero valid pairs.
    """
    try:
        with open(path, encoding="utf-8") as handle:
            raw_lines = handle.readlines()
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    pairs: list[BugFixPair] = []
    skipped: list[SkippedRecord] = []
    seen: set[str] = set()
    for line_no, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError as exc:
            skipped.append(SkippedRecord(None, line_no, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(raw, dict):
            skipped.append(SkippedRecord(None, line_no, "record is not an object"))
            continue
        reason = _validate_record(raw)
        if reason is not None:
            skipped.append(SkippedRecord(raw.get("id") if isinstance(raw.get("id"), str) else None,
                                         line_no, reason))
            continue
        record_id = raw["id"]
        if record_id in seen:
            raise CorpusError(f"duplicate record id {record_id!r} at line {line_no}")
        seen.add(record_id)
        try:
            hunk = diff_hunk(raw["pre_fix_code"], raw["post_fix_code"])
        except HunkError as exc:
            skipped.append(SkippedRecord(record_id, line_no, str(exc)))
            continue
        pairs.append(BugFixPair(
            id=record_id,
            project=raw["project"],
            pre_fix_code=raw["pre_fix_code"],
            post_fix_code=raw["post_fix_code"],
            hunk=hunk,
            metadata=dict(raw.get("metadata", {})),
        ))

    if not pairs:
        raise CorpusError(f"corpus {path} has no valid single-hunk records")
    logger.info("ingested %d pairs from %s (%d skipped)", len(pairs), path, len(skipped))
    return Corpus(pairs=pairs, skipped=skipped)
