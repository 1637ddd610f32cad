"""Pipeline orchestration: shared configuration plus the generate and
evaluate stage runners the CLI subcommands are built on.

Generation walks chunk -> retrieve -> prompt -> complete -> parse ->
materialize per target and persists a manifest of every attempted pair.
Evaluation replays the persisted artifacts through validity, kill-matrix
execution (or loading), effectiveness metrics, prioritization, and, for
buggy-mode runs, fault localization, writing one deterministic report
directory.
"""

from __future__ import annotations

import json
import logging
import random
import re
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chunker import ChunkerError, chunk_method, parse_method, whole_method_chunk
from .corpus import ingest_corpus
from .embedder import EmbeddingError, LexicalEmbedder, VectorIndex
from .execution import (
    KillMatrix,
    MatrixError,
    RunnerError,
    TestOutcomeVector,
    build_kill_matrix,
    load_matrix,
    load_outcomes,
    run_mutant_suites,
    run_suite,
    save_matrix,
    save_outcomes,
)
from .llm import (
    BackendConfig,
    BackendError,
    Completion,
    HttpChatBackend,
    MockBackend,
    aggregate_usage,
    complete_batch,
    prompt_digest,
)
from .mbfl import MbflError, fl_metrics, localize
from .metrics import BugContext, MetricsError, coupled_mutants, effectiveness_report
from .promptgen import (
    MaterializeError,
    Mutant,
    manifest_record,
    materialize,
    parse_response,
    read_manifest,
    render_examples,
    render_prompt,
    write_manifest,
)
from .tcp import TcpError, apfd, grd, grk, hyb
from .validity import ValidityLedger, check_compile, dedup, validity_metrics

logger = logging.getLogger(__name__)

METRIC_CHOICES = ("euclidean", "cosine", "dot")
KEY_SIDE_CHOICES = ("post_fix", "pre_fix")
MODE_CHOICES = ("fixed", "buggy")
ALL_STAGES = ("validity", "execution", "metrics", "tcp", "mbfl")
_BUG_ID_PATTERN = re.compile(r"^[A-Za-z0-9._-]+$")


class PipelineError(Exception):
    """Raised for configuration, target, or artifact problems."""


@dataclass
class PipelineConfig:
    """Shared settings for every pipeline stage.

    Every field has a default except the artifact locations; JSON config
    files may set any subset and CLI flags override the file.
    """

    corpus: str | None = None
    index: str | None = None
    output_dir: str = "out"
    retrieval_n: int = 6
    metric: str = "euclidean"
    chunking: bool = True
    retrieval: bool = True
    key_side: str = "post_fix"
    dimension: int = 512
    mode: str = "fixed"
    backend: dict = field(default_factory=dict)
    compile_command: str | None = None
    test_command: str | None = None
    timeout: float = 30.0
    workers: int = 4
    seed: int = 0
    sample_targets: int | None = None
    collapse_whitespace: bool = True
    hyb_weight: float = 0.5

    def __post_init__(self):
        if self.retrieval_n < 1:
            raise PipelineError(f"retrieval_n must be >= 1, got {self.retrieval_n}")
        if self.metric not in METRIC_CHOICES:
            raise PipelineError(f"metric must be one of {METRIC_CHOICES}")
        if self.key_side not in KEY_SIDE_CHOICES:
            raise PipelineError(f"key_side must be one of {KEY_SIDE_CHOICES}")
        if self.mode not in MODE_CHOICES:
            raise PipelineError(f"mode must be one of {MODE_CHOICES}")
        if self.workers < 1:
            raise PipelineError("workers must be >= 1")
        if self.dimension < 1:
            raise PipelineError("dimension must be >= 1")
        if not 0.0 <= self.hyb_weight <= 1.0:
            raise PipelineError("hyb_weight must be in [0, 1]")
        if self.sample_targets is not None and self.sample_targets < 1:
            raise PipelineError("sample_targets must be >= 1 when set")
        if self.timeout <= 0:
            raise PipelineError("timeout must be positive")

    def variant_label(self) -> str:
        """Ablation variant implied by the retrieval/chunking switches."""
        if self.retrieval and self.chunking:
            return "rag+chunk"
        if self.retrieval:
            return "rag"
        if self.chunking:
            return "chunk"
        return "plain"


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Read a JSON config file, apply non-None overrides, and validate."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as error:
        raise PipelineError(f"cannot read config {path}: {error}") from error
    except json.JSONDecodeError as error:
        raise PipelineError(f"config {path} is not valid JSON: {error}") from error
    if not isinstance(raw, dict):
        raise PipelineError(f"config {path} must be a JSON object")
    known = set(PipelineConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise PipelineError(f"config {path} has unknown keys: {unknown}")
    merged = dict(raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    try:
        return PipelineConfig(**merged)
    except TypeError as error:
        raise PipelineError(f"config {path}: {error}") from error


@dataclass(frozen=True)
class TargetSpec:
    """One focal method to mutate, with its evaluation ground truth."""

    bug_id: str
    method: str
    project: str = ""
    buggy_method: str | None = None
    bug_revealing_tests: tuple[str, ...] = ()
    faulty_lines: tuple[int, ...] = ()

    def __post_init__(self):
        if not _BUG_ID_PATTERN.match(self.bug_id):
            raise PipelineError(
                f"bug id {self.bug_id!r} must match {_BUG_ID_PATTERN.pattern}")
        if not self.method.strip():
            raise PipelineError(f"target {self.bug_id}: empty method source")


def load_targets(path: str | Path) -> list[TargetSpec]:
    """Read a JSONL targets file into validated specs, sorted by bug id."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as error:
        raise PipelineError(f"cannot read targets {path}: {error}") from error
    targets: list[TargetSpec] = []
    seen: set[str] = set()
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as error:
            raise PipelineError(
                f"targets line {line_no}: invalid JSON: {error}") from error
        if not isinstance(record, dict) or "bug_id" not in record \
                or "method" not in record:
            raise PipelineError(
                f"targets line {line_no}: needs bug_id and method fields")
        spec = TargetSpec(
            bug_id=str(record["bug_id"]),
            method=record["method"],
            project=record.get("project", ""),
            buggy_method=record.get("buggy_method"),
            bug_revealing_tests=tuple(record.get("bug_revealing_tests", ())),
            faulty_lines=tuple(int(v) for v in record.get("faulty_lines", ())))
        if spec.bug_id in seen:
            raise PipelineError(
                f"targets line {line_no}: duplicate bug id {spec.bug_id}")
        seen.add(spec.bug_id)
        targets.append(spec)
    if not targets:
        raise PipelineError(f"targets file {path} has no targets")
    return sorted(targets, key=lambda t: t.bug_id)


def pick_targets(targets: Sequence[TargetSpec],
                 config: PipelineConfig) -> list[TargetSpec]:
    """Optional seeded down-sampling; the only randomness in the pipeline."""
    ordered = sorted(targets, key=lambda t: t.bug_id)
    if config.sample_targets is None or config.sample_targets >= len(ordered):
        return ordered
    rng = random.Random(config.seed)
    chosen = rng.sample(ordered, config.sample_targets)
    return sorted(chosen, key=lambda t: t.bug_id)


def make_backend(config: PipelineConfig):
    """Instantiate the configured completion backend."""
    settings = dict(config.backend)
    mode = settings.pop("mode", "mock")
    if mode == "mock":
        script = settings.pop("script", None)
        record = settings.pop("record", None)
        if settings:
            raise PipelineError(f"unknown mock backend keys: {sorted(settings)}")
        return MockBackend(script=script, record_path=record)
    if mode == "http":
        try:
            backend_config = BackendConfig(**settings)
        except (TypeError, BackendError) as error:
            raise PipelineError(f"bad http backend settings: {error}") from error
        return HttpChatBackend(backend_config)
    raise PipelineError(f"backend mode must be mock or http, got {mode!r}")


def probe_embedder(index: VectorIndex) -> LexicalEmbedder:
    """Rebuild the embedder that matches an index's recorded backend."""
    prefix = "lexical-trigram-"
    if not index.backend_id.startswith(prefix):
        raise PipelineError(
            f"index was built with backend {index.backend_id!r}; only "
            f"lexical-trigram indexes can be queried offline")
    return LexicalEmbedder(dimension=int(index.backend_id[len(prefix):]))


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                    encoding="utf-8")


def _write_jsonl(path: Path, records) -> None:
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")


@dataclass
class GenerateOutcome:
    """Everything run_generate persisted, plus per-target accounting."""

    summary: dict
    manifest: list[dict]
    mutants: dict[str, Mutant]
    prompts: list[dict]
    succeeded: int
    failed: int


def _retrieval_context(config: PipelineConfig):
    if not config.retrieval:
        return None
    if not config.corpus or not config.index:
        raise PipelineError(
            "retrieval is enabled but corpus/index paths are not configured")
    corpus = ingest_corpus(config.corpus)
    index = VectorIndex.load(config.index)
    return corpus.by_id(), index, probe_embedder(index)


def run_generate(config: PipelineConfig, targets: Sequence[TargetSpec],
                 backend=None) -> GenerateOutcome:
    """Generate mutants for every target and persist the artifacts.

    Per-target failures (unparseable method, backend errors) are isolated:
    the target is recorded as failed and the run continues.  Artifacts
    land in config.output_dir: prompts.jsonl, manifest.jsonl, summary.json
    and one mutants/<id>.java per materialized mutant.
    """
    backend = backend if backend is not None else make_backend(config)
    retrieval = _retrieval_context(config)
    targets = pick_targets(targets, config)

    out_dir = Path(config.output_dir)
    mutants_dir = out_dir / "mutants"
    mutants_dir.mkdir(parents=True, exist_ok=True)

    per_target: dict[str, dict] = {}
    plan: list[dict] = []
    for target in targets:
        entry = per_target[target.bug_id] = {
            "project": target.project,
            "expected": 0,
            "chunks": 0,
            "prompts_total": 0,
            "prompts_completed": 0,
            "pairs_parsed": 0,
            "pairs_dropped": 0,
            "parse_failures": 0,
            "materialized": 0,
            "rejected": 0,
            "errors": [],
        }
        try:
            method = parse_method(target.method)
        except ChunkerError as error:
            entry["errors"].append(f"parse: {error}")
            continue
        entry["expected"] = len(method.lines)
        chunks = (chunk_method(method) if config.chunking
                  else [whole_method_chunk(method)])
        entry["chunks"] = len(chunks)
        for position, chunk in enumerate(chunks):
            chunk_id = f"c{position:02d}"
            examples = []
            example_ids: list[str] = []
            if retrieval is not None:
                by_id, index, embedder = retrieval
                try:
                    neighbors = index.query(
                        embedder.embed(chunk.text),
                        n=min(config.retrieval_n, len(index.ids)))
                except EmbeddingError as error:
                    entry["errors"].append(f"retrieval {chunk_id}: {error}")
                    continue
                retrieved = [by_id[pair_id] for pair_id, _ in neighbors]
                examples = render_examples(retrieved).examples
                example_ids = [example.source_pair_id for example in examples]
            requested = len(chunk.line_numbers)
            prompt = render_prompt(method, chunk, examples, requested)
            entry["prompts_total"] += 1
            plan.append({
                "bug_id": target.bug_id,
                "chunk_id": chunk_id,
                "chunk": chunk,
                "source": target.method,
                "n": requested,
                "prompt": prompt,
                "example_ids": example_ids,
            })

    prompt_batch = [(f"{item['bug_id']}/{item['chunk_id']}", item["prompt"])
                    for item in plan]
    results = (complete_batch(backend, prompt_batch, concurrency=config.workers)
               if prompt_batch else [])

    manifest_rows: list[dict] = []
    prompt_rows: list[dict] = []
    mutants: dict[str, Mutant] = {}
    for item, (prompt_id, result) in zip(plan, results):
        entry = per_target[item["bug_id"]]
        row = {
            "prompt_id": prompt_id,
            "bug_id": item["bug_id"],
            "chunk_id": item["chunk_id"],
            "n": item["n"],
            "digest": prompt_digest(item["prompt"]),
            "prompt": item["prompt"],
            "examples": item["example_ids"],
            "error": None,
        }
        if isinstance(result, BackendError):
            row["error"] = str(result)
            entry["errors"].append(f"backend {item['chunk_id']}: {result}")
            prompt_rows.append(row)
            continue
        entry["prompts_completed"] += 1
        prompt_rows.append(row)
        parsed = parse_response(result.text)
        if parsed.failure is not None:
            entry["parse_failures"] += 1
        entry["pairs_parsed"] += len(parsed.pairs)
        entry["pairs_dropped"] += parsed.dropped
        for seq, pair in enumerate(parsed.pairs):
            mutant_id = f"{item['bug_id']}-{item['chunk_id']}-m{seq:03d}"
            try:
                mutant = materialize(item["source"], item["chunk"], pair,
                                     mutant_id=mutant_id, bug_id=item["bug_id"],
                                     chunk_id=item["chunk_id"])
            except MaterializeError as error:
                entry["rejected"] += 1
                manifest_rows.append(manifest_record(
                    mutant_id=mutant_id, bug_id=item["bug_id"],
                    chunk_id=item["chunk_id"], target_line=None,
                    precode=pair.precode, aftercode=pair.aftercode,
                    rejection=error.reason))
                continue
            entry["materialized"] += 1
            mutants[mutant_id] = mutant
            (mutants_dir / f"{mutant_id}.java").write_text(
                mutant.source, encoding="utf-8")
            manifest_rows.append(manifest_record(
                mutant_id=mutant_id, bug_id=item["bug_id"],
                chunk_id=item["chunk_id"], target_line=mutant.target_line,
                precode=pair.precode, aftercode=pair.aftercode,
                rejection=None))

    succeeded = sum(
        1 for entry in per_target.values()
        if entry["chunks"] and entry["prompts_completed"] == entry["prompts_total"]
        and not entry["errors"])
    failed = len(per_target) - succeeded
    usage = aggregate_usage(results)
    summary = {
        "variant": config.variant_label(),
        "mode": config.mode,
        "targets": per_target,
        "totals": {
            "targets": len(per_target),
            "succeeded": succeeded,
            "failed": failed,
            "expected": sum(e["expected"] for e in per_target.values()),
            "prompts": sum(e["prompts_total"] for e in per_target.values()),
            "pairs_parsed": sum(e["pairs_parsed"] for e in per_target.values()),
            "materialized": sum(e["materialized"] for e in per_target.values()),
            "rejected": sum(e["rejected"] for e in per_target.values()),
            "usage": usage,
        },
    }

    write_manifest(manifest_rows, str(out_dir / "manifest.jsonl"))
    _write_jsonl(out_dir / "prompts.jsonl", prompt_rows)
    _write_json(out_dir / "summary.json", summary)
    logger.info("generate: %d/%d targets succeeded, %d mutants materialized",
                succeeded, len(per_target), len(mutants))
    return GenerateOutcome(summary=summary, manifest=manifest_rows,
                           mutants=mutants, prompts=prompt_rows,
                           succeeded=succeeded, failed=failed)


@dataclass
class BugArtifacts:
    """Evaluation inputs reassembled for one bug."""

    target: TargetSpec
    expected: int
    all_ids: list[str]
    materialized: dict[str, Mutant]
    ledger: ValidityLedger | None = None
    matrix: KillMatrix | None = None
    original: TestOutcomeVector | None = None
    revealing: frozenset[str] = frozenset()


@dataclass
class EvaluateOutcome:
    """Report sections plus the directory they were written to."""

    sections: dict
    out_dir: Path
    warnings: list[str]


def _load_bug_artifacts(targets: Sequence[TargetSpec], manifest_dir: Path,
                        ) -> dict[str, BugArtifacts]:
    summary_path = manifest_dir / "summary.json"
    manifest_path = manifest_dir / "manifest.jsonl"
    if not summary_path.exists() or not manifest_path.exists():
        raise PipelineError(
            f"{manifest_dir} lacks summary.json/manifest.jsonl; run generate first")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    rows = read_manifest(str(manifest_path))
    by_bug: dict[str, list[dict]] = {}
    for row in rows:
        by_bug.setdefault(row["bug_id"], []).append(row)
    artifacts: dict[str, BugArtifacts] = {}
    for target in targets:
        target_summary = summary.get("targets", {}).get(target.bug_id)
        if target_summary is None:
            raise PipelineError(
                f"bug {target.bug_id} missing from {summary_path}; "
                f"generate did not cover it")
        bug_rows = by_bug.get(target.bug_id, [])
        materialized: dict[str, Mutant] = {}
        for row in bug_rows:
            if row["rejection"] is not None:
                continue
            source_path = manifest_dir / "mutants" / f"{row['mutant_id']}.java"
            try:
                source = source_path.read_text(encoding="utf-8")
            except OSError as error:
                raise PipelineError(
                    f"mutant source missing: {source_path}") from error
            materialized[row["mutant_id"]] = Mutant(
                id=row["mutant_id"], bug_id=row["bug_id"], source=source,
                target_line=row["target_line"],
                original_line_text=row["precode"],
                mutated_line_text=row["aftercode"],
                chunk_id=row["chunk_id"])
        artifacts[target.bug_id] = BugArtifacts(
            target=target,
            expected=target_summary["expected"],
            all_ids=[row["mutant_id"] for row in bug_rows],
            materialized=materialized)
    return artifacts


def _run_validity(config: PipelineConfig, bug: BugArtifacts) -> None:
    ordered = [bug.materialized[mid] for mid in sorted(bug.materialized)]
    duplicates = dedup(ordered, bug.target.method,
                       config.collapse_whitespace).duplicates
    if config.compile_command and ordered:
        def compile_one(mutant: Mutant) -> tuple[str, bool]:
            result = check_compile(mutant.source, config.compile_command,
                                   timeout=config.timeout)
            return mutant.id, result.ok

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            compilable = {mid for mid, ok in pool.map(compile_one, ordered) if ok}
    else:
        compilable = set(bug.materialized)
    bug.ledger = ValidityLedger(
        bug_id=bug.target.bug_id, expected=bug.expected,
        generated=list(bug.all_ids), duplicates=duplicates,
        compilable=compilable)


def _select_rows(matrix: KillMatrix, wanted: list[str]) -> KillMatrix:
    position = {mid: i for i, mid in enumerate(matrix.mutant_ids)}
    missing = [mid for mid in wanted if mid not in position]
    if missing:
        raise PipelineError(
            f"bug {matrix.bug_id}: matrix lacks mutants {missing[:3]}")
    rows = [position[mid] for mid in wanted]
    kills = matrix.kills[rows] if wanted else np.zeros(
        (0, len(matrix.test_ids)), dtype=bool)
    return KillMatrix(bug_id=matrix.bug_id, mutant_ids=tuple(wanted),
                      test_ids=matrix.test_ids, kills=kills)


def _run_execution(config: PipelineConfig, bug: BugArtifacts,
                   matrices_dir: Path) -> None:
    bug_id = bug.target.bug_id
    useful = sorted(bug.ledger.useful())
    matrix_path = matrices_dir / f"{bug_id}.matrix"
    outcomes_path = matrices_dir / f"{bug_id}.original.txt"
    if matrix_path.exists():
        full = load_matrix(str(matrix_path), bug_id=bug_id)
        bug.matrix = _select_rows(full, useful)
        if outcomes_path.exists():
            bug.original = load_outcomes(str(outcomes_path), bug_id)
        return
    if not config.test_command:
        raise PipelineError(
            f"bug {bug_id}: no matrix at {matrix_path} and no test_command "
            f"configured")
    original = run_suite(bug.target.method, config.test_command,
                         program_id=bug_id, timeout=config.timeout)
    expected_tests = sorted(original.outcomes)
    vectors = run_mutant_suites(
        {mid: bug.materialized[mid].source for mid in useful},
        config.test_command, expected_tests=expected_tests,
        timeout=config.timeout, workers=config.workers)
    bug.matrix = build_kill_matrix(original, vectors, bug_id=bug_id)
    bug.original = original
    matrices_dir.mkdir(parents=True, exist_ok=True)
    save_matrix(bug.matrix, str(matrix_path))
    save_outcomes(original, str(outcomes_path))


def _resolve_revealing(config: PipelineConfig, bug: BugArtifacts) -> None:
    target = bug.target
    test_ids = set(bug.matrix.test_ids) if bug.matrix is not None else set()
    if config.mode == "buggy":
        if bug.original is None:
            raise PipelineError(
                f"bug {target.bug_id}: buggy mode needs the original outcome "
                f"vector (missing {target.bug_id}.original.txt)")
        bug.revealing = frozenset(bug.original.failing())
        return
    if target.bug_revealing_tests:
        bug.revealing = frozenset(target.bug_revealing_tests) & test_ids
        return
    if target.buggy_method and config.test_command:
        buggy = run_suite(target.buggy_method, config.test_command,
                          program_id=f"{target.bug_id}-buggy",
                          expected_tests=sorted(test_ids),
                          timeout=config.timeout)
        bug.revealing = frozenset(buggy.failing()) & test_ids
        return
    raise PipelineError(
        f"bug {target.bug_id}: no bug-revealing tests available (provide "
        f"bug_revealing_tests or buggy_method, or run in buggy mode)")


def _validity_section(config: PipelineConfig,
                      bugs: dict[str, BugArtifacts]) -> dict:
    per_bug = {}
    per_project: dict[str, dict] = {}
    for bug_id in sorted(bugs):
        bug = bugs[bug_id]
        ledger = bug.ledger
        rates = validity_metrics(ledger)
        per_bug[bug_id] = {
            "project": bug.target.project,
            "expected": ledger.expected,
            "generated": len(ledger.generated),
            "duplicates": len(ledger.duplicates),
            "compilable": len(ledger.compilable),
            "useful": len(ledger.useful()),
            "generation_rate": rates.generation_rate,
            "nonduplicate_rate": rates.nonduplicate_rate,
            "compilable_rate": rates.compilable_rate,
        }
        project = per_project.setdefault(bug.target.project or "(none)", {
            "expected": 0, "generated": 0, "duplicates": 0,
            "compilable": 0, "useful": 0})
        for key in ("expected", "generated", "duplicates", "compilable", "useful"):
            project[key] += per_bug[bug_id][key]
    for project in per_project.values():
        generated = project["generated"]
        project["generation_rate"] = (
            project["generated"] / project["expected"]
            if project["expected"] else None)
        project["nonduplicate_rate"] = (
            (generated - project["duplicates"]) / generated if generated else None)
        project["compilable_rate"] = (
            project["compilable"] / generated if generated else None)
    overall = {key: sum(p[key] for p in per_project.values())
               for key in ("expected", "generated", "duplicates",
                           "compilable", "useful")}
    generated = overall["generated"]
    overall["generation_rate"] = (overall["generated"] / overall["expected"]
                                  if overall["expected"] else None)
    overall["nonduplicate_rate"] = ((generated - overall["duplicates"]) / generated
                                    if generated else None)
    overall["compilable_rate"] = (overall["compilable"] / generated
                                  if generated else None)
    return {"per_bug": per_bug, "per_project": per_project, "overall": overall}


def _metrics_section(bugs: dict[str, BugArtifacts]) -> dict:
    contexts = []
    for bug_id in sorted(bugs):
        bug = bugs[bug_id]
        contexts.append(BugContext(bug_id=bug_id, matrix=bug.matrix,
                                   bug_revealing_tests=bug.revealing))
    report = effectiveness_report(contexts)
    coupled = {ctx.bug_id: sorted(coupled_mutants(ctx)) for ctx in contexts
               if ctx.matrix.mutant_ids}
    return {
        "mutation_score": {"micro": report.mutation_score_micro,
                           "macro": report.mutation_score_macro},
        "real_bug_detection": {"macro": report.rbd_macro,
                               "micro": report.rbd_micro},
        "coupling_rate": {"micro": report.coupling_rate_micro,
                          "macro": report.coupling_rate_macro},
        "bug_ochiai": dict(sorted(report.bug_ochiai.items())),
        "aoc": report.aoc,
        "high_similarity_count": report.high_similarity_count,
        "per_bug_mutation_score": dict(sorted(report.per_bug_mutation_score.items())),
        "excluded_bugs": sorted(report.excluded_bugs),
        "coupled_mutants": coupled,
    }


def _tcp_section(config: PipelineConfig, bugs: dict[str, BugArtifacts],
                 warnings: list[str]) -> dict:
    strategies = {
        "GRK": grk,
        "GRD": grd,
        f"HYB({config.hyb_weight:g})": lambda m: hyb(m, config.hyb_weight),
    }
    per_bug: dict[str, dict] = {}
    apfd_values: dict[str, list[float]] = {name: [] for name in strategies}
    for bug_id in sorted(bugs):
        bug = bugs[bug_id]
        if bug.matrix is None or not bug.matrix.test_ids:
            warnings.append(f"tcp: bug {bug_id} has no kill matrix tests")
            continue
        detection_tests = set(bug.revealing) & set(bug.matrix.test_ids)
        entry: dict = {}
        for name, strategy in strategies.items():
            suite = strategy(bug.matrix)
            record = {"order": list(suite.order),
                      "step_kills": list(suite.step_kills),
                      "step_pairs": list(suite.step_pairs)}
            if detection_tests:
                value = apfd(suite.order, {bug_id: detection_tests})
                record["apfd"] = value
                apfd_values[name].append(value)
            else:
                warnings.append(
                    f"tcp: bug {bug_id} has no revealing test in the matrix; "
                    f"APFD skipped")
            entry[name] = record
        per_bug[bug_id] = entry
    mean_apfd = {name: (sum(values) / len(values) if values else None)
                 for name, values in apfd_values.items()}
    return {"strategies": sorted(strategies), "per_bug": per_bug,
            "mean_apfd": mean_apfd}


def mutant_outcomes_from_matrix(matrix: KillMatrix,
                                 original: TestOutcomeVector,
                                 ) -> dict[str, TestOutcomeVector]:
    """Rebuild each mutant's outcomes: a kill flips the original status."""
    vectors = {}
    for row, mutant_id in enumerate(matrix.mutant_ids):
        outcomes = {}
        for col, test_id in enumerate(matrix.test_ids):
            status = original.outcomes[test_id]
            if matrix.kills[row, col]:
                status = "pass" if status == "fail" else "fail"
            outcomes[test_id] = status
        vectors[mutant_id] = TestOutcomeVector(program_id=mutant_id,
                                               outcomes=outcomes)
    return vectors


def _mbfl_section(config: PipelineConfig, bugs: dict[str, BugArtifacts],
                  warnings: list[str]) -> dict:
    section: dict = {"per_bug": {}, "metrics": {}}
    reports: dict[str, list] = {"muse": [], "metallaxis": []}
    for bug_id in sorted(bugs):
        bug = bugs[bug_id]
        if bug.original is None or not bug.original.failing():
            warnings.append(f"mbfl: bug {bug_id} lacks a failing original run")
            continue
        if not bug.target.faulty_lines:
            warnings.append(f"mbfl: bug {bug_id} has no faulty_lines ground truth")
            continue
        if not bug.matrix.mutant_ids:
            warnings.append(f"mbfl: bug {bug_id} has no useful mutants")
            continue
        statement_of = {mid: bug.materialized[mid].target_line
                        for mid in bug.matrix.mutant_ids}
        mutant_outcomes = mutant_outcomes_from_matrix(bug.matrix, bug.original)
        statements = range(1, bug.expected + 1)
        entry = {}
        for method in ("muse", "metallaxis"):
            report = localize(bug_id, bug.original, mutant_outcomes,
                              statement_of, method, statements=statements,
                              faulty_statements=bug.target.faulty_lines)
            reports[method].append(report)
            entry[method] = {
                "scores": {str(s): v for s, v in sorted(report.scores.items())},
                "expected_ranks": {str(s): v for s, v
                                   in sorted(report.expected_ranks.items())},
                "faulty_ranks": report.faulty_ranks(),
            }
        section["per_bug"][bug_id] = entry
    for method, method_reports in reports.items():
        if not method_reports:
            section["metrics"][method] = None
            continue
        try:
            metrics = fl_metrics(method_reports)
        except MbflError as error:
            warnings.append(f"mbfl: {method}: {error}")
            section["metrics"][method] = None
            continue
        section["metrics"][method] = {
            "top_k": {str(k): v for k, v in sorted(metrics.top_k.items())},
            "mar": metrics.mar,
            "mfr": metrics.mfr,
            "first_rank_mean": metrics.first_rank_mean,
            "evaluated_bugs": metrics.evaluated_bugs,
            "excluded_bugs": list(metrics.excluded_bugs),
        }
    return section


def _percent(value: float | None) -> str:
    return "n/a" if value is None else f"{100 * value:.2f}%"


def _fixed(value: float | None, digits: int = 4) -> str:
    return "n/a" if value is None else f"{value:.{digits}f}"


def _validity_text(section: dict) -> str:
    lines = ["VALIDITY (per project)", ""]
    header = f"{'Project':<16}{'Exp.':>8}{'Gen.':>8}{'Gen.Rate':>10}" \
             f"{'ND Rate':>10}{'Comp.Rate':>11}{'Useful':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    rows = dict(section["per_project"])
    rows["Overall"] = section["overall"]
    for name, row in rows.items():
        lines.append(
            f"{name:<16}{row['expected']:>8}{row['generated']:>8}"
            f"{_percent(row['generation_rate']):>10}"
            f"{_percent(row['nonduplicate_rate']):>10}"
            f"{_percent(row['compilable_rate']):>11}"
            f"{row['useful']:>8}")
    return "\n".join(lines) + "\n"


def _metrics_text(section: dict) -> str:
    lines = ["EFFECTIVENESS", ""]
    lines.append(f"{'Mutation score (micro)':<32}"
                 f"{_fixed(section['mutation_score']['micro'])}")
    lines.append(f"{'Mutation score (macro)':<32}"
                 f"{_fixed(section['mutation_score']['macro'])}")
    lines.append(f"{'Real bug detection (macro)':<32}"
                 f"{_fixed(section['real_bug_detection']['macro'])}")
    lines.append(f"{'Real bug detection (micro)':<32}"
                 f"{_fixed(section['real_bug_detection']['micro'])}")
    lines.append(f"{'Coupling rate (micro)':<32}"
                 f"{_fixed(section['coupling_rate']['micro'])}")
    lines.append(f"{'Coupling rate (macro)':<32}"
                 f"{_fixed(section['coupling_rate']['macro'])}")
    lines.append(f"{'Average Ochiai (AOC)':<32}{_fixed(section['aoc'])}")
    lines.append(f"{'Bugs with Ochiai >= 0.8':<32}"
                 f"{section['high_similarity_count']}")
    if section["excluded_bugs"]:
        lines.append(f"{'Excluded bugs':<32}{', '.join(section['excluded_bugs'])}")
    lines.append("")
    lines.append(f"{'Bug':<24}{'MS':>8}{'Ochiai':>10}")
    for bug_id, score in section["per_bug_mutation_score"].items():
        ochiai_value = section["bug_ochiai"].get(bug_id)
        lines.append(f"{bug_id:<24}{_fixed(score):>8}"
                     f"{_fixed(ochiai_value):>10}")
    return "\n".join(lines) + "\n"


def _tcp_text(section: dict) -> str:
    lines = ["TEST PRIORITIZATION (mean APFD)", ""]
    for name in sorted(section["mean_apfd"]):
        lines.append(f"{name:<16}{_fixed(section['mean_apfd'][name])}")
    lines.append("")
    lines.append(f"{'Bug':<24}" + "".join(
        f"{name:>12}" for name in sorted(section["mean_apfd"])))
    for bug_id, entry in section["per_bug"].items():
        cells = "".join(
            f"{_fixed(entry[name].get('apfd')):>12}"
            for name in sorted(section["mean_apfd"]))
        lines.append(f"{bug_id:<24}{cells}")
    return "\n".join(lines) + "\n"


def _mbfl_text(section: dict) -> str:
    lines = ["FAULT LOCALIZATION", ""]
    header = f"{'Method':<14}{'Top-1':>7}{'Top-3':>7}{'Top-5':>7}" \
             f"{'MAR':>8}{'MFR':>8}"
    lines.append(header)
    lines.append("-" * len(header))
    for method in ("muse", "metallaxis"):
        metrics = section["metrics"].get(method)
        if metrics is None:
            lines.append(f"{method:<14}{'n/a':>7}")
            continue
        lines.append(
            f"{method:<14}{metrics['top_k'].get('1', 0):>7}"
            f"{metrics['top_k'].get('3', 0):>7}"
            f"{metrics['top_k'].get('5', 0):>7}"
            f"{_fixed(metrics['mar'], 2):>8}{_fixed(metrics['mfr'], 2):>8}")
    return "\n".join(lines) + "\n"


def run_evaluate(config: PipelineConfig, targets: Sequence[TargetSpec], *,
                 manifest_dir: str | Path | None = None,
                 matrices_dir: str | Path | None = None,
                 out_dir: str | Path | None = None,
                 stages: Sequence[str] = ALL_STAGES) -> EvaluateOutcome:
    """Replay persisted generation artifacts through the analysis stages.

    Stages always run in the fixed order validity -> execution -> metrics
    -> tcp -> mbfl, restricted to the requested subset (plus whatever the
    requested stages depend on).  Outputs are written deterministically:
    re-running on the same inputs rewrites identical bytes.
    """
    for stage in stages:
        if stage not in ALL_STAGES:
            raise PipelineError(f"unknown stage {stage!r}")
    wanted = set(stages)
    if {"metrics", "tcp", "mbfl"} & wanted:
        wanted.add("execution")
    if "execution" in wanted:
        wanted.add("validity")
    manifest_dir = Path(manifest_dir or config.output_dir)
    matrices_dir = Path(matrices_dir) if matrices_dir else manifest_dir / "matrices"
    out_dir = Path(out_dir) if out_dir else manifest_dir / "report"
    out_dir.mkdir(parents=True, exist_ok=True)

    targets = pick_targets(targets, config)
    bugs = _load_bug_artifacts(targets, manifest_dir)
    warnings: list[str] = []
    sections: dict = {"mode": config.mode, "variant": config.variant_label()}

    if "validity" in wanted:
        for bug in bugs.values():
            _run_validity(config, bug)
        sections["validity"] = _validity_section(config, bugs)
        _write_json(out_dir / "validity.json", sections["validity"])
        (out_dir / "validity.txt").write_text(
            _validity_text(sections["validity"]), encoding="utf-8")

    if "execution" in wanted:
        for bug in bugs.values():
            _run_execution(config, bug, matrices_dir)
        if {"metrics", "tcp", "mbfl"} & wanted:
            for bug in bugs.values():
                _resolve_revealing(config, bug)

    if "metrics" in wanted:
        sections["metrics"] = _metrics_section(bugs)
        _write_json(out_dir / "effectiveness.json", sections["metrics"])
        (out_dir / "effectiveness.txt").write_text(
            _metrics_text(sections["metrics"]), encoding="utf-8")

    if "tcp" in wanted:
        sections["tcp"] = _tcp_section(config, bugs, warnings)
        _write_json(out_dir / "tcp.json", sections["tcp"])
        (out_dir / "tcp.txt").write_text(_tcp_text(sections["tcp"]),
                                         encoding="utf-8")

    if "mbfl" in wanted:
        if config.mode == "buggy":
            sections["mbfl"] = _mbfl_section(config, bugs, warnings)
            _write_json(out_dir / "mbfl.json", sections["mbfl"])
            (out_dir / "mbfl.txt").write_text(_mbfl_text(sections["mbfl"]),
                                              encoding="utf-8")
        else:
            warnings.append("mbfl: skipped (requires mode=buggy artifacts)")

    sections["warnings"] = sorted(set(warnings))
    _write_json(out_dir / "report.json", sections)
    return EvaluateOutcome(sections=sections, out_dir=out_dir, warnings=warnings)
