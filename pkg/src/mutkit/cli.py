"""Command-line interface: one subcommand per pipeline capability.

Two families of subcommands share a JSON config (--config, overridable
by flags).  The artifact pipeline runs end to end:

    mutkit ingest --corpus pairs.jsonl
    mutkit rag build --config run.json
    mutkit generate --config run.json --targets targets.jsonl
    mutkit report --config run.json --targets targets.jsonl

The analysis commands (metrics, tcp, mbfl) also work standalone on
explicit matrix and outcome files, with no generation artifacts needed.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .chunker import ChunkerError, chunk_method, chunks_as_dicts, parse_method
from .corpus import CorpusError, ingest_corpus
from .embedder import (
    EmbeddingError,
    IndexFormatError,
    LexicalEmbedder,
    VectorIndex,
    build_index,
    describe_index,
    dumps_neighbors,
)
from .execution import MatrixError, RunnerError, load_matrix, load_outcomes
from .llm import BackendError
from .mbfl import MbflError, fl_metrics, localize
from .metrics import BugContext, MetricsError, coupled_mutants, effectiveness_report
from .pipeline import (
    ALL_STAGES,
    PipelineConfig,
    PipelineError,
    load_config,
    load_targets,
    mutant_outcomes_from_matrix,
    probe_embedder,
    run_evaluate,
    run_generate,
)
from .promptgen import Mutant, PromptError, read_manifest
from .sft import SftContext, SftError, export, write_instances
from .tcp import TcpError, apfd, grd, grk, hyb
from .validity import ValidityError

logger = logging.getLogger(__name__)

CLI_ERRORS = (PipelineError, CorpusError, ChunkerError, EmbeddingError,
              IndexFormatError, BackendError, PromptError, ValidityError,
              RunnerError, MatrixError, MetricsError, TcpError, MbflError,
              SftError, OSError, json.JSONDecodeError)

STAGE_SETS = {
    "validate": ("validity",),
    "execute": ("validity", "execution"),
    "report": ALL_STAGES,
}


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    overrides = {
        "corpus": getattr(args, "corpus", None),
        "index": getattr(args, "index", None),
        "output_dir": getattr(args, "output_dir", None),
        "retrieval_n": getattr(args, "retrieval_n", None),
        "metric": getattr(args, "metric", None),
        "key_side": getattr(args, "key_side", None),
        "dimension": getattr(args, "dimension", None),
        "mode": getattr(args, "mode", None),
        "compile_command": getattr(args, "compile_command", None),
        "test_command": getattr(args, "test_command", None),
        "workers": getattr(args, "workers", None),
        "seed": getattr(args, "seed", None),
        "sample_targets": getattr(args, "sample_targets", None),
        "hyb_weight": getattr(args, "hyb_weight", None),
    }
    if getattr(args, "no_retrieval", False):
        overrides["retrieval"] = False
    if getattr(args, "no_chunking", False):
        overrides["chunking"] = False
    if args.config:
        return load_config(args.config, overrides)
    merged = {k: v for k, v in overrides.items() if v is not None}
    return PipelineConfig(**merged)


def _emit(payload) -> None:
    print(json.dumps(payload, sort_keys=True, indent=2))


def _read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _maybe_write(payload, out: str | None) -> None:
    if out:
        Path(out).write_text(
            json.dumps(payload, sort_keys=True, indent=2) + "\n",
            encoding="utf-8")


def cmd_ingest(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if not config.corpus:
        raise PipelineError("ingest needs --corpus or a config with one")
    corpus = ingest_corpus(config.corpus)
    reasons: dict[str, int] = {}
    for record in corpus.skipped:
        reasons[record.reason] = reasons.get(record.reason, 0) + 1
    _emit({
        "pairs": len(corpus.pairs),
        "skipped": len(corpus.skipped),
        "skip_reasons": dict(sorted(reasons.items())),
        "projects": sorted({p.project for p in corpus.pairs}),
    })
    return 0


def cmd_rag_build(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if not config.corpus or not config.index:
        raise PipelineError("rag build needs corpus and index paths")
    corpus = ingest_corpus(config.corpus)
    embedder = LexicalEmbedder(dimension=config.dimension)
    index = build_index(corpus, backend=embedder, metric=config.metric,
                        key_side=config.key_side)
    index.save(config.index)
    _emit(describe_index(index))
    return 0


def cmd_rag_query(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    if not config.index:
        raise PipelineError("rag query needs an index path")
    index = VectorIndex.load(config.index)
    embedder = probe_embedder(index)
    if args.code is not None:
        code = args.code
    else:
        code = Path(args.code_file).read_text(encoding="utf-8")
    n = args.n if args.n is not None else config.retrieval_n
    neighbors = index.query(embedder.embed(code), n=min(n, len(index)))
    print(dumps_neighbors(neighbors))
    return 0


def cmd_chunk(args: argparse.Namespace) -> int:
    source = Path(args.source).read_text(encoding="utf-8")
    method = parse_method(source, grammar=args.grammar)
    chunks = chunk_method(method)
    _emit({"lines": len(method.lines), "chunks": chunks_as_dicts(chunks)})
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    targets = load_targets(args.targets)
    outcome = run_generate(config, targets)
    _emit(outcome.summary["totals"])
    return 0 if outcome.succeeded > 0 else 1


def _evaluate_command(name: str):
    def handler(args: argparse.Namespace) -> int:
        config = _config_from_args(args)
        targets = load_targets(args.targets)
        outcome = run_evaluate(
            config, targets,
            manifest_dir=getattr(args, "artifacts", None),
            out_dir=getattr(args, "report_dir", None),
            stages=STAGE_SETS[name])
        _emit({"out_dir": str(outcome.out_dir),
               "sections": sorted(set(outcome.sections) -
                                  {"mode", "variant", "warnings"}),
               "warnings": sorted(set(outcome.warnings))})
        return 0
    return handler


def _load_matrix_dir(matrices: Path) -> dict[str, "object"]:
    paths = sorted(matrices.glob("*.matrix"))
    if not paths:
        raise PipelineError(f"no .matrix files under {matrices}")
    return {path.stem: load_matrix(str(path), bug_id=path.stem)
            for path in paths}


def cmd_metrics(args: argparse.Namespace) -> int:
    """Effectiveness report from matrix files plus a revealing-test list."""
    by_bug = _load_matrix_dir(Path(args.matrices))
    revealing = _read_json(args.revealing)
    contexts = []
    for bug_id in sorted(by_bug):
        if bug_id not in revealing:
            raise PipelineError(
                f"bug {bug_id} missing from revealing-test file {args.revealing}")
        contexts.append(BugContext(
            bug_id=bug_id, matrix=by_bug[bug_id],
            bug_revealing_tests=frozenset(revealing[bug_id])))
    report = effectiveness_report(contexts)
    payload = {
        "mutation_score": {"micro": report.mutation_score_micro,
                           "macro": report.mutation_score_macro},
        "real_bug_detection": {"macro": report.rbd_macro,
                               "micro": report.rbd_micro},
        "coupling_rate": {"micro": report.coupling_rate_micro,
                          "macro": report.coupling_rate_macro},
        "bug_ochiai": dict(sorted(report.bug_ochiai.items())),
        "aoc": report.aoc,
        "high_similarity_count": report.high_similarity_count,
        "per_bug_mutation_score": dict(
            sorted(report.per_bug_mutation_score.items())),
        "excluded_bugs": sorted(report.excluded_bugs),
        "coupled_mutants": {ctx.bug_id: sorted(coupled_mutants(ctx))
                            for ctx in contexts if ctx.matrix.mutant_ids},
    }
    _maybe_write(payload, args.out)
    _emit(payload)
    return 0


def cmd_tcp(args: argparse.Namespace) -> int:
    """Prioritize one matrix's tests and score the order against detection."""
    matrix = load_matrix(args.matrix)
    detection = {bug: set(tests)
                 for bug, tests in _read_json(args.detection).items()}
    payload: dict = {"strategies": {}}
    for name, suite in (("GRK", grk(matrix)), ("GRD", grd(matrix)),
                        (f"HYB({args.weight:g})", hyb(matrix, args.weight))):
        payload["strategies"][name] = {
            "order": list(suite.order),
            "step_kills": list(suite.step_kills),
            "step_pairs": list(suite.step_pairs),
            "apfd": apfd(suite.order, detection),
        }
    _maybe_write(payload, args.out)
    _emit(payload)
    return 0


def cmd_mbfl(args: argparse.Namespace) -> int:
    """Localize from buggy-mode matrix/outcome files plus faulty lines.

    --matrices holds <bug>.matrix and <bug>.original.txt per bug;
    --statements maps bug -> {mutant-id: line}; --faulty maps
    bug -> [faulty lines]; --statement-space (optional) maps
    bug -> [candidate lines] for zero-padding unmutated statements.
    """
    matrices = Path(args.matrices)
    by_bug = _load_matrix_dir(matrices)
    statements = _read_json(args.statements)
    faulty = _read_json(args.faulty)
    space = _read_json(args.statement_space) if args.statement_space else {}
    reports: dict[str, list] = {"muse": [], "metallaxis": []}
    per_bug: dict[str, dict] = {}
    for bug_id in sorted(by_bug):
        matrix = by_bug[bug_id]
        outcomes_path = matrices / f"{bug_id}.original.txt"
        original = load_outcomes(str(outcomes_path), bug_id)
        if bug_id not in statements:
            raise PipelineError(f"bug {bug_id} missing from {args.statements}")
        statement_of = {mid: int(line)
                        for mid, line in statements[bug_id].items()}
        mutant_outcomes = mutant_outcomes_from_matrix(matrix, original)
        entry = {}
        for method in ("muse", "metallaxis"):
            report = localize(
                bug_id, original, mutant_outcomes, statement_of, method,
                statements=[int(v) for v in space.get(bug_id, ())],
                faulty_statements=[int(v) for v in faulty.get(bug_id, ())])
            reports[method].append(report)
            entry[method] = {
                "scores": {str(s): v for s, v in sorted(report.scores.items())},
                "expected_ranks": {str(s): v for s, v
                                   in sorted(report.expected_ranks.items())},
            }
        per_bug[bug_id] = entry
    payload: dict = {"per_bug": per_bug, "metrics": {}}
    for method, method_reports in reports.items():
        if any(r.faulty_statements for r in method_reports):
            metrics = fl_metrics(method_reports)
            payload["metrics"][method] = {
                "top_k": {str(k): v for k, v in sorted(metrics.top_k.items())},
                "mar": metrics.mar,
                "mfr": metrics.mfr,
                "first_rank_mean": metrics.first_rank_mean,
                "evaluated_bugs": metrics.evaluated_bugs,
                "excluded_bugs": list(metrics.excluded_bugs),
            }
        else:
            payload["metrics"][method] = None
    _maybe_write(payload, args.out)
    _emit(payload)
    return 0


def cmd_export_sft(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    artifacts = Path(args.artifacts or config.output_dir)
    manifest = read_manifest(str(artifacts / "manifest.jsonl"))
    summary = _read_json(artifacts / "summary.json")
    projects = {bug_id: entry.get("project", "")
                for bug_id, entry in summary.get("targets", {}).items()}
    contexts: dict[tuple[str, str], SftContext] = {}
    for line in (artifacts / "prompts.jsonl").read_text(
            encoding="utf-8").splitlines():
        row = json.loads(line)
        if row.get("error"):
            continue
        contexts[(row["bug_id"], row["chunk_id"])] = SftContext(
            bug_id=row["bug_id"], chunk_id=row["chunk_id"],
            prompt=row["prompt"], project=projects.get(row["bug_id"], ""))
    mutants = []
    for row in manifest:
        if row["rejection"] is not None:
            continue
        source_path = artifacts / "mutants" / f"{row['mutant_id']}.java"
        mutants.append(Mutant(
            id=row["mutant_id"], bug_id=row["bug_id"],
            source=source_path.read_text(encoding="utf-8"),
            target_line=row["target_line"],
            original_line_text=row["precode"],
            mutated_line_text=row["aftercode"],
            chunk_id=row["chunk_id"]))
    report_dir = Path(args.report_dir) if args.report_dir \
        else artifacts / "report"
    effectiveness = _read_json(report_dir / "effectiveness.json")
    coupled_ids = {mid for ids in effectiveness["coupled_mutants"].values()
                   for mid in ids}
    result = export(mutants, coupled_ids, contexts, grouped=args.grouped,
                    exclude_projects=tuple(args.exclude_projects))
    count = write_instances(result.instances, args.out)
    _emit({
        "instances": count,
        "skipped": [[s.mutant_id, s.reason] for s in result.skipped],
        "excluded_uncoupled": result.excluded_uncoupled,
        "excluded_projects": result.excluded_projects,
        "out": str(args.out),
    })
    return 0


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--corpus", help="bug-fix corpus JSONL path")
    parser.add_argument("--index", help="vector index path")
    parser.add_argument("--output-dir", dest="output_dir",
                        help="artifact directory (default: out)")
    parser.add_argument("--metric", choices=("euclidean", "cosine", "dot"))
    parser.add_argument("--key-side", dest="key_side",
                        choices=("post_fix", "pre_fix"))
    parser.add_argument("--dimension", type=int,
                        help="embedding dimension for lexical indexes")
    parser.add_argument("--mode", choices=("fixed", "buggy"),
                        help="whether targets are fixed or buggy versions")
    parser.add_argument("--retrieval-n", dest="retrieval_n", type=int,
                        help="few-shot examples per prompt (default 6)")
    parser.add_argument("--no-retrieval", action="store_true",
                        help="disable retrieval (ablation)")
    parser.add_argument("--no-chunking", action="store_true",
                        help="disable chunking (ablation)")
    parser.add_argument("--compile-command", dest="compile_command",
                        help="compile check template with {source}")
    parser.add_argument("--test-command", dest="test_command",
                        help="test runner template with {source}")
    parser.add_argument("--workers", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--sample-targets", dest="sample_targets", type=int)
    parser.add_argument("--hyb-weight", dest="hyb_weight", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mutkit",
        description="LLM-assisted mutation generation and analysis toolkit")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="log at INFO level")
    subparsers = parser.add_subparsers(dest="command", required=True)

    ingest = subparsers.add_parser(
        "ingest", help="validate a corpus file and summarize it")
    _add_config_flags(ingest)
    ingest.set_defaults(handler=cmd_ingest)

    rag = subparsers.add_parser("rag", help="retrieval index operations")
    rag_sub = rag.add_subparsers(dest="rag_command", required=True)
    rag_build = rag_sub.add_parser("build", help="embed a corpus into an index")
    _add_config_flags(rag_build)
    rag_build.set_defaults(handler=cmd_rag_build)
    rag_query = rag_sub.add_parser("query", help="query an index")
    _add_config_flags(rag_query)
    code_source = rag_query.add_mutually_exclusive_group(required=True)
    code_source.add_argument("--code", help="code snippet to embed")
    code_source.add_argument("--code-file", dest="code_file",
                             help="file holding the snippet")
    rag_query.add_argument("-n", type=int, help="neighbors to return")
    rag_query.set_defaults(handler=cmd_rag_query)

    chunk = subparsers.add_parser("chunk", help="chunk one method source file")
    chunk.add_argument("source", help="file holding the method text")
    chunk.add_argument("--grammar", default="java",
                       help="source grammar id (default: java)")
    chunk.set_defaults(handler=cmd_chunk)

    generate = subparsers.add_parser(
        "generate", help="generate mutants for every target")
    _add_config_flags(generate)
    generate.add_argument("--targets", required=True, help="targets JSONL file")
    generate.set_defaults(handler=cmd_generate)

    for name, help_text in (
            ("validate", "validity rates over generation artifacts"),
            ("execute", "build or load kill matrices"),
            ("report", "full evaluation report")):
        sub = subparsers.add_parser(name, help=help_text)
        _add_config_flags(sub)
        sub.add_argument("--targets", required=True)
        sub.add_argument("--artifacts",
                         help="generation artifact dir (default: output_dir)")
        sub.add_argument("--report-dir", dest="report_dir",
                         help="report output dir (default: <artifacts>/report)")
        sub.set_defaults(handler=_evaluate_command(name))

    metrics = subparsers.add_parser(
        "metrics", help="effectiveness report from matrix files")
    metrics.add_argument("--matrices", required=True,
                         help="directory of <bug>.matrix files")
    metrics.add_argument("--revealing", required=True,
                         help="JSON file mapping bug id to revealing tests")
    metrics.add_argument("--out", help="also write the JSON report here")
    metrics.set_defaults(handler=cmd_metrics)

    tcp = subparsers.add_parser(
        "tcp", help="prioritize one matrix's tests and score with APFD")
    tcp.add_argument("--matrix", required=True, help="matrix file")
    tcp.add_argument("--detection", required=True,
                     help="JSON file mapping bug id to detecting tests")
    tcp.add_argument("--weight", type=float, default=0.5,
                     help="HYB kill weight in [0, 1] (default 0.5)")
    tcp.add_argument("--out", help="also write the JSON report here")
    tcp.set_defaults(handler=cmd_tcp)

    mbfl = subparsers.add_parser(
        "mbfl", help="fault localization from matrix and outcome files")
    mbfl.add_argument("--matrices", required=True,
                      help="directory of <bug>.matrix + <bug>.original.txt")
    mbfl.add_argument("--statements", required=True,
                      help="JSON file: bug id -> {mutant id: line}")
    mbfl.add_argument("--faulty", required=True,
                      help="JSON file: bug id -> [faulty lines]")
    mbfl.add_argument("--statement-space", dest="statement_space",
                      help="JSON file: bug id -> [all candidate lines]")
    mbfl.add_argument("--out", help="also write the JSON report here")
    mbfl.set_defaults(handler=cmd_mbfl)

    export_sft = subparsers.add_parser(
        "export-sft", help="export coupled mutants as training instances")
    _add_config_flags(export_sft)
    export_sft.add_argument("--artifacts",
                            help="generation artifact dir (default: output_dir)")
    export_sft.add_argument("--report-dir", dest="report_dir",
                            help="report dir holding effectiveness.json")
    export_sft.add_argument("--out", required=True, help="output JSONL path")
    export_sft.add_argument("--grouped", action="store_true",
                            help="one instance per chunk instead of per mutant")
    export_sft.add_argument("--exclude-projects", nargs="*", default=(),
                            help="hold out these projects")
    export_sft.set_defaults(handler=cmd_export_sft)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.handler(args)
    except CLI_ERRORS as error:
        print(f"error: {error}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
