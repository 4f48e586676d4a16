"""Command line front end for the labeling pipeline.

One binary with subcommands covering the whole workflow: ingest raw logs,
run the heuristic or agent labeler, re-flag by disagreement, score against
gold ratings, train outcome forecasters, generate synthetic corpora, export
review CSVs, and serve the HTTP API. Exit codes are 0 on success, 1 on
usage errors, 2 on data errors. Diagnostics go to standard error; reports
and ids go to standard output or --out.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from forager.agents import (
    AgentConfig,
    HttpBackend,
    HttpBackendConfig,
    MockBackend,
    MockPolicy,
    annotate_corpus,
    flag_top_fraction,
    heuristic_fallback_annotations,
)
from forager.errors import (
    ForagerError,
    MalformedInput,
    PartialFailure,
    UnknownDataset,
)
from forager.forecasting import (
    FeatureConfig,
    SynthParams,
    TaskSpec,
    generate_synthetic,
    render_report_table,
    report_to_json,
    run_experiment,
)
from forager.heuristics import LabelerConfig
from forager.ingest import ColumnMapping, SegmentationPolicy
from forager.metrics import accuracy_vs_gold
from forager.model import CognitiveAnnotation, CognitiveLabel, LABEL_ORDER
from forager.store import Workspace

DEFAULT_WORKSPACE = "forager-data"

_SEGMENT_MODES = {"by-id": "by_session_id", "gap": "by_inactivity"}


class _Parser(argparse.ArgumentParser):
    """argparse that treats usage errors as exit code 1 and shows help."""

    def error(self, message: str) -> None:
        print(f"error: {message}", file=sys.stderr)
        self.print_help(sys.stderr)
        raise SystemExit(1)


def _diag(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(text: str, out: Optional[str]) -> None:
    """Machine output: --out file when given, standard output otherwise."""
    if out:
        Path(out).write_text(text, encoding="utf-8")
        _diag(f"wrote {len(text)} characters to {out}")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _load_json_file(path: str, what: str) -> dict:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedInput(f"{what} {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise MalformedInput(f"{what} {path} must hold a JSON object")
    return doc


def _resolve_dataset(ws: Workspace, dataset: Optional[str]) -> str:
    """Explicit --dataset, or the only dataset in the workspace."""
    if dataset:
        ws.progress(dataset)
        return dataset
    ids = [d["dataset_id"] for d in ws.list_datasets()]
    if not ids:
        raise UnknownDataset("unknown dataset: the workspace is empty")
    if len(ids) > 1:
        raise UnknownDataset(
            "ambiguous dataset: pass --dataset, workspace has "
            + ", ".join(ids))
    return ids[0]


# ------------------------------------------------------------- handlers


def _cmd_ingest(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    mapping = ColumnMapping.from_json(
        Path(args.mapping).read_text(encoding="utf-8"))
    policy = SegmentationPolicy(
        mode=_SEGMENT_MODES[args.segment],
        gap_ms=int(args.gap_minutes * 60_000))
    data = Path(args.input).read_bytes()
    name = args.name or Path(args.input).name
    dataset_id, result = ws.ingest_dataset(
        data, args.format, mapping, policy, name=name)
    progress = ws.progress(dataset_id)
    _diag(f"ingested {progress['n_sessions']} sessions"
          f" ({progress['n_events']} events) as {name!r},"
          f" {result.rejected_total} rows rejected")
    for reject in result.rejects[:20]:
        _diag(f"  row {reject.row}: {reject.reason}")
    if result.rejected_total > 20:
        _diag(f"  ... and {result.rejected_total - 20} more")
    print(dataset_id)
    return 0


def _cmd_label(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    dataset_id = _resolve_dataset(ws, args.dataset)
    config = _load_json_file(args.config, "config") if args.config else {}
    if args.engine == "heuristic":
        cfg = LabelerConfig.from_record(config) if config else None
        count = ws.label_with_heuristic(dataset_id, cfg)
        print(f"labeled {count} events in {dataset_id}")
        return 0

    if args.backend == "mock":
        backend = MockBackend(policy=MockPolicy.from_record(
            config.get("policy", {})))
    else:
        http = config.get("http", {})
        if not http.get("endpoint"):
            raise MalformedInput(
                "http backend requires an 'http': {'endpoint': ...} config")
        backend = HttpBackend(HttpBackendConfig(
            endpoint=http["endpoint"],
            analyst_model=http.get("analyst_model", "claude-3-5-sonnet"),
            critic_model=http.get("critic_model", "gpt-4o"),
            judge_model=http.get("judge_model", "gpt-4o"),
        ))
    cfg = AgentConfig(flag_rate=args.flag_rate, max_workers=args.max_concurrency)
    sessions = ws.sessions_for(dataset_id)
    try:
        result = annotate_corpus(sessions, backend, cfg=cfg)
    except PartialFailure as exc:
        # Keep what completed so a re-run can resume from the same state.
        ws.add_annotations(dataset_id, exc.annotations, exc.transcripts)
        _diag(f"backend failed mid-run: {exc}")
        _diag(f"kept {len(exc.annotations)} annotations from completed sessions")
        return 2
    annotations = list(result.annotations)
    annotations.extend(heuristic_fallback_annotations(sessions, result.escalated))
    ws.add_annotations(dataset_id, annotations, result.transcripts)
    escalated_note = (
        f", {len(result.escalated)} escalated to heuristic fallback"
        if result.escalated else "")
    print(f"labeled {len(annotations)} events in {dataset_id}{escalated_note}")
    return 0


def _cmd_flag(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    dataset_id = _resolve_dataset(ws, args.dataset)
    transcripts = ws.transcripts_for(dataset_id)
    selected = flag_top_fraction(transcripts, rate=args.rate)
    updates = []
    for ann in ws.annotations_for(dataset_id):
        if ann.source != "agents":
            continue
        wanted = (ann.session_id, ann.event_index) in selected
        if ann.flagged != wanted:
            updates.append(replace(ann, flagged=wanted))
    ws.add_annotations(dataset_id, updates)
    _diag(f"rate {args.rate} over {len(transcripts)} transcripts,"
          f" {len(updates)} annotations updated")
    print(f"flagged {len(selected)} events")
    return 0


def _read_gold_csv(path: str) -> list[tuple[str, int, str, CognitiveLabel]]:
    """Gold ratings CSV: session_id,event_index,label[,annotator_id]."""
    text = Path(path).read_text(encoding="utf-8")
    reader = csv.reader(io.StringIO(text, newline=""))
    try:
        header = [c.strip() for c in next(reader)]
    except StopIteration:
        raise MalformedInput(f"gold file {path} is empty") from None
    required = ("session_id", "event_index", "label")
    missing = [c for c in required if c not in header]
    if missing:
        raise MalformedInput(f"gold file is missing columns: {missing}")
    col = {name: header.index(name) for name in header}
    rows = []
    for row_no, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            rows.append((
                row[col["session_id"]],
                int(row[col["event_index"]]),
                row[col["annotator_id"]] if "annotator_id" in col else "gold",
                CognitiveLabel.parse(row[col["label"]]),
            ))
        except (ValueError, IndexError) as exc:
            raise MalformedInput(f"gold file row {row_no}: {exc}") from None
    if not rows:
        raise MalformedInput(f"gold file {path} has no ratings")
    return rows


def _cmd_agree(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    dataset_id = _resolve_dataset(ws, args.dataset)
    gold = _read_gold_csv(args.gold)
    ws.add_gold(dataset_id, gold)
    stats = ws.stats(dataset_id)

    predictions: list[CognitiveAnnotation] = []
    for session in ws.sessions_for(dataset_id):
        for event in session.events:
            eff = ws.effective_for(dataset_id, session.id, event.index)
            if eff is None:
                continue
            predictions.append(CognitiveAnnotation(
                session_id=session.id,
                event_index=event.index,
                label=eff.label,
                justification=eff.justification,
                source=eff.source,
                confidence=eff.confidence,
            ))
    scored = accuracy_vs_gold(
        predictions, [(sid, idx, label) for sid, idx, _, label in gold])
    report = {
        "dataset": dataset_id,
        "n_gold": len(gold),
        "alpha": stats["alpha_vs_gold"],
        "accuracy": scored["accuracy"],
        "labels": [label.serialize() for label in LABEL_ORDER],
        "confusion": scored["confusion"],
    }
    alpha = report["alpha"]
    alpha_text = "undefined" if alpha is None else f"{alpha:.4f}"
    _diag(f"alpha {alpha_text}, accuracy {report['accuracy']:.4f}"
          f" over {len(gold)} gold ratings")
    _emit(json.dumps(report, indent=2, sort_keys=True), args.out)
    return 0


_FEATURE_SETS = {
    "text": (FeatureConfig(use_text=True, use_labels=False),),
    "labels": (FeatureConfig(use_text=False, use_labels=True),),
    "both": (FeatureConfig(use_text=True, use_labels=True),),
}
_FEATURE_SETS["all"] = _FEATURE_SETS["text"] + _FEATURE_SETS["labels"] + _FEATURE_SETS["both"]


def _cmd_forecast(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    dataset_id = _resolve_dataset(ws, args.dataset)
    corpus = ws.annotated_corpus(dataset_id)
    spec = TaskSpec(task=args.task, prefix_fraction=args.prefix)
    report = run_experiment(
        corpus, spec, _FEATURE_SETS[args.features],
        seed=args.seed, train_ratio=args.train_ratio)
    _diag(render_report_table(report))
    _emit(report_to_json(report), args.out)
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    params = SynthParams()
    corpus = generate_synthetic(args.sessions, seed=args.seed, params=params)
    name = f"synth-{args.sessions}x{args.seed}"
    dataset_id = ws.register_corpus(name, corpus)
    n_events = sum(len(s.events) for s, _ in corpus)
    _diag(f"generated {len(corpus)} sessions ({n_events} events) as {name!r}")
    print(dataset_id)
    return 0


def _cmd_export(args: argparse.Namespace) -> int:
    ws = Workspace(args.workspace)
    dataset_id = _resolve_dataset(ws, args.dataset)
    payload = ws.export_csv(dataset_id, extended=args.extended, force=args.force)
    if args.out:
        Path(args.out).write_bytes(payload)
        _diag(f"wrote {len(payload)} bytes to {args.out}")
    else:
        sys.stdout.write(payload.decode("utf-8"))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from forager.service import serve_api

    _diag(f"serving workspace {args.workspace} on http://{args.host}:{args.port}")
    serve_api(args.workspace, port=args.port, host=args.host)
    return 0


# -------------------------------------------------------------- parser


def _add_workspace(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--workspace", default=DEFAULT_WORKSPACE,
        help=f"workspace directory (default: {DEFAULT_WORKSPACE})")


def _add_dataset(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--dataset", default=None,
        help="dataset id (defaults to the only dataset in the workspace)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="forager",
                     description="Cognitive labeling pipeline for search logs.")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("ingest", help="parse and segment a raw search log")
    p.add_argument("--input", required=True, help="log file (CSV or JSON)")
    p.add_argument("--format", choices=("csv", "json"), required=True)
    p.add_argument("--mapping", required=True,
                   help="JSON file mapping log columns to event fields")
    p.add_argument("--segment", choices=tuple(_SEGMENT_MODES), default="gap",
                   help="by-id: use the mapped session column; gap: split on inactivity")
    p.add_argument("--gap-minutes", type=float, default=30.0,
                   help="inactivity gap for --segment gap (default: 30)")
    p.add_argument("--name", default=None, help="dataset display name")
    _add_workspace(p)
    p.set_defaults(handler=_cmd_ingest)

    p = sub.add_parser("label", help="run a labeling engine over a dataset")
    p.add_argument("--engine", choices=("heuristic", "agents"),
                   default="heuristic")
    p.add_argument("--backend", choices=("mock", "http"), default="mock",
                   help="agent engine backend (default: mock)")
    p.add_argument("--config", default=None,
                   help="JSON config: labeler rules, mock policy, or http endpoint")
    p.add_argument("--max-concurrency", type=int, default=4,
                   help="parallel sessions for the agent engine (default: 4)")
    p.add_argument("--flag-rate", type=float, default=0.01,
                   help="fraction of events flagged for review (default: 0.01)")
    _add_dataset(p)
    _add_workspace(p)
    p.set_defaults(handler=_cmd_label)

    p = sub.add_parser("flag", help="re-flag the highest-disagreement events")
    p.add_argument("--rate", type=float, default=0.01,
                   help="fraction of transcripts to flag (default: 0.01)")
    _add_dataset(p)
    _add_workspace(p)
    p.set_defaults(handler=_cmd_flag)

    p = sub.add_parser("agree",
                       help="score effective labels against gold ratings")
    p.add_argument("--gold", required=True,
                   help="CSV of session_id,event_index,label[,annotator_id]")
    p.add_argument("--out", default=None, help="write the JSON report here")
    _add_dataset(p)
    _add_workspace(p)
    p.set_defaults(handler=_cmd_agree)

    p = sub.add_parser("forecast",
                       help="train and evaluate outcome forecasters")
    p.add_argument("--task", choices=("outcome", "recovery"), default="outcome")
    p.add_argument("--features", choices=("text", "labels", "both", "all"),
                   default="all")
    p.add_argument("--prefix", type=float, default=None,
                   help="prefix fraction (default: 0.5 outcome, 0.4 recovery)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-ratio", type=float, default=0.8)
    p.add_argument("--out", default=None, help="write the JSON report here")
    _add_dataset(p)
    _add_workspace(p)
    p.set_defaults(handler=_cmd_forecast)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--sessions", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    _add_workspace(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("export", help="export the review CSV")
    p.add_argument("--out", default=None, help="write the CSV here")
    p.add_argument("--extended", action="store_true",
                   help="add source, confidence, flagged columns")
    p.add_argument("--force", action="store_true",
                   help="export even if some events are unlabeled")
    _add_dataset(p)
    _add_workspace(p)
    p.set_defaults(handler=_cmd_export)

    p = sub.add_parser("serve", help="serve the HTTP API and review UI")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    _add_workspace(p)
    p.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help exits 0; _Parser.error exits 1
        code = exc.code
        return code if isinstance(code, int) else 1
    try:
        return args.handler(args)
    except ForagerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
