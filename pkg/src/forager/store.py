"""Append-only workspace persistence and the CSV export format.

The workspace is a directory of newline-delimited JSON record files, one
per record type, loaded fully into memory on open. Appends are atomic at
record granularity: a torn final line (a crash mid-append) is quarantined
when the workspace is opened; corruption anywhere else is an error, never
silently skipped. Within each keyed store the last record wins, so updates
are plain appends.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from forager.errors import (
    DatasetBusy,
    MalformedInput,
    StoreCorrupt,
    UndefinedMetric,
    UnknownDataset,
    UnlabeledEvents,
)
from forager.agents.pipeline import AgentTranscript
from forager.heuristics import LabelerConfig, label_session
from forager.ingest import ColumnMapping, ParseResult, SegmentationPolicy, parse_log, segment_sessions
from forager.metrics import ReliabilityData, krippendorff_alpha_nominal
from forager.model import (
    ActionType,
    CognitiveAnnotation,
    CognitiveLabel,
    Event,
    Session,
    effective_annotation,
)

EXPORT_HEADER = ("session_id", "event_timestamp", "action_type", "content_id",
                 "cognitive_label", "judge_justification")
EXTENDED_COLUMNS = ("source", "confidence", "flagged")

VERDICTS = ("accepted", "corrected")

_STORE_FILES = ("manifest", "sessions", "annotations", "transcripts", "decisions", "gold")


@dataclass(frozen=True)
class HumanDecision:
    """A reviewer's ruling on one event's label."""

    session_id: str
    event_index: int
    label: CognitiveLabel
    verdict: str
    decided_at: int
    note: str = ""

    def __post_init__(self) -> None:
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict: {self.verdict!r}")

    def to_record(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "event_index": self.event_index,
            "label": self.label.serialize(),
            "verdict": self.verdict,
            "decided_at": self.decided_at,
            "note": self.note,
        }

    @classmethod
    def from_record(cls, rec: Mapping[str, Any]) -> "HumanDecision":
        return cls(
            session_id=rec["session_id"],
            event_index=int(rec["event_index"]),
            label=CognitiveLabel.parse(rec["label"]),
            verdict=rec["verdict"],
            decided_at=int(rec["decided_at"]),
            note=rec.get("note", ""),
        )


@dataclass(frozen=True)
class EffectiveLabel:
    """The winning annotation view for one event."""

    label: CognitiveLabel
    source: str
    confidence: float
    flagged: bool
    justification: str


def _now_ms() -> int:
    return int(time.time() * 1000)


def _dataset_hash(*parts: bytes) -> str:
    digest = hashlib.sha256()
    for part in parts:
        digest.update(part)
        digest.update(b"\x00")
    return "ds-" + digest.hexdigest()[:12]


class Workspace:
    """On-disk dataset registry plus all annotation state.

    Writes are funneled through one lock per dataset (a labeling job's
    commit or a decision write at a time); reads take the structure mutex
    only long enough to snapshot references.
    """

    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._mutex = threading.RLock()
        self._dataset_locks: dict[str, threading.Lock] = {}
        self._busy: set[str] = set()
        self._datasets: dict[str, dict[str, Any]] = {}
        self._sessions: dict[str, dict[str, Session]] = {}
        self._annotations: dict[str, dict[tuple[str, int, str], CognitiveAnnotation]] = {}
        self._transcripts: dict[str, dict[tuple[str, int], AgentTranscript]] = {}
        self._decisions: dict[str, dict[tuple[str, int], HumanDecision]] = {}
        self._gold: dict[str, dict[tuple[str, int, str], CognitiveLabel]] = {}
        self._load()

    # ------------------------------------------------------------- files

    def _path(self, store: str) -> Path:
        return self.root / f"{store}.ndjson"

    def _quarantine_torn_line(self, store: str) -> None:
        path = self._path(store)
        if not path.exists():
            return
        data = path.read_bytes()
        if not data:
            return
        body, _, tail = data.rpartition(b"\n")
        if not tail:
            return
        try:
            json.loads(tail.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            quarantine = self.root / f"{store}.quarantine"
            with quarantine.open("ab") as fh:
                fh.write(tail + b"\n")
            path.write_bytes(body + b"\n" if body else b"")

    def _read_records(self, store: str) -> list[dict[str, Any]]:
        path = self._path(store)
        if not path.exists():
            return []
        records = []
        for line_no, line in enumerate(path.read_text("utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise StoreCorrupt(
                    f"{path.name} line {line_no} is not valid JSON: {exc}") from None
        return records

    def _append(self, store: str, dataset_id: str, record: Mapping[str, Any]) -> None:
        line = json.dumps({"dataset_id": dataset_id, "record": dict(record)},
                          sort_keys=True, ensure_ascii=False)
        with self._path(store).open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")

    def _load(self) -> None:
        for store in _STORE_FILES:
            self._quarantine_torn_line(store)
        for row in self._read_records("manifest"):
            self._datasets[row["dataset_id"]] = row["record"]
        for row in self._read_records("sessions"):
            session = Session.from_record(row["record"])
            self._sessions.setdefault(row["dataset_id"], {})[session.id] = session
        for row in self._read_records("annotations"):
            ann = CognitiveAnnotation.from_record(row["record"])
            self._annotations.setdefault(row["dataset_id"], {})[
                (ann.session_id, ann.event_index, ann.source)] = ann
        for row in self._read_records("transcripts"):
            tr = AgentTranscript.from_record(row["record"])
            self._transcripts.setdefault(row["dataset_id"], {})[
                (tr.session_id, tr.event_index)] = tr
        for row in self._read_records("decisions"):
            dec = HumanDecision.from_record(row["record"])
            self._decisions.setdefault(row["dataset_id"], {})[
                (dec.session_id, dec.event_index)] = dec
        for row in self._read_records("gold"):
            rec = row["record"]
            self._gold.setdefault(row["dataset_id"], {})[
                (rec["session_id"], int(rec["event_index"]), rec["annotator_id"])
            ] = CognitiveLabel.parse(rec["label"])

    def compact(self) -> None:
        """Rewrite every store file keeping only the live (last-wins) records."""
        with self._mutex:
            plans: list[tuple[str, list[tuple[str, Mapping[str, Any]]]]] = [
                ("manifest", [(d, rec) for d, rec in self._datasets.items()]),
                ("sessions", [(d, s.to_record()) for d, group in self._sessions.items()
                              for s in group.values()]),
                ("annotations", [(d, a.to_record()) for d, group in self._annotations.items()
                                 for a in group.values()]),
                ("transcripts", [(d, t.to_record()) for d, group in self._transcripts.items()
                                 for t in group.values()]),
                ("decisions", [(d, dec.to_record()) for d, group in self._decisions.items()
                               for dec in group.values()]),
                ("gold", [(d, {"session_id": k[0], "event_index": k[1],
                               "annotator_id": k[2], "label": lab.serialize()})
                          for d, group in self._gold.items() for k, lab in group.items()]),
            ]
            for store, rows in plans:
                tmp = self._path(store).with_suffix(".tmp")
                with tmp.open("w", encoding="utf-8") as fh:
                    for dataset_id, record in rows:
                        fh.write(json.dumps(
                            {"dataset_id": dataset_id, "record": dict(record)},
                            sort_keys=True, ensure_ascii=False) + "\n")
                tmp.replace(self._path(store))

    # ------------------------------------------------------------- locks

    def _lock_for(self, dataset_id: str) -> threading.Lock:
        with self._mutex:
            if dataset_id not in self._dataset_locks:
                self._dataset_locks[dataset_id] = threading.Lock()
            return self._dataset_locks[dataset_id]

    def claim_job(self, dataset_id: str) -> None:
        """Mark a dataset as running a labeling job; second claims are rejected."""
        self._require(dataset_id)
        with self._mutex:
            if dataset_id in self._busy:
                raise DatasetBusy(f"dataset {dataset_id} already has a labeling job")
            self._busy.add(dataset_id)

    def release_job(self, dataset_id: str) -> None:
        with self._mutex:
            self._busy.discard(dataset_id)

    # ----------------------------------------------------------- ingest

    def _require(self, dataset_id: str) -> None:
        if dataset_id not in self._datasets:
            raise UnknownDataset(f"unknown dataset: {dataset_id}")

    def create_dataset(self, dataset_id: str, name: str, sessions: Sequence[Session],
                       rejected_rows: int = 0) -> str:
        with self._mutex:
            manifest = {
                "name": name,
                "created_at": _now_ms(),
                "n_sessions": len(sessions),
                "n_events": sum(len(s.events) for s in sessions),
                "rejected_rows": rejected_rows,
            }
            self._append("manifest", dataset_id, manifest)
            self._datasets[dataset_id] = manifest
            group = self._sessions.setdefault(dataset_id, {})
            # ids are content-addressed, so a re-created dataset re-registers
            # identical sessions and any prior annotations stay valid
            for session in sessions:
                self._append("sessions", dataset_id, session.to_record())
                group[session.id] = session
        return dataset_id

    def ingest_dataset(
        self,
        log_bytes: bytes,
        format: str,
        mapping: ColumnMapping,
        policy: SegmentationPolicy,
        name: str,
    ) -> tuple[str, ParseResult]:
        """Parse, segment, and register a dataset; content-addressed for idempotence."""
        result = parse_log(log_bytes, format, mapping)
        sessions = segment_sessions(list(result.records), policy)
        if not sessions:
            raise MalformedInput("log produced no usable sessions")
        sessions = sorted(sessions, key=lambda s: s.id)
        dataset_id = _dataset_hash(
            log_bytes, format.encode(), json.dumps(
                {"mapping": sorted(mapping.columns()), "mode": policy.mode,
                 "gap_ms": policy.gap_ms, "fmt": mapping.timestamp_format},
                sort_keys=True).encode(), name.encode())
        self.create_dataset(dataset_id, name, sessions, result.rejected_total)
        return dataset_id, result

    # ------------------------------------------------------------ reads

    def list_datasets(self) -> list[dict[str, Any]]:
        with self._mutex:
            out = []
            for dataset_id in sorted(self._datasets):
                out.append({"dataset_id": dataset_id, **self.progress(dataset_id)})
            return out

    def progress(self, dataset_id: str) -> dict[str, Any]:
        self._require(dataset_id)
        with self._mutex:
            manifest = self._datasets[dataset_id]
            sessions = self._sessions.get(dataset_id, {})
            n_events = sum(len(s.events) for s in sessions.values())
            labeled = flagged_open = 0
            for session in sessions.values():
                for event in session.events:
                    eff = self.effective_for(dataset_id, session.id, event.index)
                    if eff is not None:
                        labeled += 1
                        if eff.flagged:
                            flagged_open += 1
            decided = len(self._decisions.get(dataset_id, {}))
            return {
                "name": manifest["name"],
                "created_at": manifest["created_at"],
                "n_sessions": len(sessions),
                "n_events": n_events,
                "rejected_rows": manifest.get("rejected_rows", 0),
                "labeled_events": labeled,
                "flagged_open": flagged_open,
                "decided": decided,
            }

    def sessions_for(self, dataset_id: str) -> list[Session]:
        self._require(dataset_id)
        with self._mutex:
            return sorted(self._sessions.get(dataset_id, {}).values(),
                          key=lambda s: s.id)

    def get_session(self, dataset_id: str, session_id: str) -> Session:
        self._require(dataset_id)
        with self._mutex:
            group = self._sessions.get(dataset_id, {})
            if session_id not in group:
                raise UnknownDataset(
                    f"unknown session {session_id!r} in dataset {dataset_id}")
            return group[session_id]

    def annotations_for(self, dataset_id: str,
                        session_id: Optional[str] = None) -> list[CognitiveAnnotation]:
        self._require(dataset_id)
        with self._mutex:
            values = self._annotations.get(dataset_id, {}).values()
            return sorted(
                (a for a in values if session_id is None or a.session_id == session_id),
                key=lambda a: (a.session_id, a.event_index, a.source))

    def transcript_for(self, dataset_id: str, session_id: str,
                       event_index: int) -> Optional[AgentTranscript]:
        with self._mutex:
            return self._transcripts.get(dataset_id, {}).get((session_id, event_index))

    def transcripts_for(self, dataset_id: str) -> list[AgentTranscript]:
        self._require(dataset_id)
        with self._mutex:
            return sorted(self._transcripts.get(dataset_id, {}).values(),
                          key=lambda t: (t.session_id, t.event_index))

    def decision_for(self, dataset_id: str, session_id: str,
                     event_index: int) -> Optional[HumanDecision]:
        with self._mutex:
            return self._decisions.get(dataset_id, {}).get((session_id, event_index))

    def gold_for(self, dataset_id: str) -> dict[tuple[str, int, str], CognitiveLabel]:
        self._require(dataset_id)
        with self._mutex:
            return dict(self._gold.get(dataset_id, {}))

    def effective_for(self, dataset_id: str, session_id: str,
                      event_index: int) -> Optional[EffectiveLabel]:
        """Winning label for one event under human > agents > heuristic."""
        with self._mutex:
            candidates = [
                ann for (sid, idx, _), ann
                in self._annotations.get(dataset_id, {}).items()
                if sid == session_id and idx == event_index
            ]
            decision = self._decisions.get(dataset_id, {}).get((session_id, event_index))
        if decision is not None:
            return EffectiveLabel(
                label=decision.label,
                source="human",
                confidence=1.0,
                flagged=False,
                justification=decision.note or f"human-{decision.verdict}",
            )
        winner = effective_annotation(sorted(candidates, key=lambda a: a.source))
        if winner is None:
            return None
        return EffectiveLabel(
            label=winner.label,
            source=winner.source,
            confidence=winner.confidence,
            flagged=winner.flagged,
            justification=winner.justification,
        )

    # ----------------------------------------------------------- writes

    def add_annotations(
        self,
        dataset_id: str,
        annotations: Iterable[CognitiveAnnotation],
        transcripts: Iterable[AgentTranscript] = (),
    ) -> None:
        self._require(dataset_id)
        with self._lock_for(dataset_id):
            with self._mutex:
                ann_group = self._annotations.setdefault(dataset_id, {})
                for ann in annotations:
                    self._append("annotations", dataset_id, ann.to_record())
                    ann_group[(ann.session_id, ann.event_index, ann.source)] = ann
                tr_group = self._transcripts.setdefault(dataset_id, {})
                for tr in transcripts:
                    self._append("transcripts", dataset_id, tr.to_record())
                    tr_group[(tr.session_id, tr.event_index)] = tr

    def record_decision(
        self,
        dataset_id: str,
        session_id: str,
        event_index: int,
        label: CognitiveLabel,
        verdict: str,
        note: str = "",
    ) -> HumanDecision:
        """Persist a human ruling; verdicts must be consistent with the machine label."""
        session = self.get_session(dataset_id, session_id)
        if not 0 <= event_index < len(session.events):
            raise KeyError(
                f"session {session_id!r} has no event {event_index}")
        if verdict not in VERDICTS:
            raise ValueError(f"unknown verdict: {verdict!r}")
        with self._lock_for(dataset_id):
            machine = self._machine_label(dataset_id, session_id, event_index)
            if verdict == "accepted" and machine is not None and label != machine:
                raise ValueError(
                    "accepted verdict must keep the machine label "
                    f"({machine.serialize()})")
            if verdict == "corrected" and machine is not None and label == machine:
                raise ValueError("corrected verdict must change the machine label")
            decision = HumanDecision(
                session_id=session_id,
                event_index=event_index,
                label=label,
                verdict=verdict,
                decided_at=_now_ms(),
                note=note,
            )
            with self._mutex:
                self._append("decisions", dataset_id, decision.to_record())
                self._decisions.setdefault(dataset_id, {})[
                    (session_id, event_index)] = decision
        return decision

    def _machine_label(self, dataset_id: str, session_id: str,
                       event_index: int) -> Optional[CognitiveLabel]:
        with self._mutex:
            candidates = [
                ann for (sid, idx, _), ann
                in self._annotations.get(dataset_id, {}).items()
                if sid == session_id and idx == event_index
            ]
        winner = effective_annotation(sorted(candidates, key=lambda a: a.source))
        return None if winner is None else winner.label

    def add_gold(self, dataset_id: str,
                 records: Iterable[tuple[str, int, str, CognitiveLabel]]) -> int:
        """Store gold ratings as (session_id, event_index, annotator_id, label)."""
        self._require(dataset_id)
        count = 0
        with self._lock_for(dataset_id), self._mutex:
            group = self._gold.setdefault(dataset_id, {})
            for session_id, event_index, annotator_id, label in records:
                self._append("gold", dataset_id, {
                    "session_id": session_id,
                    "event_index": event_index,
                    "annotator_id": annotator_id,
                    "label": label.serialize(),
                })
                group[(session_id, event_index, annotator_id)] = label
                count += 1
        return count

    def label_with_heuristic(self, dataset_id: str,
                             cfg: Optional[LabelerConfig] = None) -> int:
        """Label every session with the rule engine; returns the event count."""
        sessions = self.sessions_for(dataset_id)
        annotations: list[CognitiveAnnotation] = []
        for session in sessions:
            annotations.extend(label_session(session, cfg))
        self.add_annotations(dataset_id, annotations)
        return len(annotations)

    def register_corpus(
        self,
        name: str,
        corpus: Sequence[tuple[Session, Sequence[CognitiveAnnotation]]],
    ) -> str:
        """Register pre-built annotated sessions (e.g. a synthetic corpus)."""
        payload = json.dumps(
            [[s.to_record(), [a.to_record() for a in anns]] for s, anns in corpus],
            sort_keys=True)
        dataset_id = _dataset_hash(b"corpus", payload.encode("utf-8"))
        self.create_dataset(dataset_id, name, [s for s, _ in corpus])
        self.add_annotations(dataset_id, [a for _, anns in corpus for a in anns])
        return dataset_id

    def annotated_corpus(
        self, dataset_id: str,
    ) -> list[tuple[Session, list[CognitiveAnnotation]]]:
        """Sessions paired with their annotations, decisions folded in as human ones."""
        corpus = []
        for session in self.sessions_for(dataset_id):
            annotations = self.annotations_for(dataset_id, session.id)
            for event in session.events:
                decision = self.decision_for(dataset_id, session.id, event.index)
                if decision is not None:
                    annotations.append(CognitiveAnnotation(
                        session_id=session.id,
                        event_index=event.index,
                        label=decision.label,
                        justification=decision.note or f"human-{decision.verdict}",
                        source="human",
                        confidence=1.0,
                    ))
            corpus.append((session, annotations))
        return corpus

    # ------------------------------------------------------------ stats

    def stats(self, dataset_id: str) -> dict[str, Any]:
        self._require(dataset_id)
        histogram = {label.serialize(): 0 for label in CognitiveLabel}
        flagged = decided = labeled = total = 0
        with self._mutex:
            sessions = list(self._sessions.get(dataset_id, {}).values())
            decided = len(self._decisions.get(dataset_id, {}))
        for session in sessions:
            for event in session.events:
                total += 1
                eff = self.effective_for(dataset_id, session.id, event.index)
                if eff is None:
                    continue
                labeled += 1
                histogram[eff.label.serialize()] += 1
                if eff.flagged:
                    flagged += 1
        return {
            "total_events": total,
            "labeled_events": labeled,
            "decided": decided,
            "flagged_open": flagged,
            "labels": histogram,
            "alpha_vs_gold": self._alpha_vs_gold(dataset_id),
        }

    def _alpha_vs_gold(self, dataset_id: str) -> Optional[float]:
        gold = self.gold_for(dataset_id)
        if not gold:
            return None
        items: dict[tuple[str, int], dict[str, CognitiveLabel]] = {}
        for (session_id, event_index, annotator_id), label in gold.items():
            items.setdefault((session_id, event_index), {})[annotator_id] = label
        for (session_id, event_index), ratings in items.items():
            eff = self.effective_for(dataset_id, session_id, event_index)
            if eff is not None:
                ratings["__machine__"] = eff.label
        data = ReliabilityData.from_items(
            [(f"{sid}:{idx}", ratings) for (sid, idx), ratings in sorted(items.items())])
        try:
            return krippendorff_alpha_nominal(data)
        except UndefinedMetric:
            return None

    # ----------------------------------------------------------- export

    def export_csv(self, dataset_id: str, extended: bool = False,
                   force: bool = False) -> bytes:
        """The six-column review CSV; extended adds source, confidence, flagged."""
        sessions = self.sessions_for(dataset_id)
        rows: list[tuple] = []
        missing = 0
        for session in sessions:
            for event in session.events:
                eff = self.effective_for(dataset_id, session.id, event.index)
                if eff is None:
                    missing += 1
                    continue
                base = (
                    session.id,
                    event.timestamp,
                    event.action.serialize(),
                    event.content_id or event.content,
                    eff.label.serialize(),
                    eff.justification,
                )
                if extended:
                    base += (eff.source, f"{eff.confidence:.6f}",
                             "true" if eff.flagged else "false")
                rows.append((session.id, event.timestamp, event.index, base))
        if missing and not force:
            raise UnlabeledEvents(
                f"{missing} events have no label; pass force to export anyway")
        rows.sort(key=lambda r: (r[0], r[1], r[2]))
        buf = io.StringIO()
        writer = csv.writer(buf)
        header = EXPORT_HEADER + (EXTENDED_COLUMNS if extended else ())
        writer.writerow(header)
        for _, _, _, row in rows:
            writer.writerow(row)
        return buf.getvalue().encode("utf-8")

    def import_annotated_csv(self, data: bytes, name: str) -> str:
        """Register an exported CSV as a dataset with its labels attached.

        Events are rebuilt from the six columns; the round-trip guarantee is
        per-event effective labels, not byte-level event identity.
        """
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedInput(f"CSV is not valid UTF-8: {exc}") from None
        reader = csv.reader(io.StringIO(text, newline=""))
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise MalformedInput("CSV has no header row") from None
        extended = header == EXPORT_HEADER + EXTENDED_COLUMNS
        if not extended and header != EXPORT_HEADER:
            raise MalformedInput(f"unexpected CSV header: {','.join(header)}")

        by_session: dict[str, list[tuple] ] = {}
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise MalformedInput(f"row {row_no} has {len(row)} columns")
            by_session.setdefault(row[0], []).append(row)

        sessions: list[Session] = []
        annotations: list[CognitiveAnnotation] = []
        for session_id in sorted(by_session):
            events = []
            for index, row in enumerate(by_session[session_id]):
                try:
                    action = ActionType.parse(row[2])
                    timestamp = int(row[1])
                    label = CognitiveLabel.parse(row[4])
                except ValueError as exc:
                    raise MalformedInput(f"bad row for session {session_id}: {exc}") from None
                events.append(Event(
                    session_id=session_id,
                    index=index,
                    timestamp=timestamp,
                    action=action,
                    content=row[3],
                    content_id=row[3] if action.kind != "QUERY" else "",
                ))
                source, confidence, flagged = "heuristic", 1.0, False
                if extended:
                    source = row[6]
                    confidence = float(row[7])
                    flagged = row[8] == "true"
                annotations.append(CognitiveAnnotation(
                    session_id=session_id,
                    event_index=index,
                    label=label,
                    justification=row[5] or "imported",
                    source=source,
                    confidence=confidence,
                    flagged=flagged,
                ))
            sessions.append(Session(id=session_id, user_id=session_id,
                                    events=tuple(events)))
        if not sessions:
            raise MalformedInput("CSV contains no event rows")
        dataset_id = _dataset_hash(data, name.encode())
        self.create_dataset(dataset_id, name, sessions)
        self.add_annotations(dataset_id, annotations)
        return dataset_id
