"""Human review service: durable session store plus the HTTP API the
reviewer UI consumes.

Persistence is an append-only JSON Lines event log (session creations and
correction submissions); state is rebuilt by replay on startup, which gives
a human-inspectable audit trail of who changed what. Every submission is
flushed and fsynced before the call returns, so an acknowledged correction
survives a process crash.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path

from pydantic import BaseModel, Field

from .languages import get_language
from .pipeline import TranslationUnit, UnitKey, UnitStatus, read_unit_ledger
from .scripts import placeholder_count

ISSUE_TAGS = ("Punctuation", "Gender", "Untranslated", "Grammar", "Nunnation", "Other")


class ReviewError(Exception):
    pass


class UnknownSessionError(ReviewError):
    pass


class UnknownUnitError(ReviewError):
    pass


class DuplicateAssignmentError(ReviewError):
    pass


class ConflictError(ReviewError):
    """Submission does not target the unit at the session cursor."""


class SubmissionValidationError(ReviewError):
    pass


@dataclass(frozen=True)
class CorrectionSubmission:
    key: UnitKey
    corrected_text: str
    issue_tags: frozenset[str] = frozenset()
    note: str = ""

    def __post_init__(self) -> None:
        bad = set(self.issue_tags) - set(ISSUE_TAGS)
        if bad:
            raise SubmissionValidationError(f"unknown issue tags: {sorted(bad)}")


@dataclass
class ReviewSession:
    session_id: str
    lang_code: str
    reviewer_id: str
    assigned: list[UnitKey]
    cursor: int = 0

    @property
    def done(self) -> bool:
        return self.cursor >= len(self.assigned)


@dataclass(frozen=True)
class ProgressReport:
    reviewed: int
    flagged: int
    remaining: int
    tag_histogram: dict[str, int] = field(default_factory=dict)


def _key_to_json(key: UnitKey) -> dict:
    return {"record_id": key[0], "turn_index": key[1], "lang": key[2]}


def _key_from_json(data: dict) -> UnitKey:
    return (data["record_id"], data["turn_index"], data["lang"])


class ReviewStore:
    """Review state over a unit ledger, persisted as an event log.

    All mutation goes through a single lock and is appended to the log before
    the in-memory state changes; reads are plain snapshots.
    """

    def __init__(self, ledger_path: str | Path, events_path: str | Path):
        self._events_path = Path(events_path)
        self._lock = threading.Lock()
        self._units: dict[UnitKey, TranslationUnit] = {}
        self._sessions: dict[str, ReviewSession] = {}
        self._assigned_keys: set[UnitKey] = set()
        self._tag_counts: dict[str, Counter] = {}
        self._submissions: dict[UnitKey, CorrectionSubmission] = {}
        for unit in read_unit_ledger(ledger_path):
            self._units[unit.key] = unit
        if self._events_path.exists():
            self._replay()

    def _replay(self) -> None:
        for line in self._events_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            event = json.loads(line)
            if event["type"] == "session_created":
                session = ReviewSession(
                    session_id=event["session_id"],
                    lang_code=event["lang"],
                    reviewer_id=event["reviewer_id"],
                    assigned=[_key_from_json(k) for k in event["keys"]],
                )
                self._sessions[session.session_id] = session
                self._assigned_keys.update(session.assigned)
            elif event["type"] == "correction_submitted":
                submission = CorrectionSubmission(
                    key=_key_from_json(event["key"]),
                    corrected_text=event["corrected_text"],
                    issue_tags=frozenset(event["issue_tags"]),
                    note=event.get("note", ""),
                )
                self._apply_submission(self._sessions[event["session_id"]], submission)

    def _append_event(self, event: dict) -> None:
        line = json.dumps(event, ensure_ascii=False)
        self._events_path.parent.mkdir(parents=True, exist_ok=True)
        with self._events_path.open("a", encoding="utf-8") as fh:
            fh.write(line + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _apply_submission(
        self, session: ReviewSession, submission: CorrectionSubmission
    ) -> None:
        unit = self._units[submission.key]
        self._units[submission.key] = replace(
            unit, corrected_text=submission.corrected_text, status=UnitStatus.REVIEWED
        )
        self._submissions[submission.key] = submission
        counts = self._tag_counts.setdefault(session.lang_code, Counter())
        counts.update(submission.issue_tags)
        session.cursor += 1

    # -- operations ---------------------------------------------------------

    def create_session(
        self, lang_code: str, reviewer_id: str, sample: list[UnitKey]
    ) -> ReviewSession:
        get_language(lang_code)
        with self._lock:
            if len(set(sample)) != len(sample):
                raise DuplicateAssignmentError("sample contains duplicate unit keys")
            unknown = [k for k in sample if k not in self._units]
            if unknown:
                raise UnknownUnitError(f"unit keys not in ledger: {unknown[:5]}")
            taken = [k for k in sample if k in self._assigned_keys]
            if taken:
                raise DuplicateAssignmentError(
                    f"unit keys already assigned to another session: {taken[:5]}"
                )
            session = ReviewSession(
                session_id=uuid.uuid4().hex,
                lang_code=lang_code,
                reviewer_id=reviewer_id,
                assigned=list(sample),
            )
            self._append_event(
                {
                    "type": "session_created",
                    "ts": datetime.now(timezone.utc).isoformat(),
                    "session_id": session.session_id,
                    "lang": lang_code,
                    "reviewer_id": reviewer_id,
                    "keys": [_key_to_json(k) for k in sample],
                }
            )
            self._sessions[session.session_id] = session
            self._assigned_keys.update(session.assigned)
            return session

    def get_session(self, session_id: str) -> ReviewSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"unknown session {session_id!r}") from None

    def next_unit(self, session_id: str) -> dict:
        with self._lock:
            session = self.get_session(session_id)
            progress = {"done": session.cursor, "total": len(session.assigned)}
            if session.done:
                return {"finished": True, "progress": progress}
            unit = self._units[session.assigned[session.cursor]]
            return {
                "finished": False,
                "key": _key_to_json(unit.key),
                "source_text": unit.source_text,
                "machine_text": unit.machine_text,
                "report": unit.report.to_json(),
                "progress": progress,
            }

    def submit_correction(self, session_id: str, submission: CorrectionSubmission) -> dict:
        with self._lock:
            session = self.get_session(session_id)
            if session.done:
                raise ConflictError("session is already complete")
            expected = session.assigned[session.cursor]
            if submission.key != expected:
                raise ConflictError(
                    f"submission targets {submission.key}, cursor is at {expected}"
                )
            unit = self._units[expected]
            if unit.source_text and not submission.corrected_text:
                raise SubmissionValidationError(
                    "corrected_text must be non-empty for a non-empty source"
                )
            # The multimodal structure must survive review: a correction may
            # restore a dropped placeholder but never change the count the
            # source dictates.
            if placeholder_count(submission.corrected_text) != placeholder_count(
                unit.source_text
            ):
                raise SubmissionValidationError(
                    "corrected_text must carry the same number of image "
                    "placeholder tokens as the source"
                )
            self._append_event(
                {
                    "type": "correction_submitted",
                    "ts": datetime.now(timezone.utc).isoformat(),
                    "session_id": session_id,
                    "cursor": session.cursor,
                    "key": _key_to_json(submission.key),
                    "corrected_text": submission.corrected_text,
                    "issue_tags": sorted(submission.issue_tags),
                    "note": submission.note,
                }
            )
            self._apply_submission(session, submission)
            return {"done": session.cursor, "total": len(session.assigned)}

    def progress_report(self, lang_code: str) -> ProgressReport:
        get_language(lang_code)
        with self._lock:
            lang_units = [u for u in self._units.values() if u.lang_code == lang_code]
            reviewed = sum(
                1
                for u in lang_units
                if u.status in (UnitStatus.REVIEWED, UnitStatus.ACCEPTED)
            )
            flagged = sum(1 for u in lang_units if u.report.flags)
            histogram = dict(sorted(self._tag_counts.get(lang_code, Counter()).items()))
            return ProgressReport(
                reviewed=reviewed,
                flagged=flagged,
                remaining=len(lang_units) - reviewed,
                tag_histogram=histogram,
            )

    def units(self, lang_code: str | None = None) -> list[TranslationUnit]:
        with self._lock:
            out = list(self._units.values())
        if lang_code is not None:
            out = [u for u in out if u.lang_code == lang_code]
        return out


class KeyModel(BaseModel):
    record_id: str
    turn_index: int
    lang: str

    def to_key(self) -> UnitKey:
        return (self.record_id, self.turn_index, self.lang)


class CreateSessionRequest(BaseModel):
    lang: str
    reviewer_id: str
    keys: list[KeyModel]


class SubmitRequest(BaseModel):
    key: KeyModel
    corrected_text: str
    issue_tags: list[str] = Field(default_factory=list)
    note: str = ""


def create_app(store: ReviewStore, ui_dir: str | Path | None = None):
    """Build the FastAPI application over a review store."""
    from fastapi import FastAPI, HTTPException
    from fastapi.staticfiles import StaticFiles

    app = FastAPI(title="palo-forge review service")

    def _http_error(exc: ReviewError) -> HTTPException:
        if isinstance(exc, (UnknownSessionError, UnknownUnitError)):
            return HTTPException(status_code=404, detail=str(exc))
        if isinstance(exc, ConflictError):
            return HTTPException(status_code=409, detail=str(exc))
        return HTTPException(status_code=422, detail=str(exc))

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/sessions")
    def create_session(body: CreateSessionRequest) -> dict:
        try:
            session = store.create_session(
                body.lang, body.reviewer_id, [k.to_key() for k in body.keys]
            )
        except ReviewError as exc:
            raise _http_error(exc) from exc
        return {
            "session_id": session.session_id,
            "lang": session.lang_code,
            "reviewer_id": session.reviewer_id,
            "assigned": len(session.assigned),
        }

    @app.get("/sessions/{session_id}/next")
    def next_unit(session_id: str) -> dict:
        try:
            return store.next_unit(session_id)
        except ReviewError as exc:
            raise _http_error(exc) from exc

    @app.post("/sessions/{session_id}/submit")
    def submit(session_id: str, body: SubmitRequest) -> dict:
        try:
            submission = CorrectionSubmission(
                key=body.key.to_key(),
                corrected_text=body.corrected_text,
                issue_tags=frozenset(body.issue_tags),
                note=body.note,
            )
            progress = store.submit_correction(session_id, submission)
        except ReviewError as exc:
            raise _http_error(exc) from exc
        return {"progress": progress}

    @app.get("/progress/{lang}")
    def progress(lang: str) -> dict:
        try:
            report = store.progress_report(lang)
        except ValueError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "reviewed": report.reviewed,
            "flagged": report.flagged,
            "remaining": report.remaining,
            "tag_histogram": report.tag_histogram,
        }

    if ui_dir is not None and Path(ui_dir).is_dir():
        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
