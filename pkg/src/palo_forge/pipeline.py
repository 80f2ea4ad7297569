"""Dataset translation orchestration.

Drives a translator backend over instruction datasets: per-turn translation
with placeholder masking, automated correction, validation flagging, resumable
checkpointing with a (source, language, backend) response cache, review-subset
sampling, merging of human corrections, and export of the translator
fine-tuning corpus.

Determinism contract: given the same inputs, outputs are byte-identical
regardless of parallelism, completion order, or an interrupt/resume cycle.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import threading
import time
from concurrent.futures import FIRST_EXCEPTION, ThreadPoolExecutor, wait
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .backends import BackendError, CompletionBackend, Message, is_retryable
from .dataset import InstructionRecord, Turn, serialize_instruct_dataset
from .languages import LanguageTag, get_language
from .rules import CorrectionRule, apply_corrections
from .scripts import PLACEHOLDER
from .validation import (
    DEFAULT_THRESHOLDS,
    ValidationReport,
    ValidationThresholds,
    validate_translation,
)

# Sentinel substituted for the image placeholder before a backend call. If a
# backend mangles it, the restored text fails the placeholder check and the
# unit is flagged rather than silently repaired.
SENTINEL = "[[IMG]]"

DEFAULT_SEED = 42

UnitKey = tuple[str, int, str]  # (record_id, turn_index, lang_code)


def mask_placeholders(text: str) -> str:
    return text.replace(PLACEHOLDER, SENTINEL)


def unmask_placeholders(text: str) -> str:
    return text.replace(SENTINEL, PLACEHOLDER)


class UnitStatus(Enum):
    MACHINE = "machine"
    FLAGGED = "flagged"
    REVIEWED = "reviewed"
    ACCEPTED = "accepted"


_CORRECTED_STATUSES = frozenset({UnitStatus.REVIEWED, UnitStatus.ACCEPTED})


@dataclass(frozen=True)
class TranslationUnit:
    """One turn's journey through the pipeline."""

    record_id: str
    turn_index: int
    lang_code: str
    source_text: str
    machine_text: str
    report: ValidationReport
    status: UnitStatus
    corrected_text: str | None = None

    def __post_init__(self) -> None:
        has_correction = self.corrected_text is not None
        if has_correction != (self.status in _CORRECTED_STATUSES):
            raise ValueError(
                f"unit {self.key}: corrected_text requires status reviewed/accepted"
            )
        if self.status is UnitStatus.FLAGGED and not self.report.flags:
            raise ValueError(f"unit {self.key}: flagged status requires flags")

    @property
    def key(self) -> UnitKey:
        return (self.record_id, self.turn_index, self.lang_code)

    @property
    def final_text(self) -> str:
        return self.corrected_text if self.corrected_text is not None else self.machine_text

    def to_json(self) -> dict:
        return {
            "record_id": self.record_id,
            "turn_index": self.turn_index,
            "lang": self.lang_code,
            "source_text": self.source_text,
            "machine_text": self.machine_text,
            "corrected_text": self.corrected_text,
            "status": self.status.value,
            "report": self.report.to_json(),
        }

    @classmethod
    def from_json(cls, data: dict) -> "TranslationUnit":
        return cls(
            record_id=data["record_id"],
            turn_index=data["turn_index"],
            lang_code=data["lang"],
            source_text=data["source_text"],
            machine_text=data["machine_text"],
            corrected_text=data.get("corrected_text"),
            status=UnitStatus(data["status"]),
            report=ValidationReport.from_json(data["report"]),
        )


@dataclass(frozen=True)
class UnitFailure:
    record_id: str
    turn_index: int
    lang_code: str
    error: str


@dataclass
class RetryPolicy:
    """Bounded exponential backoff for transient backend failures."""

    max_attempts: int = 5
    base_delay: float = 0.5
    max_delay: float = 8.0
    sleep: Callable[[float], None] = time.sleep

    def call(self, fn: Callable[[], str]) -> str:
        delay = self.base_delay
        for attempt in range(1, self.max_attempts + 1):
            try:
                return fn()
            except BackendError as exc:
                if not is_retryable(exc) or attempt == self.max_attempts:
                    raise
                self.sleep(delay)
                delay = min(delay * 2, self.max_delay)
        raise AssertionError("unreachable")


class _LockedCache:
    """Thread-safe view over the checkpoint's response cache."""

    def __init__(self, store: dict[str, str]):
        self._store = store
        self._lock = threading.Lock()

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._store.get(key)

    def put(self, key: str, value: str) -> None:
        with self._lock:
            self._store[key] = value


def cache_key(source_text: str, lang_code: str, backend_id: str) -> str:
    canonical = json.dumps([source_text, lang_code, backend_id], ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def build_translation_prompt(masked_text: str, lang: LanguageTag) -> list[Message]:
    system = (
        f"You are a professional translator. Translate the user's message from "
        f"English into {lang.name} (language code: {lang.code}). Preserve the "
        f"token {SENTINEL} exactly where it appears. Reply with the translation only."
    )
    return [
        {"role": "system", "content": system},
        {"role": "user", "content": masked_text},
    ]


def translate_text(
    source: str,
    lang: LanguageTag,
    backend: CompletionBackend,
    *,
    cache: _LockedCache | None = None,
    retry: RetryPolicy | None = None,
) -> str:
    """Translate one text via the backend, going through the response cache.

    The cache key is the (source, language, backend) triple, so a resumed run
    never re-requests a triple already answered.
    """
    if source == "":
        return ""
    key = cache_key(source, lang.code, backend.descriptor.backend_id)
    if cache is not None:
        hit = cache.get(key)
        if hit is not None:
            return hit
    messages = build_translation_prompt(mask_placeholders(source), lang)
    retry = retry or RetryPolicy()
    machine = unmask_placeholders(retry.call(lambda: backend.complete(messages)))
    if cache is not None:
        cache.put(key, machine)
    return machine


@dataclass
class RecordOutcome:
    """Result of translating one record: the translated record (None when any
    turn failed, so the record is incomplete), its units, and failures."""

    record: InstructionRecord | None
    units: list[TranslationUnit]
    failures: list[UnitFailure]


def translate_record(
    record: InstructionRecord,
    lang: LanguageTag,
    backend: CompletionBackend,
    *,
    rule_table: dict[str, tuple[CorrectionRule, ...]] | None = None,
    thresholds: ValidationThresholds = DEFAULT_THRESHOLDS,
    cache: _LockedCache | None = None,
    retry: RetryPolicy | None = None,
) -> RecordOutcome:
    """Translate every turn of a record, apply corrections, and validate."""
    if lang.code == "en":
        raise ValueError("English is the source language, not a translation target")
    units: list[TranslationUnit] = []
    failures: list[UnitFailure] = []
    turns: list[Turn] = []
    for index, turn in enumerate(record.turns):
        try:
            machine = translate_text(turn.text, lang, backend, cache=cache, retry=retry)
        except BackendError as exc:
            failures.append(UnitFailure(record.id, index, lang.code, str(exc)))
            continue
        corrected, _ = apply_corrections(machine, lang, rule_table)
        report = validate_translation(turn.text, corrected, lang, thresholds)
        status = UnitStatus.FLAGGED if report.flags else UnitStatus.MACHINE
        units.append(
            TranslationUnit(
                record_id=record.id,
                turn_index=index,
                lang_code=lang.code,
                source_text=turn.text,
                machine_text=corrected,
                report=report,
                status=status,
            )
        )
        turns.append(Turn(turn.speaker, corrected))
    translated = None
    if not failures:
        translated = InstructionRecord(record.id, record.image, tuple(turns))
    return RecordOutcome(record=translated, units=units, failures=failures)


class CheckpointMismatchError(Exception):
    """Checkpoint belongs to a different dataset/languages/backend run."""


@dataclass
class Checkpoint:
    fingerprint: str
    backend_id: str
    cache: dict[str, str]
    completed: set[UnitKey]


def run_fingerprint(
    records: Sequence[InstructionRecord], languages: Sequence[LanguageTag], backend_id: str
) -> str:
    digest = hashlib.sha256()
    digest.update(serialize_instruct_dataset(list(records)))
    digest.update(",".join(sorted(l.code for l in languages)).encode("utf-8"))
    digest.update(backend_id.encode("utf-8"))
    return digest.hexdigest()


def write_atomic(path: str | Path, data: bytes) -> None:
    """Write-temp-then-rename in the destination directory; readers never see
    a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(checkpoint: Checkpoint, path: str | Path) -> None:
    payload = {
        "fingerprint": checkpoint.fingerprint,
        "backend_id": checkpoint.backend_id,
        "cache": checkpoint.cache,
        "completed": sorted(list(k) for k in checkpoint.completed),
    }
    write_atomic(path, json.dumps(payload, ensure_ascii=False, sort_keys=True).encode("utf-8"))


def load_checkpoint(path: str | Path) -> Checkpoint:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return Checkpoint(
        fingerprint=data["fingerprint"],
        backend_id=data["backend_id"],
        cache=dict(data["cache"]),
        completed={(rid, turn, lang) for rid, turn, lang in data["completed"]},
    )


class _CountingBackend:
    """Counts the calls that actually reach the wrapped backend."""

    def __init__(self, inner: CompletionBackend):
        self.descriptor = inner.descriptor
        self._inner = inner
        self._lock = threading.Lock()
        self.calls = 0

    def complete(self, messages: list[Message]) -> str:
        with self._lock:
            self.calls += 1
        return self._inner.complete(messages)


@dataclass
class LanguageSummary:
    translated: int
    flagged: int
    failed: int


@dataclass
class MassTranslationResult:
    datasets: dict[str, list[InstructionRecord]]
    units: dict[str, list[TranslationUnit]]
    failures: list[UnitFailure]
    summary: dict[str, LanguageSummary]
    backend_calls: int

    def summary_json(self) -> dict:
        return {
            code: {"translated": s.translated, "flagged": s.flagged, "failed": s.failed}
            for code, s in sorted(self.summary.items())
        }


def run_mass_translation(
    records: Sequence[InstructionRecord],
    languages: Sequence[LanguageTag],
    backend: CompletionBackend,
    *,
    checkpoint_path: str | Path | None = None,
    parallelism: int = 1,
    flush_every: int = 1,
    rule_table: dict[str, tuple[CorrectionRule, ...]] | None = None,
    thresholds: ValidationThresholds = DEFAULT_THRESHOLDS,
    retry: RetryPolicy | None = None,
) -> MassTranslationResult:
    """Translate a dataset into every target language.

    Output record order equals input order regardless of completion order or
    parallelism. With a checkpoint path, the run resumes after interruption
    without re-requesting any cached (source, language, backend) triple; the
    checkpoint file is replaced atomically. Incomplete records are dropped
    from the per-language output but always accounted for in the summary.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    fingerprint = run_fingerprint(records, languages, backend.descriptor.backend_id)
    checkpoint = Checkpoint(fingerprint, backend.descriptor.backend_id, {}, set())
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        checkpoint = load_checkpoint(checkpoint_path)
        if checkpoint.fingerprint != fingerprint:
            raise CheckpointMismatchError(
                "checkpoint was written for a different dataset, language set, "
                "or backend; refusing to resume"
            )
    cache = _LockedCache(checkpoint.cache)
    counting = _CountingBackend(backend)

    outcomes: dict[tuple[str, int], RecordOutcome] = {}
    state_lock = threading.Lock()
    done_count = 0

    def flush() -> None:
        if checkpoint_path is not None:
            save_checkpoint(checkpoint, checkpoint_path)

    def work(lang: LanguageTag, index: int) -> None:
        nonlocal done_count
        outcome = translate_record(
            records[index],
            lang,
            counting,
            rule_table=rule_table,
            thresholds=thresholds,
            cache=cache,
            retry=retry,
        )
        with state_lock:
            outcomes[(lang.code, index)] = outcome
            checkpoint.completed.update(u.key for u in outcome.units)
            done_count += 1
            if flush_every and done_count % flush_every == 0:
                flush()

    pool = ThreadPoolExecutor(max_workers=parallelism)
    try:
        futures = [
            pool.submit(work, lang, index)
            for lang in languages
            for index in range(len(records))
        ]
        done, _ = wait(futures, return_when=FIRST_EXCEPTION)
        for future in done:
            future.result()
    finally:
        pool.shutdown(wait=True, cancel_futures=True)
        flush()

    datasets: dict[str, list[InstructionRecord]] = {}
    units: dict[str, list[TranslationUnit]] = {}
    failures: list[UnitFailure] = []
    summary: dict[str, LanguageSummary] = {}
    for lang in languages:
        translated: list[InstructionRecord] = []
        lang_units: list[TranslationUnit] = []
        failed = 0
        flagged = 0
        for index in range(len(records)):
            outcome = outcomes[(lang.code, index)]
            lang_units.extend(outcome.units)
            failures.extend(outcome.failures)
            if outcome.record is None:
                failed += 1
                continue
            translated.append(outcome.record)
            if any(u.status is UnitStatus.FLAGGED for u in outcome.units):
                flagged += 1
        datasets[lang.code] = translated
        units[lang.code] = lang_units
        summary[lang.code] = LanguageSummary(len(translated), flagged, failed)
    return MassTranslationResult(
        datasets=datasets,
        units=units,
        failures=failures,
        summary=summary,
        backend_calls=counting.calls,
    )


def _hash_rank(seed: int, record_id: str) -> str:
    return hashlib.sha256(f"{seed}\x1f{record_id}".encode("utf-8")).hexdigest()


def sample_for_review(
    records: Sequence[InstructionRecord] | Sequence[str],
    n: int = 1000,
    seed: int = DEFAULT_SEED,
    *,
    flagged_ids: set[str] | None = None,
) -> list[str]:
    """Draw ``n`` record ids uniformly without replacement.

    The draw ranks ids by a seeded hash, so it is deterministic across runs
    and platforms and independent of dataset order. Returned ids keep dataset
    order. With ``flagged_ids`` the sample is stratified: flagged and clean
    records are drawn proportionally to their share of the dataset.
    """
    ids = [r if isinstance(r, str) else r.id for r in records]
    if len(set(ids)) != len(ids):
        raise ValueError("record ids must be unique")
    if n < 0:
        raise ValueError("sample size must be non-negative")
    if n > len(ids):
        raise ValueError(f"sample size {n} exceeds dataset size {len(ids)}")

    if flagged_ids is None:
        chosen = set(sorted(ids, key=lambda i: _hash_rank(seed, i))[:n])
    else:
        flagged = [i for i in ids if i in flagged_ids]
        clean = [i for i in ids if i not in flagged_ids]
        n_flagged = min(len(flagged), round(n * len(flagged) / len(ids))) if ids else 0
        n_clean = n - n_flagged
        if n_clean > len(clean):
            n_flagged += n_clean - len(clean)
            n_clean = len(clean)
        chosen = set(sorted(flagged, key=lambda i: _hash_rank(seed, i))[:n_flagged])
        chosen |= set(sorted(clean, key=lambda i: _hash_rank(seed, i))[:n_clean])
    return [i for i in ids if i in chosen]


class MergeReferenceError(Exception):
    """Units reference records or turns that do not exist in the dataset."""

    def __init__(self, offenders: list[UnitKey]):
        self.offenders = offenders
        super().__init__(f"units reference missing targets: {offenders}")


class MergePlaceholderError(Exception):
    """Corrections would change a record's image placeholder count."""

    def __init__(self, offenders: list[UnitKey]):
        self.offenders = offenders
        super().__init__(f"corrections change the placeholder count: {offenders}")


def merge_corrections(
    records: Sequence[InstructionRecord], units: Sequence[TranslationUnit]
) -> list[InstructionRecord]:
    """Replace turn text with human corrections.

    Only reviewed/accepted units are applied; everything else is left as is.
    A correction must carry as many image placeholder tokens as its source
    turn, so merging never changes a record's multimodal structure. The merge
    is pure and idempotent.
    """
    index = {r.id: i for i, r in enumerate(records)}
    offenders = [
        u.key
        for u in units
        if u.record_id not in index
        or not (0 <= u.turn_index < len(records[index[u.record_id]].turns))
    ]
    if offenders:
        raise MergeReferenceError(offenders)
    unsafe = [
        u.key
        for u in units
        if u.status in _CORRECTED_STATUSES
        and u.corrected_text.count(PLACEHOLDER) != u.source_text.count(PLACEHOLDER)
    ]
    if unsafe:
        raise MergePlaceholderError(unsafe)

    merged = [r for r in records]
    for unit in units:
        if unit.status not in _CORRECTED_STATUSES:
            continue
        pos = index[unit.record_id]
        record = merged[pos]
        turns = list(record.turns)
        turns[unit.turn_index] = Turn(turns[unit.turn_index].speaker, unit.corrected_text)
        merged[pos] = replace(record, turns=tuple(turns))
    return merged


class CorpusExportError(Exception):
    pass


def export_finetune_corpus(units: Sequence[TranslationUnit], lang: LanguageTag) -> bytes:
    """Build the translator fine-tuning corpus: JSON Lines, one chat example
    per reviewed unit, ordered by (record_id, turn_index)."""
    for unit in units:
        if unit.lang_code != lang.code:
            raise CorpusExportError(f"unit {unit.key} is not {lang.code}")
        if unit.status not in _CORRECTED_STATUSES or unit.corrected_text is None:
            raise CorpusExportError(f"unit {unit.key} has no reviewed correction")
    system = (
        f"Translate the user's message from English into {lang.name}. "
        f"Reply with the translation only."
    )
    lines = []
    for unit in sorted(units, key=lambda u: (u.record_id, u.turn_index)):
        example = {
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": unit.source_text},
                {"role": "assistant", "content": unit.corrected_text},
            ]
        }
        lines.append(json.dumps(example, ensure_ascii=False))
    return ("\n".join(lines) + "\n").encode("utf-8") if lines else b""


def write_unit_ledger(units: Sequence[TranslationUnit], path: str | Path) -> None:
    lines = [json.dumps(u.to_json(), ensure_ascii=False) for u in units]
    write_atomic(path, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")


def read_unit_ledger(path: str | Path) -> list[TranslationUnit]:
    units = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            units.append(TranslationUnit.from_json(json.loads(line)))
    return units


def get_unit_language(unit: TranslationUnit) -> LanguageTag:
    return get_language(unit.lang_code)
