"""Instruction-dataset model: parsing, validation, serialization, mix planning.

The on-disk document is the publicly used instruction-tuning layout: a UTF-8
JSON array of ``{"id", "image"?, "conversations": [{"from", "value"}, ...]}``
where ``from`` is ``human`` or ``gpt``. Records alternate speakers starting
with a human turn; image-grounded records carry the ``<image>`` placeholder
in exactly one human turn, text-only records carry none.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .languages import LanguageTag
from .scripts import PLACEHOLDER, placeholder_count


class Speaker(Enum):
    HUMAN = "human"
    ASSISTANT = "assistant"


# Wire values for the "from" field.
_SPEAKER_FROM_WIRE = {"human": Speaker.HUMAN, "gpt": Speaker.ASSISTANT}
_SPEAKER_TO_WIRE = {Speaker.HUMAN: "human", Speaker.ASSISTANT: "gpt"}


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str


@dataclass(frozen=True)
class InstructionRecord:
    id: str
    image: str | None
    turns: tuple[Turn, ...]

    def total_placeholders(self) -> int:
        return sum(placeholder_count(t.text) for t in self.turns)


class DatasetParseError(Exception):
    """Malformed dataset document; carries the byte offset of the problem."""

    def __init__(self, message: str, byte_offset: int | None = None):
        self.byte_offset = byte_offset
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)


class DatasetValidationError(Exception):
    """One or more records violate an invariant.

    ``violations`` is a list of (record_id, rule, message) triples.
    """

    def __init__(self, violations: list[tuple[str, str, str]]):
        self.violations = violations
        lines = [f"record {rid!r}: [{rule}] {msg}" for rid, rule, msg in violations]
        super().__init__("dataset validation failed:\n" + "\n".join(lines))


def validate_record(record: InstructionRecord) -> list[tuple[str, str, str]]:
    """Invariant violations for one record as (record_id, rule, message)."""
    violations = []

    def bad(rule: str, msg: str) -> None:
        violations.append((record.id, rule, msg))

    if not record.turns:
        bad("empty-turns", "record has no turns")
        return violations

    for i, turn in enumerate(record.turns):
        expected = Speaker.HUMAN if i % 2 == 0 else Speaker.ASSISTANT
        if turn.speaker is not expected:
            bad(
                "alternation",
                f"turn {i} is {turn.speaker.value}, expected {expected.value}",
            )
            break

    for i, turn in enumerate(record.turns):
        if turn.speaker is Speaker.ASSISTANT and placeholder_count(turn.text) > 0:
            bad("placeholder-in-assistant-turn", f"placeholder in assistant turn {i}")

    human_tokens = sum(
        placeholder_count(t.text) for t in record.turns if t.speaker is Speaker.HUMAN
    )
    if record.image is not None and human_tokens != 1:
        bad(
            "placeholder-count",
            f"image-grounded record has {human_tokens} {PLACEHOLDER} tokens, expected 1",
        )
    elif record.image is None and human_tokens != 0:
        bad(
            "placeholder-count",
            f"text-only record has {human_tokens} {PLACEHOLDER} tokens, expected 0",
        )

    return violations


def validate_records(
    records: list[InstructionRecord], *, lenient: bool = False
) -> list[tuple[str, str, str]]:
    """Validate a whole dataset. Strict mode raises; lenient mode returns the
    violations as warnings. Duplicate record ids are always a violation (they
    would make correction merging ambiguous)."""
    violations = []
    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            violations.append((record.id, "duplicate-id", "record id occurs more than once"))
        seen.add(record.id)
        violations.extend(validate_record(record))
    if violations and not lenient:
        raise DatasetValidationError(violations)
    return violations


def _char_to_byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def parse_instruct_dataset(document: bytes, *, lenient: bool = False) -> list[InstructionRecord]:
    """Parse and validate a dataset document.

    Raises DatasetParseError (with byte offset) on malformed input and
    DatasetValidationError on invariant violations unless ``lenient``.
    """
    try:
        text = document.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DatasetParseError(f"not valid UTF-8: {exc.reason}", exc.start) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetParseError(exc.msg, _char_to_byte_offset(text, exc.pos)) from exc

    if not isinstance(data, list):
        raise DatasetParseError("top-level value must be a JSON array", 0)

    records = []
    for index, item in enumerate(data):
        if not isinstance(item, dict):
            raise DatasetParseError(f"element {index} is not an object")
        try:
            rid = item["id"]
            conversations = item["conversations"]
        except KeyError as exc:
            raise DatasetParseError(f"element {index} missing key {exc}") from exc
        if not isinstance(rid, str):
            raise DatasetParseError(f"element {index}: id must be a string")
        image = item.get("image")
        if image is not None and not isinstance(image, str):
            raise DatasetParseError(f"record {rid!r}: image must be a string path")
        turns = []
        for t, message in enumerate(conversations):
            speaker = _SPEAKER_FROM_WIRE.get(message.get("from"))
            if speaker is None:
                raise DatasetParseError(
                    f"record {rid!r} turn {t}: unknown speaker {message.get('from')!r}"
                )
            value = message.get("value")
            if not isinstance(value, str):
                raise DatasetParseError(f"record {rid!r} turn {t}: value must be a string")
            turns.append(Turn(speaker, value))
        records.append(InstructionRecord(rid, image, tuple(turns)))

    validate_records(records, lenient=lenient)
    return records


def record_to_json(record: InstructionRecord) -> dict:
    obj: dict = {"id": record.id}
    if record.image is not None:
        obj["image"] = record.image
    obj["conversations"] = [
        {"from": _SPEAKER_TO_WIRE[t.speaker], "value": t.text} for t in record.turns
    ]
    return obj


def serialize_instruct_dataset(records: list[InstructionRecord]) -> bytes:
    """Serialize to the canonical document form.

    Output is byte-stable for identical input and round-trips through
    ``parse_instruct_dataset`` field for field.
    """
    payload = [record_to_json(r) for r in records]
    return (json.dumps(payload, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


def load_dataset(path: str | Path, *, lenient: bool = False) -> list[InstructionRecord]:
    return parse_instruct_dataset(Path(path).read_bytes(), lenient=lenient)


def save_dataset(records: list[InstructionRecord], path: str | Path) -> None:
    Path(path).write_bytes(serialize_instruct_dataset(records))


@dataclass(frozen=True)
class MixPlan:
    """Planned per-language record counts for a fine-tuning mix."""

    counts: dict[str, int]
    total: int


def plan_dataset_mix(
    english_count: int,
    translated_count: int,
    languages: list[LanguageTag],
    overrides: dict[str, int] | None = None,
) -> MixPlan:
    """Plan the dataset mix: an English bucket plus one translated bucket per
    target language (``overrides`` replaces the default per-language count)."""
    overrides = overrides or {}
    if english_count < 0 or translated_count < 0 or any(v < 0 for v in overrides.values()):
        raise ValueError("counts must be non-negative")
    codes = [lang.code for lang in languages]
    if "en" in codes:
        raise ValueError("English belongs to the english_count bucket, not the translated list")
    dupes = {c for c in codes if codes.count(c) > 1}
    if dupes:
        raise ValueError(f"duplicate languages in mix: {sorted(dupes)}")
    unknown = set(overrides) - set(codes)
    if unknown:
        raise ValueError(f"override for language not in mix: {sorted(unknown)}")

    counts = {"en": english_count}
    for code in codes:
        counts[code] = overrides.get(code, translated_count)
    return MixPlan(counts=counts, total=sum(counts.values()))
