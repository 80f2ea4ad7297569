"""Machine-translation sanity checks.

``validate_translation`` compares a source turn against its translation and
raises flags for mechanically decidable problems: placeholder loss, empty
output, wholesale non-translation (too much Latin), wrong script, and
implausible length. Flags are pure functions of (source, translation,
language, thresholds), so reports are reproducible.

Image placeholder tokens are stripped before any letter statistics or length
comparison: the token is English-looking by construction and would otherwise
pollute the Latin ratio of every correctly translated turn that carries one.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from enum import Enum
from types import MappingProxyType
from typing import Mapping

from .languages import LanguageTag
from .scripts import (
    PLACEHOLDER,
    Span,
    classify_script_runs,
    placeholder_count,
    placeholder_spans,
    script_of,
)


class ValidationFlag(Enum):
    PLACEHOLDER_MISMATCH = "PlaceholderMismatch"
    EMPTY_TRANSLATION = "EmptyTranslation"
    EXCESS_LATIN = "ExcessLatin"
    SCRIPT_MISMATCH = "ScriptMismatch"
    LENGTH_ANOMALY = "LengthAnomaly"


@dataclass(frozen=True)
class ValidationThresholds:
    """Tunable limits; the defaults are permissive enough for loanwords."""

    excess_latin_ratio: float = 0.30
    expected_script_min: float = 0.50
    length_ratio_low: float = 0.3
    length_ratio_high: float = 3.0


DEFAULT_THRESHOLDS = ValidationThresholds()


@dataclass(frozen=True)
class ValidationReport:
    flags: frozenset[ValidationFlag]
    latin_ratio: float
    detail: Mapping[ValidationFlag, tuple[Span, ...]] = field(
        default_factory=lambda: MappingProxyType({})
    )

    def to_json(self) -> dict:
        return {
            "flags": sorted(f.value for f in self.flags),
            "latin_ratio": self.latin_ratio,
            "detail": {
                f.value: [[s.start, s.end, s.text] for s in spans]
                for f, spans in sorted(self.detail.items(), key=lambda kv: kv[0].value)
            },
        }

    @classmethod
    def from_json(cls, data: dict) -> "ValidationReport":
        by_value = {f.value: f for f in ValidationFlag}
        return cls(
            flags=frozenset(by_value[v] for v in data["flags"]),
            latin_ratio=data["latin_ratio"],
            detail=MappingProxyType(
                {
                    by_value[v]: tuple(Span(s, e, t) for s, e, t in spans)
                    for v, spans in data.get("detail", {}).items()
                }
            ),
        )


def _is_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def _strip_placeholders(text: str) -> str:
    return text.replace(PLACEHOLDER, "")


def _letter_runs_outside_placeholders(text: str) -> list[tuple[Span, str]]:
    """(span, script) for every script run, trimmed to non-placeholder letter runs."""
    exempt = placeholder_spans(text)
    out = []
    for run in classify_script_runs(text):
        if any(p.start <= run.start and run.end <= p.end for p in exempt):
            continue
        segment = text[run.start : run.end]
        if not any(_is_letter(ch) for ch in segment):
            continue
        out.append((Span(run.start, run.end, segment), run.script))
    return out


def validate_translation(
    source: str,
    translation: str,
    lang: LanguageTag,
    thresholds: ValidationThresholds = DEFAULT_THRESHOLDS,
) -> ValidationReport:
    flags: set[ValidationFlag] = set()
    detail: dict[ValidationFlag, tuple[Span, ...]] = {}

    if placeholder_count(source) != placeholder_count(translation):
        flags.add(ValidationFlag.PLACEHOLDER_MISMATCH)
        detail[ValidationFlag.PLACEHOLDER_MISMATCH] = tuple(placeholder_spans(translation))

    src = _strip_placeholders(source)
    trn = _strip_placeholders(translation)

    src_letters = sum(1 for ch in src if _is_letter(ch))
    letters = [ch for ch in trn if _is_letter(ch)]
    if src_letters > 0 and not letters:
        flags.add(ValidationFlag.EMPTY_TRANSLATION)

    latin_ratio = 0.0
    if letters:
        latin = sum(1 for ch in letters if script_of(ch) == "Latin")
        expected = sum(1 for ch in letters if script_of(ch) in lang.expected_scripts)
        latin_ratio = latin / len(letters)
        if "Latin" not in lang.expected_scripts and latin_ratio > thresholds.excess_latin_ratio:
            flags.add(ValidationFlag.EXCESS_LATIN)
            detail[ValidationFlag.EXCESS_LATIN] = tuple(
                span
                for span, script in _letter_runs_outside_placeholders(translation)
                if script == "Latin"
            )
        if expected / len(letters) < thresholds.expected_script_min:
            flags.add(ValidationFlag.SCRIPT_MISMATCH)
            detail[ValidationFlag.SCRIPT_MISMATCH] = tuple(
                span
                for span, script in _letter_runs_outside_placeholders(translation)
                if script not in lang.expected_scripts
            )

    if len(src) > 0:
        ratio = len(trn) / len(src)
        if not (thresholds.length_ratio_low <= ratio <= thresholds.length_ratio_high):
            flags.add(ValidationFlag.LENGTH_ANOMALY)

    return ValidationReport(
        flags=frozenset(flags),
        latin_ratio=latin_ratio,
        detail=MappingProxyType(detail),
    )
