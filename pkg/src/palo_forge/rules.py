"""Per-language automated correction rules for machine-translated text.

Each language has an ordered list of small, mechanical transforms targeting
punctuation and spacing mistakes commonly introduced by LLM translation.
Grammar-level problems (gender agreement, nunnation, verb/noun confusion)
are deliberately not handled here: they are surfaced to human reviewers as
issue tags instead.

Every transform must be idempotent and must never change the number of image
placeholder tokens in the text; ``apply_corrections`` enforces the second
property at runtime so misbehaving user-configured rules fail loudly.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .languages import LANGUAGES, LanguageTag, get_language
from .scripts import placeholder_count, script_of

# Horizontal whitespace that may wrongly precede a punctuation mark.
_HSPACE = " \t  "


class RuleError(Exception):
    """Base class for rule-engine failures."""


class RuleSafetyError(RuleError):
    """A rule changed the number of image placeholder tokens."""


class RuleConvergenceError(RuleError):
    """The rule list did not reach a fixpoint (rules fight each other)."""


@dataclass(frozen=True)
class CorrectionRule:
    rule_id: str
    lang_code: str
    description: str
    transform: Callable[[str], str]
    enabled: bool = field(default=True, compare=False)


def _is_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def _tidy_mark_spacing(marks: str) -> Callable[[str], str]:
    """Remove horizontal space before each mark; insert one space after a mark
    directly followed by a letter. Never touches combining sequences (the
    character after a mark must be a letter, so marks followed by combining
    marks are left alone)."""
    strip_before = re.compile(f"[{_HSPACE}]+([{re.escape(marks)}])")

    def transform(text: str) -> str:
        text = strip_before.sub(r"\1", text)
        out = []
        last = len(text) - 1
        for i, ch in enumerate(text):
            out.append(ch)
            if ch in marks and i < last and _is_letter(text[i + 1]):
                out.append(" ")
        return "".join(out)

    return transform


_ASCII_TO_FULLWIDTH = {",": "，", ".": "。", "?": "？", "!": "！", ":": "："}


def _fullwidth_punct(cjk_scripts: frozenset[str]) -> Callable[[str], str]:
    """Map ASCII punctuation to its full-width form when it sits between CJK
    characters (or after a CJK character at end of text)."""

    def transform(text: str) -> str:
        out = list(text)
        last = len(text) - 1
        for i, ch in enumerate(text):
            if ch not in _ASCII_TO_FULLWIDTH:
                continue
            prev_cjk = i > 0 and script_of(text[i - 1]) in cjk_scripts
            next_cjk = i == last or script_of(text[i + 1]) in cjk_scripts
            if prev_cjk and next_cjk:
                out[i] = _ASCII_TO_FULLWIDTH[ch]
        return "".join(out)

    return transform


def _danda(text: str) -> str:
    """Replace a sentence-final ASCII period after Devanagari text with the
    danda. Ellipses and decimal points are untouched."""
    out = list(text)
    last = len(text) - 1
    for i, ch in enumerate(text):
        if ch != ".":
            continue
        prev_dev = i > 0 and script_of(text[i - 1]) == "Devanagari"
        sentence_final = i == last or text[i + 1].isspace()
        if prev_dev and sentence_final:
            out[i] = "।"
    return "".join(out)


def _strip_space_before(marks: str) -> Callable[[str], str]:
    pattern = re.compile(f"[{_HSPACE}]+([{re.escape(marks)}])")
    return lambda text: pattern.sub(r"\1", text)


def _narrow_space_before_tall_punct(text: str) -> str:
    # French typography: narrow no-break space before ? ! ; : inside a sentence.
    return re.sub(f"(?<=\\S)[{_HSPACE}]*([?!;:])", " \\1", text)


_ARABIC_COMMA_MARKS = "،؛؟"
_CJK_ZH = frozenset({"Han"})
_CJK_JA = frozenset({"Han", "Hiragana", "Katakana"})


def _default_rules() -> dict[str, tuple[CorrectionRule, ...]]:
    rules: dict[str, list[CorrectionRule]] = {code: [] for code in LANGUAGES}

    for code, stops in (("ar", "."), ("ur", ".۔")):
        rules[code] = [
            CorrectionRule(
                f"{code}.comma_spacing", code,
                "no space before ،؛؟ and one space after",
                _tidy_mark_spacing(_ARABIC_COMMA_MARKS),
            ),
            CorrectionRule(
                f"{code}.period_spacing", code,
                "no space before the full stop and one space after",
                _tidy_mark_spacing(stops),
            ),
        ]

    rules["zh"] = [
        CorrectionRule(
            "zh.fullwidth_punct", "zh",
            "ASCII , . ? ! : between CJK characters become full-width",
            _fullwidth_punct(_CJK_ZH),
        ),
    ]
    rules["ja"] = [
        CorrectionRule(
            "ja.fullwidth_punct", "ja",
            "ASCII , . ? ! : between Japanese characters become full-width",
            _fullwidth_punct(_CJK_JA),
        ),
    ]
    rules["hi"] = [
        CorrectionRule(
            "hi.danda", "hi",
            "sentence-final period after Devanagari becomes the danda",
            _danda,
        ),
    ]
    for code in ("ru", "fr", "es"):
        rules[code].append(
            CorrectionRule(
                f"{code}.space_before_punct", code,
                "no space before comma or period",
                _strip_space_before(",."),
            )
        )
    # Aggressive on URLs and ratios, so shipped disabled.
    rules["fr"].append(
        CorrectionRule(
            "fr.narrow_space_tall_punct", "fr",
            "narrow no-break space before ? ! ; :",
            _narrow_space_before_tall_punct,
            enabled=False,
        )
    )
    # English is the source language: nothing to post-edit.
    rules["en"] = []
    return {code: tuple(rs) for code, rs in rules.items()}


DEFAULT_RULES: dict[str, tuple[CorrectionRule, ...]] = _default_rules()

_MAX_PASSES = 16


def rules_for(lang: LanguageTag, table: dict[str, tuple[CorrectionRule, ...]] | None = None) -> tuple[CorrectionRule, ...]:
    table = table if table is not None else DEFAULT_RULES
    return tuple(r for r in table.get(lang.code, ()) if r.enabled)


def apply_corrections(
    text: str,
    lang: LanguageTag,
    rule_table: dict[str, tuple[CorrectionRule, ...]] | None = None,
) -> tuple[str, list[str]]:
    """Apply the language's ordered rule list to a fixpoint.

    Returns the corrected text and the ids of rules that changed it, in
    first-application order.
    """
    rules = rules_for(lang, rule_table)
    applied: list[str] = []
    before_tokens = placeholder_count(text)
    for _ in range(_MAX_PASSES):
        changed = False
        for rule in rules:
            new = rule.transform(text)
            if new != text:
                if placeholder_count(new) != before_tokens:
                    raise RuleSafetyError(
                        f"rule {rule.rule_id} changed the image placeholder count"
                    )
                if rule.rule_id not in applied:
                    applied.append(rule.rule_id)
                text = new
                changed = True
        if not changed:
            return text, applied
    raise RuleConvergenceError(
        f"rules for {lang.code} did not converge within {_MAX_PASSES} passes"
    )


def load_rules_config(path: str | Path) -> dict[str, tuple[CorrectionRule, ...]]:
    """Load a declarative rule table.

    Format: JSON object mapping language code to an ordered list of
    ``{"rule_id", "pattern", "replacement", "description"?, "enabled"?}``.
    Patterns are Python regular expressions applied with ``re.sub``.
    Loaded tables replace the built-ins for the languages they mention and
    inherit the built-ins everywhere else.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    table = dict(DEFAULT_RULES)
    for code, entries in raw.items():
        lang = get_language(code)
        loaded = []
        for entry in entries:
            pattern = re.compile(entry["pattern"])
            replacement = entry["replacement"]
            loaded.append(
                CorrectionRule(
                    entry["rule_id"],
                    lang.code,
                    entry.get("description", ""),
                    lambda t, _p=pattern, _r=replacement: _p.sub(_r, t),
                    enabled=entry.get("enabled", True),
                )
            )
        table[code] = tuple(loaded)
    return table
