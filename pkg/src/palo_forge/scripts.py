"""Unicode script analysis: per-codepoint script lookup, run segmentation,
and detection of untranslated Latin segments in non-Latin-script text.

Script values come from the Unicode Script property (via the ``regex``
module's property tables). Punctuation, digits and whitespace classify as
``Common``; combining marks (``Inherited``) are folded into the run of the
preceding character so that runs always partition the text.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import regex

from .languages import LanguageTag

PLACEHOLDER = "<image>"

# All Unicode script property values through Unicode 16. Unknown names are
# skipped at import so older regex builds degrade gracefully; codepoints whose
# script is not recognized classify as "Unknown".
_SCRIPT_NAMES = """
Common Latin Han Arabic Cyrillic Devanagari Bengali Hiragana Katakana Inherited
Greek Armenian Hebrew Syriac Thaana Gurmukhi Gujarati Oriya Tamil Telugu Kannada
Malayalam Sinhala Thai Lao Tibetan Myanmar Georgian Hangul Ethiopic Cherokee
Canadian_Aboriginal Ogham Runic Khmer Mongolian Bopomofo Yi Old_Italic Gothic
Deseret Tagalog Hanunoo Buhid Tagbanwa Limbu Tai_Le Linear_B Ugaritic Shavian
Osmanya Cypriot Braille Buginese Coptic New_Tai_Lue Glagolitic Tifinagh
Syloti_Nagri Old_Persian Kharoshthi Balinese Cuneiform Phoenician Phags_Pa Nko
Sundanese Lepcha Ol_Chiki Vai Saurashtra Kayah_Li Rejang Lycian Carian Lydian
Cham Tai_Tham Tai_Viet Avestan Egyptian_Hieroglyphs Samaritan Lisu Bamum
Javanese Meetei_Mayek Imperial_Aramaic Old_South_Arabian Inscriptional_Parthian
Inscriptional_Pahlavi Old_Turkic Kaithi Batak Brahmi Mandaic Chakma
Meroitic_Cursive Meroitic_Hieroglyphs Miao Sharada Sora_Sompeng Takri
Caucasian_Albanian Bassa_Vah Duployan Elbasan Grantha Pahawh_Hmong Khojki
Linear_A Mahajani Manichaean Mende_Kikakui Modi Mro Old_North_Arabian Nabataean
Palmyrene Pau_Cin_Hau Old_Permic Psalter_Pahlavi Siddham Khudawadi Tirhuta
Warang_Citi Ahom Anatolian_Hieroglyphs Hatran Multani Old_Hungarian SignWriting
Adlam Bhaiksuki Marchen Newa Osage Tangut Masaram_Gondi Nushu Soyombo
Zanabazar_Square Dogra Gunjala_Gondi Makasar Medefaidrin Hanifi_Rohingya
Sogdian Old_Sogdian Elymaic Nandinagari Nyiakeng_Puachue_Hmong Wancho
Chorasmian Dives_Akuru Khitan_Small_Script Yezidi Cypro_Minoan Old_Uyghur
Tangsa Toto Vithkuqi Kawi Nag_Mundari Garay Gurung_Khema Kirat_Rai Ol_Onal
Sunuwar Todhri Tulu_Tigalari
""".split()


def _build_matcher() -> regex.Pattern:
    supported = []
    for name in _SCRIPT_NAMES:
        try:
            regex.compile(rf"\p{{Script={name}}}")
        except regex.error:
            continue
        supported.append(name)
    return regex.compile("|".join(rf"(?P<{n}>\p{{Script={n}}})" for n in supported))

_MATCHER = _build_matcher()
_SCRIPT_CACHE: dict[str, str] = {}


def script_of(char: str) -> str:
    """Unicode Script property value of a single character."""
    cached = _SCRIPT_CACHE.get(char)
    if cached is not None:
        return cached
    m = _MATCHER.match(char)
    script = m.lastgroup if m else "Unknown"
    _SCRIPT_CACHE[char] = script
    return script


@dataclass(frozen=True)
class ScriptRun:
    """Half-open span [start, end) of codepoints sharing one script."""

    start: int
    end: int
    script: str


def classify_script_runs(text: str) -> list[ScriptRun]:
    """Partition ``text`` into maximal runs of a single script.

    Combining marks continue the preceding run; a leading combining mark
    (nothing to inherit from) counts as Common.
    """
    runs: list[ScriptRun] = []
    current: str | None = None
    start = 0
    for i, ch in enumerate(text):
        script = script_of(ch)
        if script == "Inherited":
            script = current if current is not None else "Common"
        if script != current:
            if current is not None:
                runs.append(ScriptRun(start, i, current))
            current = script
            start = i
    if current is not None:
        runs.append(ScriptRun(start, len(text), current))
    return runs


@dataclass(frozen=True)
class Span:
    """A flagged slice of text, with the slice content for display."""

    start: int
    end: int
    text: str


def placeholder_spans(text: str) -> list[Span]:
    """Spans of every literal image placeholder token."""
    spans = []
    pos = 0
    while True:
        i = text.find(PLACEHOLDER, pos)
        if i < 0:
            return spans
        spans.append(Span(i, i + len(PLACEHOLDER), PLACEHOLDER))
        pos = i + len(PLACEHOLDER)


def placeholder_count(text: str) -> int:
    return text.count(PLACEHOLDER)


def find_untranslated_segments(
    text: str, lang: LanguageTag, whitelist: frozenset[str] | set[str] = frozenset()
) -> list[Span]:
    """Maximal Latin-script runs that look like leftover source-language words.

    Runs inside an image placeholder token are exempt, as are whitelisted
    terms (matched case-insensitively). Languages whose expected scripts
    include Latin have no notion of an untranslated Latin segment, so the
    result is always empty for them. English is not a valid target.
    """
    if lang.code == "en":
        raise ValueError("untranslated-segment detection is undefined for English targets")
    if "Latin" in lang.expected_scripts:
        return []
    folded = {term.casefold() for term in whitelist}
    exempt = placeholder_spans(text)
    out = []
    for run in classify_script_runs(text):
        if run.script != "Latin":
            continue
        if any(p.start <= run.start and run.end <= p.end for p in exempt):
            continue
        word = text[run.start : run.end]
        if word.casefold() in folded:
            continue
        out.append(Span(run.start, run.end, word))
    return out


def load_whitelist(path: str | Path) -> frozenset[str]:
    """Read a whitelist file: one term per line, blank lines and # comments ignored."""
    terms = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        term = line.strip()
        if term and not term.startswith("#"):
            terms.add(term)
    return frozenset(terms)
