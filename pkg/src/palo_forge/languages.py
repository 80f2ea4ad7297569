"""Language registry: the ten supported languages and their properties.

Each language carries a resource class (how well it is represented in LLM
pretraining data), the set of Unicode scripts its text is expected to use,
and a display name. Everything downstream (correction rules, validation,
score aggregation) keys off these tags.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class ResourceClass(Enum):
    HIGH = "high"
    LOW = "low"


@dataclass(frozen=True)
class LanguageTag:
    """One supported target language."""

    code: str
    name: str
    resource_class: ResourceClass
    expected_scripts: frozenset[str]

    def __post_init__(self) -> None:
        if not self.expected_scripts:
            raise ValueError(f"language {self.code!r} has no expected scripts")

    @property
    def is_rtl(self) -> bool:
        """True for languages written in the Arabic script (ar, ur)."""
        return "Arabic" in self.expected_scripts


def _tag(code: str, name: str, rc: ResourceClass, *scripts: str) -> LanguageTag:
    # "Common" covers punctuation, digits and whitespace in every language.
    return LanguageTag(code, name, rc, frozenset(scripts) | {"Common"})


# Column order used in score tables: high-resource block then low-resource block.
LANGUAGES: dict[str, LanguageTag] = {
    tag.code: tag
    for tag in (
        _tag("en", "English", ResourceClass.HIGH, "Latin"),
        _tag("zh", "Chinese", ResourceClass.HIGH, "Han"),
        _tag("fr", "French", ResourceClass.HIGH, "Latin"),
        _tag("es", "Spanish", ResourceClass.HIGH, "Latin"),
        _tag("ru", "Russian", ResourceClass.HIGH, "Cyrillic"),
        _tag("ja", "Japanese", ResourceClass.HIGH, "Han", "Hiragana", "Katakana"),
        _tag("ar", "Arabic", ResourceClass.LOW, "Arabic"),
        _tag("hi", "Hindi", ResourceClass.LOW, "Devanagari"),
        _tag("bn", "Bengali", ResourceClass.LOW, "Bengali"),
        _tag("ur", "Urdu", ResourceClass.LOW, "Arabic"),
    )
}

HIGH_RESOURCE: tuple[LanguageTag, ...] = tuple(
    t for t in LANGUAGES.values() if t.resource_class is ResourceClass.HIGH
)
LOW_RESOURCE: tuple[LanguageTag, ...] = tuple(
    t for t in LANGUAGES.values() if t.resource_class is ResourceClass.LOW
)
TARGET_LANGUAGES: tuple[LanguageTag, ...] = tuple(
    t for t in LANGUAGES.values() if t.code != "en"
)


class UnknownLanguageError(ValueError):
    """Raised for a language code outside the supported set of ten."""


def get_language(code: str) -> LanguageTag:
    try:
        return LANGUAGES[code]
    except KeyError:
        raise UnknownLanguageError(
            f"unknown language code {code!r}; expected one of {sorted(LANGUAGES)}"
        ) from None


def parse_language_list(spec: str) -> list[LanguageTag]:
    """Parse a comma-separated code list; ``all`` means the nine non-English targets."""
    if spec.strip() == "all":
        return list(TARGET_LANGUAGES)
    return [get_language(code.strip()) for code in spec.split(",") if code.strip()]
