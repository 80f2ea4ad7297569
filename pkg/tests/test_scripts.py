from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palo_forge.languages import get_language
from palo_forge.scripts import (
    Span,
    classify_script_runs,
    find_untranslated_segments,
    load_whitelist,
    placeholder_count,
    placeholder_spans,
    script_of,
)


def test_empty_text_has_no_runs():
    assert classify_script_runs("") == []


def test_devanagari_word_is_single_run():
    runs = classify_script_runs("नमस्ते")
    assert len(runs) == 1
    assert runs[0].script == "Devanagari"
    assert (runs[0].start, runs[0].end) == (0, 6)


def test_mixed_latin_arabic_example():
    assert [r.script for r in classify_script_runs("hello دنیا")] == [
        "Latin",
        "Common",
        "Arabic",
    ]


@pytest.mark.parametrize(
    "char,script",
    [
        ("a", "Latin"),
        ("я", "Cyrillic"),
        ("ب", "Arabic"),
        ("好", "Han"),
        ("あ", "Hiragana"),
        ("カ", "Katakana"),
        ("অ", "Bengali"),
        (" ", "Common"),
        ("7", "Common"),
        ("।", "Common"),  # danda is shared Indic punctuation
        ("،", "Common"),  # Arabic comma is shared punctuation
        ("́", "Inherited"),
    ],
)
def test_script_property_samples(char: str, script: str):
    assert script_of(char) == script


def test_combining_mark_joins_preceding_run():
    runs = classify_script_runs("és")
    assert len(runs) == 1 and runs[0].script == "Latin"


def test_astral_plane_codepoints_classify():
    assert script_of("\U00013000") == "Egyptian_Hieroglyphs"
    assert script_of("\U00010330") == "Gothic"
    runs = classify_script_runs("a\U00013000b")
    assert [r.script for r in runs] == ["Latin", "Egyptian_Hieroglyphs", "Latin"]
    # Runs are indexed in codepoints: the astral character counts as one.
    assert [(r.start, r.end) for r in runs] == [(0, 1), (1, 2), (2, 3)]


def test_leading_combining_mark_counts_as_common():
    runs = classify_script_runs("́a")
    assert [r.script for r in runs] == ["Common", "Latin"]


_any_text = st.text(alphabet=st.characters(blacklist_categories=("Cs",)), max_size=60)


@settings(max_examples=300)
@given(_any_text)
def test_runs_partition_text(text: str):
    runs = classify_script_runs(text)
    assert sum(r.end - r.start for r in runs) == len(text)
    position = 0
    previous = None
    for run in runs:
        assert run.start == position and run.end > run.start
        assert run.script != previous
        previous = run.script
        position = run.end
    assert position == len(text)


def test_untranslated_segment_found_in_hindi():
    spans = find_untranslated_segments("यह image अच्छी है", get_language("hi"))
    assert spans == [Span(3, 8, "image")]


def test_placeholder_token_is_exempt():
    assert find_untranslated_segments("यह <image> अच्छी है", get_language("hi")) == []


def test_whitelisted_acronym_is_exempt():
    assert find_untranslated_segments("مرحبا GPU", get_language("ar"), {"GPU"}) == []
    assert find_untranslated_segments("مرحبا gpu", get_language("ar"), {"GPU"}) == []


def test_non_whitelisted_word_is_reported():
    spans = find_untranslated_segments("مرحبا definitely بكم", get_language("ar"))
    assert [s.text for s in spans] == ["definitely"]


def test_english_target_is_a_usage_error():
    with pytest.raises(ValueError):
        find_untranslated_segments("anything", get_language("en"))


def test_latin_script_targets_have_no_untranslated_concept():
    assert find_untranslated_segments("bonjour hello world", get_language("fr")) == []


def test_clean_target_script_text_yields_nothing():
    assert find_untranslated_segments("यह अच्छी तस्वीर है।", get_language("hi")) == []


def test_placeholder_helpers():
    text = "a <image> b <image>"
    assert placeholder_count(text) == 2
    assert [s.start for s in placeholder_spans(text)] == [2, 12]


def test_load_whitelist(tmp_path):
    path = tmp_path / "terms.txt"
    path.write_text("GPU\n# comment\n\nRGB\n", encoding="utf-8")
    assert load_whitelist(path) == frozenset({"GPU", "RGB"})
