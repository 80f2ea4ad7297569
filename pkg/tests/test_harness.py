from __future__ import annotations

import json
from decimal import Decimal

import pytest

from palo_forge.backends import BackendKind, MockBackend
from palo_forge.harness import (
    BenchmarkItem,
    BenchmarkShapeError,
    JudgeParseError,
    JudgeVerdict,
    aggregate_table,
    ablation_matrix,
    check_benchmark_shape,
    delta_rows,
    judge_language,
    judge_pairwise,
    load_benchmark,
    load_score_rows,
    parse_judge_verdict,
    render_ablation_table,
    render_score_table,
    save_benchmark,
    score_language,
    score_table_csv,
    translate_benchmark,
)
from palo_forge.languages import parse_language_list

from conftest import make_english_benchmark


def test_benchmark_item_rejects_unknown_category():
    with pytest.raises(ValueError):
        BenchmarkItem("img", "q", "a", "weird", "en")


def test_benchmark_jsonl_round_trip(tmp_path):
    items = make_english_benchmark(images=4, questions=10)
    path = tmp_path / "bench.jsonl"
    save_benchmark(items, path)
    assert load_benchmark(path) == items


def test_benchmark_shape_check():
    check_benchmark_shape(make_english_benchmark())
    with pytest.raises(BenchmarkShapeError):
        check_benchmark_shape(make_english_benchmark(images=24, questions=59))
    with pytest.raises(BenchmarkShapeError):
        check_benchmark_shape(make_english_benchmark(images=23, questions=60))


def test_translate_benchmark_preserves_counts_and_categories():
    bench = make_english_benchmark(images=4, questions=10)
    languages = parse_language_list("fr,hi")
    result = translate_benchmark(bench, languages, MockBackend())
    for code in ("fr", "hi"):
        items = result.items[code]
        assert len(items) == len(bench)
        assert [i.category for i in items] == [i.category for i in bench]
        assert {i.image_id for i in items} == {i.image_id for i in bench}
        check_benchmark_shape(items, expected_images=4, expected_questions=10)


def test_translate_benchmark_routes_flagged_items_to_review():
    bench = make_english_benchmark(images=2, questions=4)
    result = translate_benchmark(bench, parse_language_list("hi,fr"), MockBackend())
    # Mock output stays Latin: every Hindi item is flagged, French items are clean.
    assert not result.is_final("hi")
    assert result.is_final("fr")
    assert len(result.flagged_units["hi"]) == 2 * len(bench)
    unit = result.flagged_units["hi"][0]
    assert unit.record_id.startswith("img-")
    assert unit.report.flags


def test_translate_benchmark_empty():
    result = translate_benchmark([], parse_language_list("hi"), MockBackend())
    assert result.items["hi"] == []
    assert result.is_final("hi")


def test_translate_benchmark_flags_lost_question_mark():
    bench = [
        BenchmarkItem("img-0", "What is shown?", "A cat.", "conversation", "en"),
    ]
    # Scripted outputs: question translated WITHOUT its question mark, then the answer.
    backend = MockBackend(script=["Qué se muestra", "Un gato."])
    result = translate_benchmark(bench, parse_language_list("es"), backend)
    assert not result.is_final("es")
    queued = result.flagged_units["es"]
    assert len(queued) == 1
    assert queued[0].turn_index == 0


def test_translate_benchmark_rejects_non_english_source():
    item = BenchmarkItem("img-0", "q?", "a", "detail", "fr")
    with pytest.raises(Exception):
        translate_benchmark([item], parse_language_list("hi"), MockBackend())


def test_parse_judge_verdict():
    assert parse_judge_verdict("Score-A: 10 Score-B: 5") == JudgeVerdict(
        10, 5, "Score-A: 10 Score-B: 5"
    )
    with pytest.raises(JudgeParseError):
        parse_judge_verdict("great answer!")
    with pytest.raises(JudgeParseError):
        parse_judge_verdict("Score-A: 0 Score-B: 5")
    with pytest.raises(JudgeParseError):
        parse_judge_verdict("Score-A: 11 Score-B: 5")


def _item(lang="fr"):
    return BenchmarkItem("img-0", "What is this?", "A reference answer.", "detail", lang)


def test_judge_pairwise_default_mock_verdict():
    verdict = judge_pairwise(_item(), "candidate answer", MockBackend(BackendKind.JUDGE))
    assert (verdict.reference_score, verdict.candidate_score) == (8, 8)


def test_judge_pairwise_retries_parse_error_once():
    backend = MockBackend(BackendKind.JUDGE, script=["garbled", "Score-A: 9 Score-B: 4"])
    verdict = judge_pairwise(_item(), "cand", backend)
    assert (verdict.reference_score, verdict.candidate_score) == (9, 4)

    twice_bad = MockBackend(BackendKind.JUDGE, script=["nope", "still nope"])
    with pytest.raises(JudgeParseError):
        judge_pairwise(_item(), "cand", twice_bad)


def test_judge_language_accounts_for_failures():
    items = [_item() for _ in range(3)]
    answers = {("img-0", 0): "a", ("img-0", 2): "c"}  # no answer for question 1
    backend = MockBackend(
        BackendKind.JUDGE, script=["broken", "also broken", "Score-A: 8 Score-B: 6"]
    )
    outcome = judge_language(items, answers, backend)
    assert outcome.attempted == 3
    assert len(outcome.verdicts) == 1
    assert len(outcome.failures) == 2
    assert outcome.attempted - len(outcome.failures) == len(outcome.verdicts)


def test_judge_language_parallel_matches_serial():
    items = [_item() for _ in range(12)]
    answers = {("img-0", i): f"answer {i}" for i in range(12)}
    serial = judge_language(items, answers, MockBackend(BackendKind.JUDGE))
    parallel = judge_language(items, answers, MockBackend(BackendKind.JUDGE), parallelism=4)
    assert parallel.verdicts == serial.verdicts
    assert parallel.failures == serial.failures
    assert score_language(parallel.verdicts) == score_language(serial.verdicts)
    with pytest.raises(ValueError):
        judge_language(items, answers, MockBackend(BackendKind.JUDGE), parallelism=0)


def test_score_language_symmetry_and_hand_arithmetic():
    eights = [JudgeVerdict(8, 8)] * 5
    assert score_language(eights) == Decimal("100.0")
    pair = [JudgeVerdict(8, 6), JudgeVerdict(8, 8)]
    assert score_language(pair) == Decimal("87.5")
    worst = [JudgeVerdict(10, 1)] * 60
    assert score_language(worst) == Decimal("10.0")


def test_score_language_scale_consistency():
    verdicts = [JudgeVerdict(7, 5), JudgeVerdict(9, 8), JudgeVerdict(4, 4)]
    doubled = verdicts + verdicts
    assert score_language(verdicts) == score_language(doubled)


def test_score_language_rejects_empty():
    with pytest.raises(ValueError):
        score_language([])


LLAVA_7B = {
    "en": "67.9", "zh": "55.7", "fr": "62.4", "es": "64.5", "ru": "55.3",
    "ja": "59.2", "ar": "38.9", "hi": "29.4", "bn": "13.9", "ur": "21.8",
}
PALO_7B = {
    "en": "64.2", "zh": "55.7", "fr": "58.3", "es": "61.0", "ru": "57.4",
    "ja": "57.5", "ar": "57.8", "hi": "57.6", "bn": "51.7", "ur": "55.3",
}


def test_aggregate_table_published_7b_rows():
    llava = aggregate_table(LLAVA_7B, "LLaVA-7B")
    assert (llava.avg_high, llava.avg_low, llava.avg_all) == (
        Decimal("60.8"), Decimal("26.0"), Decimal("46.9")
    )
    palo = aggregate_table(PALO_7B, "PALO-7B")
    assert (palo.avg_high, palo.avg_low, palo.avg_all) == (
        Decimal("59.0"), Decimal("55.6"), Decimal("57.7")
    )


def test_aggregate_table_zero_row_and_missing_language():
    zero = aggregate_table({code: "0.0" for code in LLAVA_7B}, "zero")
    assert (zero.avg_high, zero.avg_low, zero.avg_all) == (
        Decimal("0.0"), Decimal("0.0"), Decimal("0.0")
    )
    partial = dict(LLAVA_7B)
    del partial["ur"]
    with pytest.raises(ValueError):
        aggregate_table(partial, "partial")


def test_delta_rows_published_values_and_identity():
    baseline = aggregate_table(LLAVA_7B, "LLaVA-7B")
    model = aggregate_table(PALO_7B, "PALO-7B")
    delta = delta_rows(baseline, model)
    assert delta.deltas["hi"] == Decimal("28.2")
    assert delta.avg_all == Decimal("10.8")
    same = delta_rows(baseline, baseline)
    assert all(v == Decimal("0.0") for v in same.deltas.values())
    assert same.avg_all == Decimal("0.0")


def test_ablation_matrix_trivial_row_and_validation():
    rows = ablation_matrix([("uniform", None, {code: "50.0" for code in LLAVA_7B})])
    assert rows[0].avg == Decimal("50.0")
    with pytest.raises(ValueError):
        ablation_matrix([("bad", None, {"en": "1.0"})])


def test_render_score_table_layout():
    baseline = aggregate_table(LLAVA_7B, "LLaVA-7B")
    model = aggregate_table(PALO_7B, "PALO-7B")
    text = render_score_table([baseline, model], [delta_rows(baseline, model)])
    lines = text.splitlines()
    assert lines[0].split()[:3] == ["Model", "en", "zh"]
    assert "Avg.H" in lines[0] and "Avg." in lines[0]
    assert any(line.startswith("Δ vs LLaVA-7B") and "+28.2" in line for line in lines)


def test_render_ablation_marks_diagonal():
    rows = ablation_matrix(
        [("150K-Bengali", "bn", {code: "50.0" for code in LLAVA_7B})]
    )
    text = render_ablation_table(rows)
    assert "50.0*" in text
    assert text.count("*") == 1


def test_score_table_csv_shape():
    row = aggregate_table(LLAVA_7B, "LLaVA-7B")
    csv_text = score_table_csv([row])
    header, data = csv_text.strip().splitlines()
    assert header.split(",")[0] == "model"
    assert len(header.split(",")) == len(data.split(",")) == 14


def test_load_score_rows_keeps_decimal_exactness(tmp_path):
    # 57.65 is not representable in binary floating point; the loader must
    # parse numbers as exact decimals for half-up rounding to hold.
    payload = [{"model_id": "PALO-7B", "scores": {k: float(v) for k, v in PALO_7B.items()}}]
    path = tmp_path / "scores.json"
    path.write_text(json.dumps(payload), encoding="utf-8")
    (row,) = load_score_rows(path)
    assert row.avg_all == Decimal("57.7")


def test_judge_prompt_contains_all_parts():
    from palo_forge.harness import build_judge_prompt

    messages = build_judge_prompt(_item("hi"), "my candidate")
    user = messages[1]["content"]
    assert "What is this?" in user
    assert "A reference answer." in user
    assert "my candidate" in user
    assert "Hindi" in user
