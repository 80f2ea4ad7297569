from __future__ import annotations

import json
import threading

import pytest

from palo_forge.backends import BackendHTTPError, BackendProtocolError, MockBackend
from palo_forge.dataset import InstructionRecord, Speaker, Turn, serialize_instruct_dataset
from palo_forge.languages import get_language, parse_language_list
from palo_forge.pipeline import (
    Checkpoint,
    CheckpointMismatchError,
    CorpusExportError,
    MergeReferenceError,
    RetryPolicy,
    TranslationUnit,
    UnitStatus,
    export_finetune_corpus,
    load_checkpoint,
    mask_placeholders,
    merge_corrections,
    read_unit_ledger,
    run_mass_translation,
    sample_for_review,
    save_checkpoint,
    translate_record,
    translate_text,
    unmask_placeholders,
    write_unit_ledger,
)
from palo_forge.validation import ValidationFlag

from conftest import FlakyBackend, SentinelDroppingBackend, make_record

HI = get_language("hi")
FR = get_language("fr")
TARGETS = parse_language_list("all")


def test_mask_round_trip():
    text = "look at <image> now"
    assert unmask_placeholders(mask_placeholders(text)) == text
    assert "<image>" not in mask_placeholders(text)


def test_translate_record_with_mock_prefixes_and_keeps_placeholder(mock_translator):
    record = make_record(0)
    outcome = translate_record(record, HI, mock_translator)
    assert outcome.failures == []
    assert outcome.record is not None
    assert outcome.record.id == record.id
    assert outcome.record.image == record.image
    for original, translated in zip(record.turns, outcome.record.turns):
        assert translated.text == f"[hi] {original.text}"
        assert translated.text.count("<image>") == original.text.count("<image>")


def test_translate_record_rejects_english(mock_translator):
    with pytest.raises(ValueError):
        translate_record(make_record(0), get_language("en"), mock_translator)


def test_mock_output_is_unflagged_for_latin_targets(mock_translator):
    outcome = translate_record(make_record(0), FR, mock_translator)
    assert all(u.status is UnitStatus.MACHINE for u in outcome.units)


def test_mock_output_is_flagged_for_non_latin_targets(mock_translator):
    outcome = translate_record(make_record(0), HI, mock_translator)
    assert all(u.status is UnitStatus.FLAGGED for u in outcome.units)
    assert all(ValidationFlag.EXCESS_LATIN in u.report.flags for u in outcome.units)


def test_empty_turn_translates_to_empty_without_backend_call(mock_translator):
    record = InstructionRecord(
        "r", None, (Turn(Speaker.HUMAN, ""), Turn(Speaker.ASSISTANT, ""))
    )
    outcome = translate_record(record, FR, mock_translator)
    assert mock_translator.call_count == 0
    assert [u.machine_text for u in outcome.units] == ["", ""]
    assert all(u.status is UnitStatus.MACHINE for u in outcome.units)


def test_sentinel_dropping_backend_flags_placeholder_mismatch(mock_translator):
    outcome = translate_record(make_record(0), FR, SentinelDroppingBackend(mock_translator))
    flagged = [u for u in outcome.units if ValidationFlag.PLACEHOLDER_MISMATCH in u.report.flags]
    assert len(flagged) == 1
    assert flagged[0].status is UnitStatus.FLAGGED


def test_backend_failure_records_unit_failure_and_drops_record(mock_translator):
    class AlwaysDown:
        descriptor = mock_translator.descriptor

        def complete(self, messages):
            raise BackendHTTPError(503, "down")

    retry = RetryPolicy(sleep=lambda s: None)
    outcome = translate_record(make_record(0), FR, AlwaysDown(), retry=retry)
    assert outcome.record is None
    assert len(outcome.failures) == len(make_record(0).turns)
    assert outcome.units == []


def test_retry_policy_recovers_from_transient_failures(mock_translator):
    flaky = FlakyBackend(mock_translator, failures=2)
    retry = RetryPolicy(sleep=lambda s: None)
    text = translate_text("hello", FR, flaky, retry=retry)
    assert text == "[fr] hello"
    assert flaky.attempts == 3


def test_retry_policy_gives_up_after_max_attempts(mock_translator):
    flaky = FlakyBackend(mock_translator, failures=99)
    retry = RetryPolicy(max_attempts=5, sleep=lambda s: None)
    with pytest.raises(BackendHTTPError):
        translate_text("hello", FR, flaky, retry=retry)
    assert flaky.attempts == 5


def test_retry_policy_does_not_retry_permanent_errors(mock_translator):
    class Broken:
        descriptor = mock_translator.descriptor

        def __init__(self):
            self.attempts = 0

        def complete(self, messages):
            self.attempts += 1
            raise BackendProtocolError("garbage")

    broken = Broken()
    with pytest.raises(BackendProtocolError):
        translate_text("hello", FR, broken, retry=RetryPolicy(sleep=lambda s: None))
    assert broken.attempts == 1


def test_checkpoint_save_load_round_trip(tmp_path):
    checkpoint = Checkpoint("fp", "mock", {"k": "v"}, {("r", 0, "hi")})
    path = tmp_path / "run.checkpoint"
    save_checkpoint(checkpoint, path)
    loaded = load_checkpoint(path)
    assert loaded == checkpoint
    assert not list(tmp_path.glob("*.tmp"))


def _run(records, backend, **kwargs):
    return run_mass_translation(records, TARGETS, backend, **kwargs)


def _result_bytes(result) -> bytes:
    blob = b""
    for code in sorted(result.datasets):
        blob += serialize_instruct_dataset(result.datasets[code])
        blob += json.dumps(
            [u.to_json() for u in result.units[code]], ensure_ascii=False
        ).encode("utf-8")
    return blob


def test_mass_translation_translates_every_language(fixture_records, mock_translator):
    result = _run(fixture_records[:5], mock_translator)
    assert set(result.datasets) == {t.code for t in TARGETS}
    for code, translated in result.datasets.items():
        assert [r.id for r in translated] == [r.id for r in fixture_records[:5]]
        assert result.summary[code].failed == 0


def test_mass_translation_deterministic_across_parallelism(fixture_records):
    low = _run(fixture_records[:8], MockBackend(), parallelism=1)
    high = _run(fixture_records[:8], MockBackend(), parallelism=8)
    assert _result_bytes(low) == _result_bytes(high)


def test_mass_translation_rerun_is_full_cache_hit(fixture_records, tmp_path):
    path = tmp_path / "run.checkpoint"
    first_backend = MockBackend()
    first = _run(fixture_records[:6], first_backend, checkpoint_path=path)
    second_backend = MockBackend()
    second = _run(fixture_records[:6], second_backend, checkpoint_path=path)
    assert second_backend.call_count == 0
    assert second.backend_calls == 0
    assert _result_bytes(first) == _result_bytes(second)


def test_checkpoint_fingerprint_mismatch_refuses_resume(fixture_records, tmp_path):
    path = tmp_path / "run.checkpoint"
    _run(fixture_records[:3], MockBackend(), checkpoint_path=path)
    with pytest.raises(CheckpointMismatchError):
        _run(fixture_records[:4], MockBackend(), checkpoint_path=path)


class KillSwitch(Exception):
    pass


class KillingBackend:
    """Passes calls through until the budget is exhausted, then raises an
    exception the pipeline does not treat as a backend failure (simulating a
    process kill mid-run)."""

    def __init__(self, inner, budget: int):
        self.descriptor = inner.descriptor
        self._inner = inner
        self._budget = budget
        self._lock = threading.Lock()

    def complete(self, messages):
        with self._lock:
            if self._budget <= 0:
                raise KillSwitch()
            self._budget -= 1
        return self._inner.complete(messages)


def test_kill_and_resume_matches_uninterrupted_run(fixture_records, tmp_path):
    records = fixture_records[:10]
    baseline = _run(records, MockBackend())

    path = tmp_path / "run.checkpoint"
    with pytest.raises(KillSwitch):
        _run(records, KillingBackend(MockBackend(), budget=25), checkpoint_path=path)
    cached = len(load_checkpoint(path).cache)
    assert cached > 0

    resumed_backend = MockBackend()
    resumed = _run(records, resumed_backend, checkpoint_path=path)
    assert _result_bytes(resumed) == _result_bytes(baseline)
    # Zero duplicate calls for cached triples: resume only requests the rest.
    unique_texts = {
        (turn.text, lang.code)
        for lang in TARGETS
        for record in records
        for turn in record.turns
        if turn.text
    }
    assert resumed_backend.call_count == len(unique_texts) - cached


def test_conservation_failed_records_are_reported_not_silent(fixture_records):
    # Assistant turn: carries no placeholder, so the prompt content matches verbatim.
    poison = fixture_records[3].turns[1].text

    class PoisonBackend:
        def __init__(self):
            self._inner = MockBackend()
            self.descriptor = self._inner.descriptor

        def complete(self, messages):
            if poison in messages[-1]["content"]:
                raise BackendHTTPError(500, "poisoned")
            return self._inner.complete(messages)

    result = run_mass_translation(
        fixture_records[:5],
        [FR],
        PoisonBackend(),
        retry=RetryPolicy(max_attempts=2, sleep=lambda s: None),
    )
    summary = result.summary["fr"]
    assert summary.failed > 0
    assert summary.translated == 5 - summary.failed
    assert len(result.datasets["fr"]) == summary.translated
    assert result.failures


def test_sample_for_review_is_deterministic(fixture_records):
    first = sample_for_review(fixture_records, 10, seed=42)
    second = sample_for_review(fixture_records, 10, seed=42)
    other = sample_for_review(fixture_records, 10, seed=43)
    assert first == second
    assert len(set(first)) == 10
    assert first != other
    in_order = [r.id for r in fixture_records if r.id in set(first)]
    assert first == in_order


def test_sample_for_review_sizes():
    ids = [f"r{i}" for i in range(5)]
    assert sample_for_review(ids, 0) == []
    assert sorted(sample_for_review(ids, 5)) == sorted(ids)
    with pytest.raises(ValueError):
        sample_for_review(ids, 6)
    with pytest.raises(ValueError):
        sample_for_review(["a", "a"], 1)


def test_sample_for_review_stratified_by_flag():
    ids = [f"r{i}" for i in range(100)]
    flagged = {f"r{i}" for i in range(30)}
    sample = sample_for_review(ids, 10, seed=7, flagged_ids=flagged)
    assert len(sample) == 10
    assert sum(1 for i in sample if i in flagged) == 3


def _unit(record, turn_index, lang_code, corrected=None, status=UnitStatus.MACHINE):
    from palo_forge.validation import validate_translation

    source = record.turns[turn_index].text
    machine = f"[{lang_code}] {source}"
    return TranslationUnit(
        record_id=record.id,
        turn_index=turn_index,
        lang_code=lang_code,
        source_text=source,
        machine_text=machine,
        report=validate_translation(source, machine, get_language(lang_code)),
        status=status,
        corrected_text=corrected,
    )


def test_merge_applies_only_reviewed_units(fixture_records):
    records = fixture_records[:3]
    reviewed = _unit(
        records[1], 0, "fr", corrected="texte corrigé <image>", status=UnitStatus.REVIEWED
    )
    untouched = _unit(records[2], 1, "fr")
    merged = merge_corrections(records, [reviewed, untouched])
    assert merged[1].turns[0].text == "texte corrigé <image>"
    assert merged[2].turns[1].text == records[2].turns[1].text
    assert merged[0] == records[0]


def test_merge_is_idempotent(fixture_records):
    records = fixture_records[:3]
    unit = _unit(records[0], 1, "fr", corrected="déjà vu", status=UnitStatus.ACCEPTED)
    once = merge_corrections(records, [unit])
    twice = merge_corrections(once, [unit])
    assert once == twice


def test_merge_rejects_dangling_references(fixture_records):
    records = fixture_records[:2]
    ghost = _unit(records[0], 0, "fr")
    ghost = TranslationUnit(
        record_id="missing",
        turn_index=0,
        lang_code="fr",
        source_text=ghost.source_text,
        machine_text=ghost.machine_text,
        report=ghost.report,
        status=ghost.status,
    )
    out_of_range = _unit(records[1], 0, "fr")
    out_of_range = TranslationUnit(
        record_id=records[1].id,
        turn_index=99,
        lang_code="fr",
        source_text=out_of_range.source_text,
        machine_text=out_of_range.machine_text,
        report=out_of_range.report,
        status=out_of_range.status,
    )
    with pytest.raises(MergeReferenceError) as exc_info:
        merge_corrections(records, [ghost, out_of_range])
    assert ("missing", 0, "fr") in exc_info.value.offenders
    assert (records[1].id, 99, "fr") in exc_info.value.offenders


def test_merge_rejects_corrections_that_change_placeholder_count(fixture_records):
    from palo_forge.pipeline import MergePlaceholderError

    records = fixture_records[:2]
    # Turn 0 carries the placeholder; this correction drops it.
    unsafe = _unit(records[0], 0, "fr", corrected="sans jeton", status=UnitStatus.REVIEWED)
    with pytest.raises(MergePlaceholderError) as exc_info:
        merge_corrections(records, [unsafe])
    assert exc_info.value.offenders == [unsafe.key]


def test_unit_invariants_enforced(fixture_records):
    record = fixture_records[0]
    with pytest.raises(ValueError):
        _unit(record, 0, "fr", corrected=None, status=UnitStatus.REVIEWED)
    with pytest.raises(ValueError):
        _unit(record, 0, "fr", corrected="x", status=UnitStatus.MACHINE)


def test_export_corpus_orders_and_formats(fixture_records):
    records = fixture_records[:2]
    units = [
        _unit(records[1], 0, "ar", corrected="مرحبا", status=UnitStatus.REVIEWED),
        _unit(records[0], 1, "ar", corrected="نص", status=UnitStatus.REVIEWED),
        _unit(records[0], 0, "ar", corrected="سؤال", status=UnitStatus.ACCEPTED),
    ]
    corpus = export_finetune_corpus(units, get_language("ar"))
    lines = [json.loads(line) for line in corpus.decode("utf-8").splitlines()]
    assert len(lines) == 3
    keys = [(line["messages"][1]["content"]) for line in lines]
    assert keys[0] == records[0].turns[0].text  # sorted by (record_id, turn_index)
    for line in lines:
        roles = [m["role"] for m in line["messages"]]
        assert roles == ["system", "user", "assistant"]
        assert "Arabic" in line["messages"][0]["content"]


def test_export_corpus_accepts_unedited_review(fixture_records):
    record = fixture_records[0]
    unit = _unit(record, 0, "ar")
    unit = TranslationUnit(
        record_id=unit.record_id,
        turn_index=unit.turn_index,
        lang_code=unit.lang_code,
        source_text=unit.source_text,
        machine_text=unit.machine_text,
        report=unit.report,
        status=UnitStatus.REVIEWED,
        corrected_text=unit.machine_text,
    )
    corpus = export_finetune_corpus([unit], get_language("ar"))
    (line,) = corpus.decode("utf-8").splitlines()
    assert json.loads(line)["messages"][2]["content"] == unit.machine_text


def test_export_corpus_rejects_unreviewed_or_foreign_units(fixture_records):
    record = fixture_records[0]
    with pytest.raises(CorpusExportError):
        export_finetune_corpus([_unit(record, 0, "ar")], get_language("ar"))
    reviewed_fr = _unit(record, 0, "fr", corrected="oui", status=UnitStatus.REVIEWED)
    with pytest.raises(CorpusExportError):
        export_finetune_corpus([reviewed_fr], get_language("ar"))


def test_export_corpus_empty():
    assert export_finetune_corpus([], get_language("ar")) == b""


def test_unit_ledger_round_trip(tmp_path, mock_translator, fixture_records):
    outcome = translate_record(fixture_records[0], HI, mock_translator)
    path = tmp_path / "units.jsonl"
    write_unit_ledger(outcome.units, path)
    restored = read_unit_ledger(path)
    assert restored == outcome.units
