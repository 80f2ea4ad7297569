"""Multilingual benchmark construction, judge-based scoring, and score-table
aggregation.

Scores are relative percentages: 100 times the candidate's summed judge
scores over the reference's summed judge scores. All table arithmetic runs
in exact decimal with half-up rounding to one decimal place; binary floats
would silently corrupt ties like 57.65, and banker's rounding would diverge
on ties like 65.35. Aggregate delta cells are the rounded mean of the exact
per-language deltas (not the difference of two rounded means, which disagrees
with the rounded mean of deltas in general).
"""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from pathlib import Path
from typing import Mapping, Sequence

from .backends import BackendError, CompletionBackend, Message
from .languages import HIGH_RESOURCE, LANGUAGES, LOW_RESOURCE, LanguageTag
from .pipeline import RetryPolicy, TranslationUnit, UnitStatus, translate_text
from .rules import CorrectionRule, apply_corrections
from .validation import DEFAULT_THRESHOLDS, ValidationThresholds, validate_translation

CATEGORIES = ("conversation", "detail", "complex")

BENCHMARK_IMAGES = 24
BENCHMARK_QUESTIONS = 60

_ONE_DP = Decimal("0.1")


def round1(value: Decimal) -> Decimal:
    return value.quantize(_ONE_DP, rounding=ROUND_HALF_UP)


def _as_decimal(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        return Decimal(str(value))
    return Decimal(value)


def _mean(values: Sequence[Decimal]) -> Decimal:
    return sum(values, Decimal(0)) / len(values)


@dataclass(frozen=True)
class BenchmarkItem:
    image_id: str
    question: str
    reference_answer: str
    category: str
    lang_code: str

    def __post_init__(self) -> None:
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "question": self.question,
            "reference_answer": self.reference_answer,
            "category": self.category,
            "lang": self.lang_code,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BenchmarkItem":
        return cls(
            image_id=data["image_id"],
            question=data["question"],
            reference_answer=data["reference_answer"],
            category=data["category"],
            lang_code=data["lang"],
        )


class BenchmarkShapeError(Exception):
    pass


def check_benchmark_shape(
    items: Sequence[BenchmarkItem],
    expected_images: int = BENCHMARK_IMAGES,
    expected_questions: int = BENCHMARK_QUESTIONS,
) -> None:
    images = {item.image_id for item in items}
    if len(items) != expected_questions or len(images) != expected_images:
        raise BenchmarkShapeError(
            f"benchmark has {len(items)} questions over {len(images)} images, "
            f"expected {expected_questions} over {expected_images}"
        )


def load_benchmark(path: str | Path) -> list[BenchmarkItem]:
    items = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            items.append(BenchmarkItem.from_json(json.loads(line)))
    return items


def save_benchmark(items: Sequence[BenchmarkItem], path: str | Path) -> None:
    lines = [json.dumps(i.to_json(), ensure_ascii=False) for i in items]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


class BenchmarkTranslationError(Exception):
    pass


_QUESTION_MARKS = "?？؟"  # ASCII, full-width, Arabic


def _lost_question_mark(source: str, translation: str) -> bool:
    trimmed = source.rstrip()
    if not trimmed or trimmed[-1] not in _QUESTION_MARKS:
        return False
    return not any(mark in translation for mark in _QUESTION_MARKS)


@dataclass
class BenchmarkTranslation:
    """Per-language translated benchmarks plus the items that need review.

    A language's benchmark is final only once its review queue is empty;
    flagged items are exported as translation units so the review service
    can drive the human-correction pass.
    """

    items: dict[str, list[BenchmarkItem]]
    flagged_units: dict[str, list[TranslationUnit]]

    def is_final(self, lang_code: str) -> bool:
        return not self.flagged_units.get(lang_code)


def translate_benchmark(
    bench_en: Sequence[BenchmarkItem],
    languages: Sequence[LanguageTag],
    backend: CompletionBackend,
    *,
    rule_table: dict[str, tuple[CorrectionRule, ...]] | None = None,
    thresholds: ValidationThresholds = DEFAULT_THRESHOLDS,
    retry: RetryPolicy | None = None,
) -> BenchmarkTranslation:
    """Translate the English benchmark into each target language.

    Both the question and the reference answer are translated, corrected, and
    validated; an item with any flag on either text lands in the language's
    review queue. Item counts and the category distribution per language must
    match the English benchmark exactly.
    """
    for item in bench_en:
        if item.lang_code != "en":
            raise BenchmarkTranslationError(f"source benchmark must be English: {item}")
    per_lang: dict[str, list[BenchmarkItem]] = {}
    flagged: dict[str, list[TranslationUnit]] = {}
    for lang in languages:
        translated: list[BenchmarkItem] = []
        queue: list[TranslationUnit] = []
        for index, item in enumerate(bench_en):
            try:
                fields = []
                for source in (item.question, item.reference_answer):
                    machine = translate_text(source, lang, backend, retry=retry)
                    corrected, _ = apply_corrections(machine, lang, rule_table)
                    fields.append((source, corrected))
            except BackendError as exc:
                raise BenchmarkTranslationError(
                    f"translation failed for {item.image_id} #{index} into {lang.code}: {exc}"
                ) from exc
            reports = [
                validate_translation(src, text, lang, thresholds) for src, text in fields
            ]
            translated.append(
                BenchmarkItem(
                    image_id=item.image_id,
                    question=fields[0][1],
                    reference_answer=fields[1][1],
                    category=item.category,
                    lang_code=lang.code,
                )
            )
            for turn, ((source, text), report) in enumerate(zip(fields, reports)):
                # A question that lost its terminal question mark needs human
                # review even when no validation flag fires.
                punctuation_loss = turn == 0 and _lost_question_mark(source, text)
                if report.flags or punctuation_loss:
                    queue.append(
                        TranslationUnit(
                            record_id=f"{item.image_id}#q{index}",
                            turn_index=turn,
                            lang_code=lang.code,
                            source_text=source,
                            machine_text=text,
                            report=report,
                            status=UnitStatus.FLAGGED if report.flags else UnitStatus.MACHINE,
                        )
                    )
        if len(translated) != len(bench_en):
            raise BenchmarkTranslationError(
                f"count mismatch for {lang.code}: {len(translated)} != {len(bench_en)}"
            )
        per_lang[lang.code] = translated
        flagged[lang.code] = queue
    return BenchmarkTranslation(items=per_lang, flagged_units=flagged)


@dataclass(frozen=True)
class JudgeVerdict:
    reference_score: int
    candidate_score: int
    rationale: str = ""

    def __post_init__(self) -> None:
        for score in (self.reference_score, self.candidate_score):
            if not 1 <= score <= 10:
                raise ValueError(f"judge score {score} outside [1, 10]")


class JudgeParseError(Exception):
    pass


_VERDICT_RE = re.compile(r"Score-A:\s*(\d{1,2})\s*Score-B:\s*(\d{1,2})")


def parse_judge_verdict(text: str) -> JudgeVerdict:
    """Parse the judge's required 'Score-A: <n> Score-B: <n>' line (A is the
    reference answer, B the candidate). Anything else is a parse error."""
    match = _VERDICT_RE.search(text)
    if not match:
        raise JudgeParseError(f"no score line in judge output: {text[:120]!r}")
    a, b = int(match.group(1)), int(match.group(2))
    if not (1 <= a <= 10 and 1 <= b <= 10):
        raise JudgeParseError(f"judge scores out of range: A={a} B={b}")
    return JudgeVerdict(reference_score=a, candidate_score=b, rationale=text)


def build_judge_prompt(item: BenchmarkItem, candidate_answer: str) -> list[Message]:
    lang = LANGUAGES.get(item.lang_code)
    lang_name = lang.name if lang else item.lang_code
    system = (
        "You are an impartial evaluator of answers to questions about images. "
        "Rate each answer from 1 to 10 for helpfulness, relevance, accuracy, "
        "and level of detail. Reply with exactly one line in the form "
        "'Score-A: <n> Score-B: <n>'."
    )
    user = (
        f"Question ({lang_name}): {item.question}\n\n"
        f"Answer A (reference): {item.reference_answer}\n\n"
        f"Answer B (candidate): {candidate_answer}"
    )
    return [{"role": "system", "content": system}, {"role": "user", "content": user}]


def judge_pairwise(
    item: BenchmarkItem, candidate_answer: str, backend: CompletionBackend
) -> JudgeVerdict:
    """Ask the judge to score reference vs. candidate for one item.

    An unparseable response is retried once; a second failure propagates as
    JudgeParseError for the caller to record.
    """
    messages = build_judge_prompt(item, candidate_answer)
    try:
        return parse_judge_verdict(backend.complete(messages))
    except JudgeParseError:
        return parse_judge_verdict(backend.complete(messages))


@dataclass(frozen=True)
class JudgeFailure:
    image_id: str
    question_index: int
    lang_code: str
    error: str


@dataclass
class JudgeOutcome:
    verdicts: list[JudgeVerdict]
    failures: list[JudgeFailure]

    @property
    def attempted(self) -> int:
        return len(self.verdicts) + len(self.failures)


def judge_language(
    items: Sequence[BenchmarkItem],
    answers: Mapping[tuple[str, int], str],
    backend: CompletionBackend,
    parallelism: int = 1,
) -> JudgeOutcome:
    """Judge every benchmark item against the candidate's answers.

    Judging fans out over a bounded worker pool; verdicts and failures come
    back in item order regardless of completion order. Failures (missing
    answer, unparseable verdict after retry) are recorded and excluded; the
    caller reports n = attempted - failures and must surface failures > 0."""
    if parallelism < 1:
        raise ValueError("parallelism must be at least 1")
    results: dict[int, JudgeVerdict | JudgeFailure] = {}

    def judge_one(index: int, item: BenchmarkItem) -> JudgeVerdict | JudgeFailure:
        answer = answers.get((item.image_id, index))
        if answer is None:
            return JudgeFailure(item.image_id, index, item.lang_code, "no candidate answer")
        try:
            return judge_pairwise(item, answer, backend)
        except (JudgeParseError, BackendError) as exc:
            return JudgeFailure(item.image_id, index, item.lang_code, str(exc))

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {
            pool.submit(judge_one, index, item): index for index, item in enumerate(items)
        }
        for future, index in futures.items():
            results[index] = future.result()

    verdicts: list[JudgeVerdict] = []
    failures: list[JudgeFailure] = []
    for index in range(len(items)):
        outcome = results[index]
        if isinstance(outcome, JudgeVerdict):
            verdicts.append(outcome)
        else:
            failures.append(outcome)
    return JudgeOutcome(verdicts=verdicts, failures=failures)


def load_answers(path: str | Path) -> dict[str, dict[tuple[str, int], str]]:
    """Candidate answers file: JSON Lines of
    ``{"image_id", "question_index", "lang", "answer"}`` keyed per language."""
    answers: dict[str, dict[tuple[str, int], str]] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        answers.setdefault(entry["lang"], {})[
            (entry["image_id"], entry["question_index"])
        ] = entry["answer"]
    return answers


def score_language(verdicts: Sequence[JudgeVerdict]) -> Decimal:
    """Relative score: 100 x sum(candidate) / sum(reference), one decimal."""
    if not verdicts:
        raise ValueError("cannot score an empty verdict list")
    candidate = sum(v.candidate_score for v in verdicts)
    reference = sum(v.reference_score for v in verdicts)
    return round1(Decimal(100) * Decimal(candidate) / Decimal(reference))


_HIGH_CODES = tuple(t.code for t in HIGH_RESOURCE)
_LOW_CODES = tuple(t.code for t in LOW_RESOURCE)
ALL_CODES = _HIGH_CODES + _LOW_CODES


@dataclass(frozen=True)
class ScoreRow:
    model_id: str
    scores: dict[str, Decimal]
    avg_high: Decimal
    avg_low: Decimal
    avg_all: Decimal

    def to_json(self) -> dict:
        return {
            "model_id": self.model_id,
            "scores": {code: str(self.scores[code]) for code in ALL_CODES},
            "avg_high": str(self.avg_high),
            "avg_low": str(self.avg_low),
            "avg_all": str(self.avg_all),
        }


def aggregate_table(per_language_scores: Mapping[str, object], model_id: str) -> ScoreRow:
    """One leaderboard row: per-language scores plus the three averages.

    All ten languages must be present. Averages are exact-decimal means
    rounded half-up to one decimal.
    """
    missing = set(ALL_CODES) - set(per_language_scores)
    if missing:
        raise ValueError(f"scores missing for languages: {sorted(missing)}")
    scores = {code: _as_decimal(per_language_scores[code]) for code in ALL_CODES}
    return ScoreRow(
        model_id=model_id,
        scores=scores,
        avg_high=round1(_mean([scores[c] for c in _HIGH_CODES])),
        avg_low=round1(_mean([scores[c] for c in _LOW_CODES])),
        avg_all=round1(_mean([scores[c] for c in ALL_CODES])),
    )


@dataclass(frozen=True)
class DeltaRow:
    baseline_id: str
    model_id: str
    deltas: dict[str, Decimal]
    avg_high: Decimal
    avg_low: Decimal
    avg_all: Decimal

    def to_json(self) -> dict:
        return {
            "baseline_id": self.baseline_id,
            "model_id": self.model_id,
            "deltas": {code: str(self.deltas[code]) for code in ALL_CODES},
            "avg_high": str(self.avg_high),
            "avg_low": str(self.avg_low),
            "avg_all": str(self.avg_all),
        }


def delta_rows(baseline: ScoreRow, model: ScoreRow) -> DeltaRow:
    """Per-language and aggregate deltas of a model against a baseline.

    Aggregate deltas are means of the exact per-language deltas, rounded at
    the end."""
    if set(baseline.scores) != set(model.scores):
        raise ValueError("baseline and model cover different language sets")
    deltas = {
        code: round1(model.scores[code] - baseline.scores[code]) for code in ALL_CODES
    }
    exact = [model.scores[c] - baseline.scores[c] for c in ALL_CODES]
    return DeltaRow(
        baseline_id=baseline.model_id,
        model_id=model.model_id,
        deltas=deltas,
        avg_high=round1(_mean(exact[: len(_HIGH_CODES)])),
        avg_low=round1(_mean(exact[len(_HIGH_CODES) :])),
        avg_all=round1(_mean(exact)),
    )


@dataclass(frozen=True)
class AblationRow:
    label: str
    train_lang_code: str | None
    scores: dict[str, Decimal]
    avg: Decimal

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "train_lang": self.train_lang_code,
            "scores": {code: str(self.scores[code]) for code in ALL_CODES},
            "avg": str(self.avg),
        }


def ablation_matrix(
    runs: Sequence[tuple[str, str | None, Mapping[str, object]]]
) -> list[AblationRow]:
    """Rows of the fine-tuning-data ablation: (label, training language,
    per-language scores). Each row must cover all ten languages; the diagonal
    cell (training language == evaluated language) is marked at render time."""
    rows = []
    for label, train_lang, per_language in runs:
        missing = set(ALL_CODES) - set(per_language)
        if missing:
            raise ValueError(f"run {label!r} missing languages: {sorted(missing)}")
        scores = {code: _as_decimal(per_language[code]) for code in ALL_CODES}
        rows.append(
            AblationRow(
                label=label,
                train_lang_code=train_lang,
                scores=scores,
                avg=round1(_mean([scores[c] for c in ALL_CODES])),
            )
        )
    return rows


def _signed(value: Decimal) -> str:
    return f"+{value}" if value > 0 else str(value)


def render_score_table(rows: Sequence[ScoreRow], deltas: Sequence[DeltaRow] = ()) -> str:
    """Plain-text leaderboard: languages as columns, then Avg.H, Avg.L, Avg.;
    delta rows are printed under their model row, signed."""
    headers = ["Model", *ALL_CODES, "Avg.H", "Avg.L", "Avg."]
    delta_by_model = {d.model_id: d for d in deltas}
    table: list[list[str]] = [headers]
    for row in rows:
        table.append(
            [
                row.model_id,
                *[str(row.scores[c]) for c in ALL_CODES],
                str(row.avg_high),
                str(row.avg_low),
                str(row.avg_all),
            ]
        )
        delta = delta_by_model.get(row.model_id)
        if delta is not None:
            table.append(
                [
                    f"\u0394 vs {delta.baseline_id}",
                    *[_signed(delta.deltas[c]) for c in ALL_CODES],
                    _signed(delta.avg_high),
                    _signed(delta.avg_low),
                    _signed(delta.avg_all),
                ]
            )
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    lines = []
    for r in table:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "-" * max(len(line) for line in lines))
    return "\n".join(lines) + "\n"


def render_ablation_table(rows: Sequence[AblationRow]) -> str:
    """Ablation matrix with the diagonal (training language == evaluated
    language) marked with an asterisk."""
    headers = ["Data", *ALL_CODES, "Avg."]
    table = [headers]
    for row in rows:
        cells = []
        for code in ALL_CODES:
            mark = "*" if row.train_lang_code == code else ""
            cells.append(f"{row.scores[code]}{mark}")
        table.append([row.label, *cells, str(row.avg)])
    widths = [max(len(r[i]) for r in table) for i in range(len(headers))]
    lines = []
    for r in table:
        cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    lines.insert(1, "-" * max(len(line) for line in lines))
    return "\n".join(lines) + "\n"


def score_table_csv(rows: Sequence[ScoreRow], deltas: Sequence[DeltaRow] = ()) -> str:
    lines = ["model," + ",".join(ALL_CODES) + ",avg_high,avg_low,avg_all"]
    delta_by_model = {d.model_id: d for d in deltas}
    for row in rows:
        lines.append(
            ",".join(
                [row.model_id]
                + [str(row.scores[c]) for c in ALL_CODES]
                + [str(row.avg_high), str(row.avg_low), str(row.avg_all)]
            )
        )
        delta = delta_by_model.get(row.model_id)
        if delta is not None:
            lines.append(
                ",".join(
                    [f"delta vs {delta.baseline_id}"]
                    + [_signed(delta.deltas[c]) for c in ALL_CODES]
                    + [_signed(delta.avg_high), _signed(delta.avg_low), _signed(delta.avg_all)]
                )
            )
    return "\n".join(lines) + "\n"


def load_score_rows(path: str | Path) -> list[ScoreRow]:
    """Score rows from JSON: array of ``{"model_id", "scores": {lang: num}}``.
    Numbers are parsed as exact decimals."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"), parse_float=Decimal)
    if isinstance(raw, dict):
        raw = [raw]
    return [aggregate_table(entry["scores"], entry["model_id"]) for entry in raw]


def load_ablation_runs(path: str | Path) -> list[AblationRow]:
    """Ablation runs from JSON: array of
    ``{"label", "train_lang": code|null, "scores": {lang: num}}``."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"), parse_float=Decimal)
    return ablation_matrix([(e["label"], e.get("train_lang"), e["scores"]) for e in raw])
