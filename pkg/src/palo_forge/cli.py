"""Command-line entry point wiring the whole pipeline.

Subcommands map one to one onto the library operations. Exit codes: 0 on
success, 1 on validation failure, 2 on usage errors. Diagnostics go to
stderr; data goes to files or stdout, so output is safe to pipe.
"""

from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import click

from . import __version__
from .backends import (
    BackendConfigError,
    BackendKind,
    CompletionBackend,
    MockBackend,
    create_backend,
    load_backend_config,
)
from .dataset import (
    DatasetParseError,
    DatasetValidationError,
    load_dataset,
    plan_dataset_mix,
    save_dataset,
    serialize_instruct_dataset,
    validate_records,
)
from .harness import (
    check_benchmark_shape,
    judge_language,
    load_ablation_runs,
    load_answers,
    load_benchmark,
    load_score_rows,
    delta_rows as compute_delta_rows,
    render_ablation_table,
    render_score_table,
    save_benchmark,
    score_language,
    score_table_csv,
    translate_benchmark,
)
from .languages import get_language, parse_language_list
from .pipeline import (
    DEFAULT_SEED,
    CheckpointMismatchError,
    export_finetune_corpus,
    merge_corrections,
    read_unit_ledger,
    run_mass_translation,
    sample_for_review,
    write_atomic,
    write_unit_ledger,
    UnitStatus,
)
from .rules import load_rules_config
from .validation import ValidationThresholds


@dataclass
class RunConfig:
    """Resolved run settings; precedence is flags > env > config file > defaults.

    The seed defaults to 42 so that re-runs of sampling are reproducible
    without any flags."""

    backend: str = "mock"
    backend_config: str | None = None
    languages: str = "all"
    parallelism: int = 4
    seed: int = DEFAULT_SEED
    checkpoint: str | None = None
    out_dir: str = "out"
    rules_config: str | None = None
    excess_latin_ratio: float = 0.30
    expected_script_min: float = 0.50
    length_ratio_low: float = 0.3
    length_ratio_high: float = 3.0


_ENV_PREFIX = "PALO_FORGE_"
_ENV_KEYS = {
    "backend": "BACKEND",
    "backend_config": "BACKEND_CONFIG",
    "languages": "LANGS",
    "parallelism": "PARALLELISM",
    "seed": "SEED",
    "checkpoint": "CHECKPOINT",
    "out_dir": "OUT",
    "rules_config": "RULES_CONFIG",
}


def resolve_config(config_path: str | None, overrides: dict) -> RunConfig:
    import os

    config = RunConfig()
    if config_path:
        file_values = json.loads(Path(config_path).read_text(encoding="utf-8"))
        for key, value in file_values.items():
            if not hasattr(config, key):
                raise click.UsageError(f"unknown config key {key!r}")
            setattr(config, key, value)
    for key, env_suffix in _ENV_KEYS.items():
        value = os.environ.get(_ENV_PREFIX + env_suffix)
        if value is not None:
            current = getattr(config, key)
            setattr(config, key, type(current)(value) if current is not None else value)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    return config


def _thresholds(config: RunConfig) -> ValidationThresholds:
    return ValidationThresholds(
        excess_latin_ratio=config.excess_latin_ratio,
        expected_script_min=config.expected_script_min,
        length_ratio_low=config.length_ratio_low,
        length_ratio_high=config.length_ratio_high,
    )


def _build_backend(config: RunConfig, kind: BackendKind) -> CompletionBackend:
    if config.backend == "mock":
        return MockBackend(kind)
    if not config.backend_config:
        raise click.UsageError(
            f"backend {config.backend!r} requires --backend-config (or PALO_FORGE_BACKEND_CONFIG)"
        )
    descriptors = load_backend_config(config.backend_config)
    try:
        descriptor = descriptors[config.backend]
    except KeyError:
        raise click.UsageError(
            f"backend {config.backend!r} not in {config.backend_config}"
        ) from None
    try:
        return create_backend(descriptor)
    except BackendConfigError as exc:
        raise click.ClickException(str(exc)) from exc


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group(invoke_without_command=True)
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file (flags and env vars override it).")
@click.option("--print-config", is_flag=True, help="Print the resolved config and exit.")
@click.version_option(__version__)
@click.pass_context
def main(ctx: click.Context, config_path: str | None, print_config: bool) -> None:
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    if print_config:
        config = resolve_config(config_path, {})
        click.echo(json.dumps(asdict(config), indent=2, sort_keys=True))
        ctx.exit(0)
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())
        ctx.exit(2)


def _config(ctx: click.Context, **overrides) -> RunConfig:
    return resolve_config(ctx.obj.get("config_path"), overrides)


def _threshold_options(fn):
    for name in (
        "--length-ratio-high",
        "--length-ratio-low",
        "--expected-script-min",
        "--excess-latin-ratio",
    ):
        fn = click.option(name, default=None, type=float)(fn)
    return fn


@main.command()
@click.argument("dataset_path", type=click.Path(exists=True))
@click.option("--lenient", is_flag=True, help="Downgrade invariant violations to warnings.")
def validate(dataset_path: str, lenient: bool) -> None:
    """Parse and validate an instruction dataset document."""
    try:
        records = load_dataset(dataset_path, lenient=True)
    except DatasetParseError as exc:
        _fail(f"parse error: {exc}")
        return
    violations = validate_records(records, lenient=True)
    for rid, rule, message in violations:
        click.echo(f"warning: record {rid!r}: [{rule}] {message}", err=True)
    click.echo(f"{len(records)} records, {len(violations)} violations")
    if violations and not lenient:
        sys.exit(1)


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--langs", default=None, help="Comma-separated codes, or 'all'.")
@click.option("--backend", default=None)
@click.option("--backend-config", default=None, type=click.Path(exists=True))
@click.option("--checkpoint", default=None, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--parallelism", default=None, type=int)
@click.option("--rules-config", default=None, type=click.Path(exists=True))
@_threshold_options
@click.option("--json", "as_json", is_flag=True, help="Emit the run summary as JSON.")
@click.pass_context
def translate(ctx, in_path, langs, backend, backend_config, checkpoint, out_dir,
              parallelism, rules_config, as_json, **threshold_flags) -> None:
    """Translate a dataset into the target languages (resumable)."""
    config = _config(
        ctx, languages=langs, backend=backend, backend_config=backend_config,
        checkpoint=checkpoint, out_dir=out_dir, parallelism=parallelism,
        rules_config=rules_config, **threshold_flags,
    )
    try:
        records = load_dataset(in_path)
    except (DatasetParseError, DatasetValidationError) as exc:
        _fail(str(exc))
        return
    languages = parse_language_list(config.languages)
    client = _build_backend(config, BackendKind.TRANSLATOR)
    rule_table = load_rules_config(config.rules_config) if config.rules_config else None
    out = Path(config.out_dir)
    try:
        result = run_mass_translation(
            records,
            languages,
            client,
            checkpoint_path=config.checkpoint,
            parallelism=config.parallelism,
            rule_table=rule_table,
            thresholds=_thresholds(config),
        )
    except CheckpointMismatchError as exc:
        _fail(str(exc))
        return
    except KeyboardInterrupt:
        click.echo("interrupted; checkpoint flushed", err=True)
        sys.exit(130)
    for code, translated in result.datasets.items():
        write_atomic(out / f"{code}.json", serialize_instruct_dataset(translated))
        write_unit_ledger(result.units[code], out / f"{code}.units.jsonl")
    summary = {
        "languages": result.summary_json(),
        "backend_calls": result.backend_calls,
        "failures": len(result.failures),
    }
    if as_json:
        click.echo(json.dumps(summary, indent=2, sort_keys=True))
    else:
        for code, counts in summary["languages"].items():
            click.echo(
                f"{code}: translated={counts['translated']} "
                f"flagged={counts['flagged']} failed={counts['failed']}"
            )
        click.echo(f"backend calls: {result.backend_calls}")
    if result.failures:
        click.echo(f"warning: {len(result.failures)} unit failures", err=True)


@main.command("sample-review")
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--n", default=1000, show_default=True, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--ledger", default=None, type=click.Path(exists=True),
              help="Unit ledger used to stratify by flag status.")
@click.option("--stratify", is_flag=True, help="Stratify the sample by flagged/clean.")
@click.pass_context
def sample_review(ctx, in_path, n, seed, ledger, stratify) -> None:
    """Pick the record ids for a human review session."""
    config = _config(ctx, seed=seed)
    records = load_dataset(in_path, lenient=True)
    flagged_ids = None
    if stratify:
        if not ledger:
            raise click.UsageError("--stratify requires --ledger")
        flagged_ids = {
            u.record_id for u in read_unit_ledger(ledger) if u.status is UnitStatus.FLAGGED
        }
    try:
        ids = sample_for_review(records, n, config.seed, flagged_ids=flagged_ids)
    except ValueError as exc:
        _fail(str(exc))
        return
    for record_id in ids:
        click.echo(record_id)


@main.command("serve-review")
@click.option("--ledger", required=True, type=click.Path(exists=True))
@click.option("--events", required=True, type=click.Path())
@click.option("--listen", default="127.0.0.1:8800", show_default=True)
@click.option("--ui-dir", default=None, type=click.Path(exists=True))
def serve_review(ledger, events, listen, ui_dir) -> None:
    """Serve the review HTTP API (and the reviewer UI, when built)."""
    import uvicorn

    from .review import ReviewStore, create_app

    host, _, port = listen.partition(":")
    store = ReviewStore(ledger, events)
    app = create_app(store, ui_dir=ui_dir)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8800), log_level="warning")


@main.command()
@click.option("--in", "in_path", required=True, type=click.Path(exists=True))
@click.option("--ledger", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def merge(in_path, ledger, out_path) -> None:
    """Merge reviewed corrections back into a translated dataset."""
    records = load_dataset(in_path, lenient=True)
    units = read_unit_ledger(ledger)
    merged = merge_corrections(records, units)
    save_dataset(merged, out_path)
    applied = sum(1 for u in units if u.status in (UnitStatus.REVIEWED, UnitStatus.ACCEPTED))
    click.echo(f"merged {applied} corrections into {out_path}")


@main.command("export-finetune")
@click.option("--ledger", required=True, type=click.Path(exists=True))
@click.option("--lang", required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
def export_finetune(ledger, lang, out_path) -> None:
    """Export the translator fine-tuning corpus from reviewed units."""
    tag = get_language(lang)
    units = [
        u
        for u in read_unit_ledger(ledger)
        if u.lang_code == tag.code and u.status in (UnitStatus.REVIEWED, UnitStatus.ACCEPTED)
    ]
    corpus = export_finetune_corpus(units, tag)
    write_atomic(out_path, corpus)
    click.echo(f"wrote {len(units)} examples to {out_path}")


@main.command("bench-translate")
@click.option("--bench", "bench_path", required=True, type=click.Path(exists=True))
@click.option("--langs", default=None)
@click.option("--backend", default=None)
@click.option("--backend-config", default=None, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--rules-config", default=None, type=click.Path(exists=True))
@_threshold_options
@click.pass_context
def bench_translate(ctx, bench_path, langs, backend, backend_config, out_dir,
                    rules_config, **threshold_flags) -> None:
    """Translate the English benchmark; flagged items go to a review queue."""
    config = _config(ctx, languages=langs, backend=backend,
                     backend_config=backend_config, out_dir=out_dir,
                     rules_config=rules_config, **threshold_flags)
    bench_en = load_benchmark(bench_path)
    try:
        check_benchmark_shape(bench_en)
    except Exception as exc:
        _fail(str(exc))
        return
    languages = parse_language_list(config.languages)
    client = _build_backend(config, BackendKind.TRANSLATOR)
    rule_table = load_rules_config(config.rules_config) if config.rules_config else None
    result = translate_benchmark(
        bench_en, languages, client, rule_table=rule_table, thresholds=_thresholds(config)
    )
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for code, items in result.items.items():
        check_benchmark_shape(items)
        save_benchmark(items, out / f"bench.{code}.jsonl")
        write_unit_ledger(result.flagged_units[code], out / f"bench.{code}.review.jsonl")
        status = "final" if result.is_final(code) else (
            f"{len(result.flagged_units[code])} items queued for review"
        )
        click.echo(f"{code}: {len(items)} questions, {status}")


@main.command()
@click.option("--bench", "bench_path", required=True, type=click.Path(exists=True))
@click.option("--answers", "answers_path", required=True, type=click.Path(exists=True))
@click.option("--lang", required=True)
@click.option("--backend", default=None)
@click.option("--backend-config", default=None, type=click.Path(exists=True))
@click.option("--parallelism", default=None, type=int)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
def score(ctx, bench_path, answers_path, lang, backend, backend_config,
          parallelism, as_json) -> None:
    """Judge candidate answers for one language and report its score."""
    config = _config(ctx, backend=backend, backend_config=backend_config,
                     parallelism=parallelism)
    tag = get_language(lang)
    items = load_benchmark(bench_path)
    answers = load_answers(answers_path).get(tag.code, {})
    judge = _build_backend(config, BackendKind.JUDGE)
    outcome = judge_language(items, answers, judge, parallelism=config.parallelism)
    if not outcome.verdicts:
        _fail(f"no verdicts for {tag.code}: all {len(outcome.failures)} judgements failed")
        return
    value = score_language(outcome.verdicts)
    if outcome.failures:
        click.echo(
            f"warning: {len(outcome.failures)} judgement failures for {tag.code}; "
            f"n = {len(outcome.verdicts)} of {outcome.attempted} attempted",
            err=True,
        )
    payload = {
        "lang": tag.code,
        "score": str(value),
        "n": len(outcome.verdicts),
        "attempted": outcome.attempted,
        "failures": len(outcome.failures),
    }
    click.echo(json.dumps(payload, sort_keys=True) if as_json else f"{tag.code}: {value}")


@main.command()
@click.option("--scores", "scores_path", required=True, type=click.Path(exists=True))
@click.option("--baseline", default=None, help="model_id to compute delta rows against.")
@click.option("--csv", "csv_path", default=None, type=click.Path())
@click.option("--json", "as_json", is_flag=True)
def aggregate(scores_path, baseline, csv_path, as_json) -> None:
    """Aggregate per-language scores into leaderboard rows."""
    rows = load_score_rows(scores_path)
    deltas = []
    if baseline is not None:
        by_id = {r.model_id: r for r in rows}
        if baseline not in by_id:
            raise click.UsageError(f"baseline {baseline!r} not among rows")
        deltas = [
            compute_delta_rows(by_id[baseline], row)
            for row in rows
            if row.model_id != baseline
        ]
    if csv_path:
        write_atomic(csv_path, score_table_csv(rows, deltas).encode("utf-8"))
    if as_json:
        payload = {
            "rows": [r.to_json() for r in rows],
            "deltas": [d.to_json() for d in deltas],
        }
        click.echo(json.dumps(payload, indent=2))
    else:
        click.echo(render_score_table(rows, deltas), nl=False)


@main.command()
@click.option("--runs", "runs_path", required=True, type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
def ablate(runs_path, as_json) -> None:
    """Render the fine-tuning-data ablation matrix."""
    rows = load_ablation_runs(runs_path)
    if as_json:
        click.echo(json.dumps([r.to_json() for r in rows], indent=2))
    else:
        click.echo(render_ablation_table(rows), nl=False)


@main.command("plan-mix")
@click.option("--english", default=665_000, show_default=True, type=int)
@click.option("--translated", default=150_000, show_default=True, type=int)
@click.option("--langs", default="all")
@click.option("--override", "overrides", multiple=True, metavar="CODE=COUNT",
              help="Per-language count override, e.g. bn=222000.")
def plan_mix(english, translated, langs, overrides) -> None:
    """Plan the multilingual fine-tuning mix and print per-language counts."""
    parsed = {}
    for item in overrides:
        code, _, count = item.partition("=")
        parsed[code] = int(count)
    plan = plan_dataset_mix(english, translated, parse_language_list(langs), parsed)
    for code, count in plan.counts.items():
        click.echo(f"{code}: {count}")
    click.echo(f"total: {plan.total}")


if __name__ == "__main__":
    main()
