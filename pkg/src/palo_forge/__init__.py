"""palo-forge: semi-automated multilingual instruction-dataset translation,
human review, and multilingual benchmark scoring."""

from .languages import LANGUAGES, LanguageTag, ResourceClass, get_language
from .dataset import (
    InstructionRecord,
    MixPlan,
    Turn,
    parse_instruct_dataset,
    plan_dataset_mix,
    serialize_instruct_dataset,
)
from .scripts import ScriptRun, Span, classify_script_runs, find_untranslated_segments
from .rules import CorrectionRule, apply_corrections
from .validation import ValidationFlag, ValidationReport, validate_translation
from .backends import BackendDescriptor, BackendKind, MockBackend, RateLimiter
from .pipeline import (
    TranslationUnit,
    UnitStatus,
    export_finetune_corpus,
    merge_corrections,
    run_mass_translation,
    sample_for_review,
    translate_record,
)
from .harness import (
    BenchmarkItem,
    JudgeVerdict,
    aggregate_table,
    delta_rows,
    judge_pairwise,
    score_language,
    translate_benchmark,
)

__version__ = "0.1.0"
