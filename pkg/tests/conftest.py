"""Shared fixtures: synthetic datasets, benchmarks, and backend fakes.

Also prints one PASS/FAIL line per acceptance criterion at the end of a run.
"""

from __future__ import annotations

import threading

import pytest

from palo_forge.backends import BackendHTTPError, MockBackend
from palo_forge.dataset import InstructionRecord, Speaker, Turn
from palo_forge.harness import BenchmarkItem
from palo_forge.pipeline import SENTINEL

QUESTIONS = (
    "What is unusual about this scene? <image>",
    "Describe the objects on the table. <image>",
    "What emotion does the painting convey? <image>",
    "Count the animals in the picture. <image>",
    "What might happen next here? <image>",
)
ANSWERS = (
    "A cat is balancing on a stack of books, which is uncommon.",
    "There are two mugs, a notebook, and a small plant.",
    "The painting conveys a calm, melancholic mood.",
    "There are three dogs and one bird in the picture.",
    "The cyclist is likely to turn left at the crossing.",
)


def make_record(index: int, turns: int = 2, with_image: bool = True) -> InstructionRecord:
    # Every turn text is unique per record so caching and dedup stay visible.
    convo = []
    for t in range(turns):
        if t % 2 == 0:
            text = f"Case {index}: {QUESTIONS[index % len(QUESTIONS)]}"
            if not with_image or t > 0:
                text = text.replace(" <image>", "")
            convo.append(Turn(Speaker.HUMAN, text))
        else:
            convo.append(
                Turn(Speaker.ASSISTANT, f"Case {index}: {ANSWERS[(index + t) % len(ANSWERS)]}")
            )
    image = f"images/{index:05d}.jpg" if with_image else None
    return InstructionRecord(f"rec-{index:04d}", image, tuple(convo))


@pytest.fixture
def mini_records() -> list[InstructionRecord]:
    return [make_record(i) for i in range(3)]


@pytest.fixture
def fixture_records() -> list[InstructionRecord]:
    """The 50-record corpus used by the end-to-end runs (2 turns each)."""
    return [make_record(i) for i in range(50)]


@pytest.fixture
def mock_translator() -> MockBackend:
    return MockBackend()


def corrected_text_for(unit, text: str) -> str:
    """A human correction must keep the source's placeholder count."""
    return text + " <image>" * unit.source_text.count("<image>")


def make_english_benchmark(images: int = 24, questions: int = 60) -> list[BenchmarkItem]:
    """Synthetic English benchmark with the canonical shape: ``questions``
    questions spread over ``images`` distinct images."""
    categories = ("conversation", "detail", "complex")
    items = []
    for q in range(questions):
        items.append(
            BenchmarkItem(
                image_id=f"img-{q % images:03d}",
                question=f"What stands out in area {q} of this image?",
                reference_answer=f"The most salient detail in area {q} is the lighting.",
                category=categories[q % len(categories)],
                lang_code="en",
            )
        )
    return items


class SentinelDroppingBackend:
    """Fault-injection translator: mangles the placeholder sentinel so the
    pipeline must flag the unit rather than repair it."""

    def __init__(self, inner: MockBackend):
        self.descriptor = inner.descriptor
        self._inner = inner

    def complete(self, messages):
        return self._inner.complete(messages).replace(SENTINEL, "")


class FlakyBackend:
    """Fails the first ``failures`` calls with a retryable error, then succeeds."""

    def __init__(self, inner: MockBackend, failures: int):
        self.descriptor = inner.descriptor
        self._inner = inner
        self._remaining = failures
        self._lock = threading.Lock()
        self.attempts = 0

    def complete(self, messages):
        with self._lock:
            self.attempts += 1
            if self._remaining > 0:
                self._remaining -= 1
                raise BackendHTTPError(503, "synthetic outage")
        return self._inner.complete(messages)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results: dict[str, str] = {}
    for status in ("passed", "failed", "error", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py" not in nodeid:
                continue
            when = getattr(report, "when", "call")
            if status == "passed" and when != "call":
                continue
            # Setup/teardown errors and skips override a passing call phase.
            if status != "passed" or nodeid not in results:
                results[nodeid] = status
    if not results:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for nodeid in sorted(results):
        label = {"passed": "PASS", "skipped": "SKIP"}.get(results[nodeid], "FAIL")
        terminalreporter.write_line(f"{label}  {nodeid.split('::')[-1]}")
