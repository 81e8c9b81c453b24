"""Turn labelled hallucination datasets into prompt/response fine-tuning records.

Hallucinated records get a ``"Yes, <reason>"`` response, with the reason written by the
reasoning backend. Clean records get ``"No."``. The detection prompt built here is also
the one the detector sends at inference time, so training and serving stay aligned.
"""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Sequence

from guardrail.backends.base import ReasoningBackend
from guardrail.errors import BackendFailure

log = logging.getLogger(__name__)

DETECTION_HEADER = "You are a hallucination detector..."
DETECTION_INSTRUCTION = "Does the answer contain hallucination? Answer Yes or No, and explain if Yes."
REASONING_INSTRUCTION = (
    "The answer above is known to be hallucinated. "
    "Explain briefly why it is not faithful to the question and context."
)

YES_PREFIX = "Yes, "
NO_RESPONSE = "No."

_DETECTION_RE = re.compile(
    re.escape(DETECTION_HEADER)
    + r"\n#Question#: (?P<question>.*?)\n#Context#: (?P<context>.*?)\n#Answer#: (?P<answer>.*)\n"
    + re.escape(DETECTION_INSTRUCTION)
    + r"\n",
    re.DOTALL,
)


def render_detection_prompt(question: str, context: str, answer: str) -> str:
    return (
        f"{DETECTION_HEADER}\n"
        f"#Question#: {question}\n"
        f"#Context#: {context}\n"
        f"#Answer#: {answer}\n"
        f"{DETECTION_INSTRUCTION}\n"
    )


def parse_detection_prompt(prompt: str) -> tuple[str, str, str]:
    """Inverse of :func:`render_detection_prompt` for fields free of the block labels."""
    m = _DETECTION_RE.fullmatch(prompt)
    if m is None:
        raise ValueError("not a detection prompt")
    return m.group("question"), m.group("context"), m.group("answer")


def render_reasoning_prompt(question: str, context: str, answer: str) -> str:
    """Prompt for a hosted reasoning model asked to explain a known hallucination."""
    return (
        f"#Question#: {question}\n"
        f"#Context#: {context}\n"
        f"#Answer#: {answer}\n"
        f"{REASONING_INSTRUCTION}\n"
        f"#Reason#:"
    )


@dataclass(frozen=True)
class RawHaluRecord:
    question: str
    context: str
    llm_answer: str
    label: bool

    def __post_init__(self):
        if not self.question or not self.llm_answer:
            raise ValueError("question and llm_answer must be non-empty")
        if not isinstance(self.label, bool):
            raise ValueError(f"label must be a boolean, got {self.label!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "RawHaluRecord":
        return cls(d["question"], d.get("context", ""), d["llm_answer"], d["label"])


@dataclass(frozen=True)
class TrainingRecord:
    prompt: str
    response: str

    def to_dict(self) -> dict:
        return {"prompt": self.prompt, "response": self.response}


def _process_one(i: int, rec: RawHaluRecord, reasoning: ReasoningBackend) -> TrainingRecord:
    prompt = render_detection_prompt(rec.question, rec.context, rec.llm_answer)
    if not rec.label:
        return TrainingRecord(prompt, NO_RESPONSE)
    try:
        reason = reasoning.explain(rec.question, rec.context, rec.llm_answer)
    except Exception as exc:
        raise BackendFailure(f"reasoning backend failed: {exc}", index=i) from exc
    return TrainingRecord(prompt, YES_PREFIX + reason.strip())


def process_dataset(
    records: Sequence[RawHaluRecord],
    reasoning: ReasoningBackend,
    skip_failures: bool = False,
    max_workers: int = 1,
) -> list[TrainingRecord]:
    """Format every record; output order always matches input order.

    A reasoning failure aborts with :class:`BackendFailure` naming the record index,
    unless ``skip_failures`` is set, in which case the record is dropped and logged.
    """

    def attempt(item):
        i, rec = item
        try:
            return _process_one(i, rec, reasoning)
        except BackendFailure as exc:
            if not skip_failures:
                raise
            log.warning("skipping record %d: %s", i, exc)
            return None

    items = list(enumerate(records))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers) as pool:
            results = list(pool.map(attempt, items))
    else:
        results = [attempt(item) for item in items]
    return [r for r in results if r is not None]


def read_raw_records(fh: IO[str]) -> Iterator[RawHaluRecord]:
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            yield RawHaluRecord.from_dict(json.loads(line))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from exc


def write_training_records(records: Iterable[TrainingRecord], fh: IO[str]) -> int:
    n = 0
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
        n += 1
    return n


def split_response(response: str) -> Optional[str]:
    """Reason carried by a ``"Yes, ..."`` response, ``None`` for ``"No."``."""
    if response == NO_RESPONSE:
        return None
    if response.startswith(YES_PREFIX):
        return response[len(YES_PREFIX):]
    raise ValueError(f"response has neither shape: {response[:40]!r}")
