"""Rewrite a hallucinated answer, using the detector's explanation as guidance."""

from __future__ import annotations

from dataclasses import dataclass

from guardrail.backends.base import FixingBackend
from guardrail.errors import BackendFailure

REPAIR_INSTRUCTION = (
    "Rewrite the answer so it is faithful to the context and free of the described hallucination."
)


@dataclass(frozen=True)
class RepairRequest:
    question: str
    context: str
    answer: str
    reason: str

    def __post_init__(self):
        for name in ("question", "answer", "reason"):
            if not getattr(self, name):
                raise ValueError(f"{name} must be non-empty")


@dataclass(frozen=True)
class RepairResult:
    corrected_answer: str
    repaired: bool

    def to_dict(self):
        return {"corrected_answer": self.corrected_answer, "repaired": self.repaired}


def build_repair_prompt(req: RepairRequest) -> str:
    # Field values go in verbatim; callers inside the pipeline are trusted.
    return (
        f"#Question#: {req.question}\n"
        f"#Context#: {req.context}\n"
        f"#Answer#: {req.answer}\n"
        f"#Hallucination Reason#: {req.reason}\n"
        f"{REPAIR_INSTRUCTION}\n"
        f"#Corrected Answer#:"
    )


def repair(req: RepairRequest, fixing: FixingBackend) -> RepairResult:
    """Single pass through the fixing model. An empty or echoed completion leaves the
    answer untouched and reports ``repaired=False``."""
    try:
        completion = fixing.complete(build_repair_prompt(req))
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"fixing backend failed: {exc}") from exc
    corrected = str(completion).strip()
    if not corrected or corrected == req.answer.strip():
        return RepairResult(req.answer, False)
    return RepairResult(corrected, True)
