"""Request and policy value types shared by the pipeline and its stages."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace
from types import MappingProxyType
from typing import Mapping

from guardrail.errors import InvalidQuery

STAGES = (
    "input_safety",
    "grounding",
    "inference",
    "hallucination_detection",
    "customizer",
    "repairer",
)
# inference cannot be switched off
TOGGLEABLE_STAGES = tuple(s for s in STAGES if s != "inference")


class UnsafeInputAction(str, enum.Enum):
    REJECT = "reject"
    ANNOTATE = "annotate"


class IndeterminateAction(str, enum.Enum):
    TREAT_HALLUCINATED = "treat_hallucinated"
    TREAT_SAFE = "treat_safe"


@dataclass(frozen=True)
class Query:
    text: str
    metadata: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise InvalidQuery("query text must be non-empty")
        object.__setattr__(self, "metadata", MappingProxyType(dict(self.metadata)))


@dataclass(frozen=True)
class StageFlags:
    input_safety: bool = True
    grounding: bool = True
    hallucination_detection: bool = True
    customizer: bool = True
    repairer: bool = True

    def enabled(self, stage: str) -> bool:
        return stage == "inference" or getattr(self, stage)


@dataclass(frozen=True)
class PipelinePolicy:
    stages_enabled: StageFlags = field(default_factory=StageFlags)
    unsafe_input_action: UnsafeInputAction = UnsafeInputAction.REJECT
    indeterminate_hallucination_action: IndeterminateAction = IndeterminateAction.TREAT_HALLUCINATED
    top_k_contexts: int = 3
    halu_threshold: float = 0.5
    top_k_tokens: int = 10
    input_unsafe_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "unsafe_input_action", UnsafeInputAction(self.unsafe_input_action))
        object.__setattr__(
            self,
            "indeterminate_hallucination_action",
            IndeterminateAction(self.indeterminate_hallucination_action),
        )
        for name in ("halu_threshold", "input_unsafe_threshold"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
        for name in ("top_k_contexts", "top_k_tokens"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    def with_stages(self, **flags) -> "PipelinePolicy":
        return replace(self, stages_enabled=replace(self.stages_enabled, **flags))

    def to_dict(self) -> dict:
        return {
            "stages_enabled": {f.name: getattr(self.stages_enabled, f.name) for f in fields(StageFlags)},
            "unsafe_input_action": self.unsafe_input_action.value,
            "indeterminate_hallucination_action": self.indeterminate_hallucination_action.value,
            "top_k_contexts": self.top_k_contexts,
            "halu_threshold": self.halu_threshold,
            "top_k_tokens": self.top_k_tokens,
            "input_unsafe_threshold": self.input_unsafe_threshold,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PipelinePolicy":
        d = dict(d)
        stages = d.pop("stages_enabled", None) or {}
        unknown = set(stages) - {f.name for f in fields(StageFlags)}
        if unknown:
            raise ValueError(f"unknown stages: {sorted(unknown)}")
        return cls(stages_enabled=StageFlags(**stages), **d)
