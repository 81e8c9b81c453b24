"""Unsafe-input screening and first-token hallucination scoring."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Optional

from guardrail.backends.base import (
    FirstTokenDistribution,
    GenerationBackend,
    ModerationBackend,
    check_probability,
)
from guardrail.dataprep import render_detection_prompt
from guardrail.errors import BackendFailure
from guardrail.policy import IndeterminateAction, PipelinePolicy, Query

UNEXPLAINED_REASON = "[unexplained] the detector flagged the answer without an explanation"
INDETERMINATE_REASON = "[indeterminate] no Yes/No token among the top-k first tokens; resolved by policy"


@dataclass(frozen=True)
class SafetyVerdict:
    label: str  # "safe" | "unsafe"
    score: float

    @property
    def unsafe(self) -> bool:
        return self.label == "unsafe"

    def to_dict(self):
        return {"label": self.label, "score": self.score}


@dataclass(frozen=True)
class YesNoTokenSets:
    yes_tokens: frozenset[str] = frozenset({"Yes", "yes", " Yes", " yes"})
    no_tokens: frozenset[str] = frozenset({"No", "no", " No", " no"})

    def __post_init__(self):
        object.__setattr__(self, "yes_tokens", frozenset(self.yes_tokens))
        object.__setattr__(self, "no_tokens", frozenset(self.no_tokens))
        if not self.yes_tokens or not self.no_tokens:
            raise ValueError("yes and no token sets must be non-empty")
        if self.yes_tokens & self.no_tokens:
            raise ValueError("yes and no token sets overlap")

    def swapped(self) -> "YesNoTokenSets":
        return YesNoTokenSets(self.no_tokens, self.yes_tokens)


DEFAULT_TOKEN_SETS = YesNoTokenSets()


@dataclass(frozen=True)
class HallucinationAssessment:
    """``p_halu`` is ``None`` when the first-token distribution carried no yes/no mass;
    ``is_hallucinated`` then comes from the policy's indeterminate action."""

    p_halu: Optional[float]
    is_hallucinated: bool
    reason: str

    @property
    def indeterminate(self) -> bool:
        return self.p_halu is None

    def to_dict(self):
        return {
            "p_halu": self.p_halu,
            "is_hallucinated": self.is_hallucinated,
            "reason": self.reason,
            "indeterminate": self.indeterminate,
        }


def check_input(query: Query, moderation: ModerationBackend, threshold: float = 0.5) -> SafetyVerdict:
    try:
        raw = moderation.classify(query.text)
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"moderation backend failed: {exc}") from exc
    score = check_probability(raw, "moderation score")
    return SafetyVerdict("unsafe" if score >= threshold else "safe", score)


def compute_p_halu(dist: FirstTokenDistribution, sets: YesNoTokenSets = DEFAULT_TOKEN_SETS) -> Optional[float]:
    """Share of yes-token mass in the combined yes/no mass of the top-k first tokens.

    Returns ``None`` (indeterminate) when no candidate is a yes or no token with
    positive probability.
    """
    yes = math.fsum(c.prob for c in dist.candidates if c.surface in sets.yes_tokens)
    no = math.fsum(c.prob for c in dist.candidates if c.surface in sets.no_tokens)
    total = yes + no
    if total == 0.0:
        return None
    return yes / total


def extract_reason(text: str, yes_tokens: Iterable[str] = DEFAULT_TOKEN_SETS.yes_tokens) -> str:
    """Drop a leading yes-marker and one following comma/space from a detector reply."""
    stripped = text.lstrip()
    for tok in sorted({t.strip() for t in yes_tokens}, key=len, reverse=True):
        rest = stripped[len(tok):]
        if tok and stripped.startswith(tok) and not rest[:1].isalnum():
            return re.sub(r"^,? ?", "", rest, count=1).strip()
    return stripped.strip()


def detect_hallucination(
    question: str,
    context: str,
    answer: str,
    policy: PipelinePolicy,
    generation: GenerationBackend,
    sets: YesNoTokenSets = DEFAULT_TOKEN_SETS,
) -> HallucinationAssessment:
    prompt = render_detection_prompt(question, context, answer)
    try:
        out = generation.generate(prompt, policy.top_k_tokens)
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"generation backend failed: {exc}") from exc
    dist = out.first_token_distribution
    if len(dist.candidates) > policy.top_k_tokens:
        dist = FirstTokenDistribution(dist.candidates[: policy.top_k_tokens], policy.top_k_tokens)

    p = compute_p_halu(dist, sets)
    if p is None:
        flagged = policy.indeterminate_hallucination_action is IndeterminateAction.TREAT_HALLUCINATED
        return HallucinationAssessment(None, flagged, INDETERMINATE_REASON if flagged else "")
    flagged = p >= policy.halu_threshold
    reason = ""
    if flagged:
        reason = extract_reason(out.text, sets.yes_tokens) or UNEXPLAINED_REASON
    return HallucinationAssessment(p, flagged, reason)
