"""Backend contracts for the five model-call slots, plus the registry that binds them."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from guardrail.errors import BackendFailure, BackendUnavailable, UnknownSlot

SLOTS = ("moderation", "generation", "embedding", "reasoning", "fixing")

_SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class TokenCandidate:
    token_id: int
    surface: str
    prob: float

    def __post_init__(self):
        if not 0.0 <= self.prob <= 1.0 or math.isnan(self.prob):
            raise ValueError(f"token probability must lie in [0, 1], got {self.prob!r}")


@dataclass(frozen=True)
class FirstTokenDistribution:
    """Top-k candidates for the first generated token, highest probability first."""

    candidates: tuple[TokenCandidate, ...]
    k: int

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.k < 1:
            raise ValueError("k must be a positive integer")
        if len(self.candidates) > self.k:
            raise ValueError(f"{len(self.candidates)} candidates exceed k={self.k}")
        probs = [c.prob for c in self.candidates]
        if any(a < b for a, b in zip(probs, probs[1:])):
            raise ValueError("candidate probabilities must be non-increasing")
        if math.fsum(probs) > 1.0 + _SUM_TOLERANCE:
            raise ValueError(f"candidate probabilities sum to {math.fsum(probs)!r} > 1")

    @classmethod
    def from_pairs(cls, pairs: Sequence[tuple[str, float]], k: Optional[int] = None):
        """Build from ``(surface, prob)`` pairs in any order; token ids follow input order."""
        indexed = [TokenCandidate(i, s, float(p)) for i, (s, p) in enumerate(pairs)]
        indexed.sort(key=lambda c: (-c.prob, c.token_id))
        k = len(indexed) if k is None else k
        return cls(tuple(indexed[:k]), max(k, 1))

    def to_dict(self):
        return {
            "k": self.k,
            "candidates": [
                {"token_id": c.token_id, "token": c.surface, "prob": c.prob}
                for c in self.candidates
            ],
        }


@dataclass(frozen=True)
class GenerationOutput:
    text: str
    first_token_distribution: FirstTokenDistribution


def softmax_top_k(
    tokens: Sequence[str],
    logits: Sequence[float],
    top_k: int,
    token_ids: Optional[Sequence[int]] = None,
) -> FirstTokenDistribution:
    """Normalize first-token logits over the whole vocabulary and keep the top ``top_k``.

    Max-subtraction keeps ``exp`` finite. Ties in probability keep vocabulary order.
    """
    if len(tokens) != len(logits):
        raise ValueError("tokens and logits must have equal length")
    if not tokens:
        raise ValueError("empty vocabulary")
    if top_k < 1:
        raise ValueError("top_k must be a positive integer")
    ids = list(range(len(tokens))) if token_ids is None else list(token_ids)
    z = np.asarray(logits, dtype=np.float64)
    z = np.exp(z - z.max())
    probs = z / z.sum()
    order = sorted(range(len(tokens)), key=lambda i: (-probs[i], i))[:top_k]
    cands = tuple(TokenCandidate(int(ids[i]), tokens[i], float(probs[i])) for i in order)
    return FirstTokenDistribution(cands, top_k)


@runtime_checkable
class ModerationBackend(Protocol):
    def classify(self, text: str) -> float: ...


@runtime_checkable
class GenerationBackend(Protocol):
    def generate(self, prompt: str, top_k: int) -> GenerationOutput: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    def embed(self, text: str) -> np.ndarray: ...


@runtime_checkable
class ReasoningBackend(Protocol):
    def explain(self, question: str, context: str, answer: str) -> str: ...


@runtime_checkable
class FixingBackend(Protocol):
    def complete(self, prompt: str) -> str: ...


_SLOT_PROTOCOLS = {
    "moderation": ModerationBackend,
    "generation": GenerationBackend,
    "embedding": EmbeddingBackend,
    "reasoning": ReasoningBackend,
    "fixing": FixingBackend,
}


@dataclass(frozen=True)
class BackendDescriptor:
    slot: str
    kind: str = "mock"
    endpoint: Optional[str] = None
    config: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.slot not in SLOTS:
            raise UnknownSlot(self.slot)
        if self.kind not in ("mock", "http"):
            raise ValueError(f"backend kind must be 'mock' or 'http', got {self.kind!r}")
        if self.kind == "http" and not self.endpoint:
            raise ValueError("http backends require an endpoint")


class BackendRegistry:
    """Slot name to backend handle. Re-registering a slot replaces the previous handle."""

    def __init__(self, backends: Optional[Mapping[str, object]] = None):
        self._lock = threading.Lock()
        self._backends: dict[str, object] = {}
        for slot, backend in (backends or {}).items():
            self.register(slot, backend)

    def register(self, slot: str, backend) -> None:
        if slot not in SLOTS:
            raise UnknownSlot(f"unknown backend slot {slot!r}; expected one of {SLOTS}")
        if not isinstance(backend, _SLOT_PROTOCOLS[slot]):
            raise TypeError(f"{type(backend).__name__} does not implement the {slot} contract")
        with self._lock:
            self._backends[slot] = backend

    def get(self, slot: str):
        if slot not in SLOTS:
            raise UnknownSlot(slot)
        try:
            return self._backends[slot]
        except KeyError:
            raise BackendUnavailable(slot) from None

    def __contains__(self, slot):
        return slot in self._backends

    def snapshot(self) -> "BackendRegistry":
        """Copy taken at request start so a concurrent re-registration cannot split a run."""
        with self._lock:
            copy = BackendRegistry()
            copy._backends = dict(self._backends)
        return copy


def check_probability(value, what="score") -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise BackendFailure(f"{what} is not a number: {value!r}") from None
    if not 0.0 <= value <= 1.0:
        raise BackendFailure(f"{what} {value!r} outside [0, 1]")
    return value
