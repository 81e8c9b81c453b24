"""Deterministic, script-driven backends for tests, demos and offline runs.

Every mock is immutable after construction apart from its call counter, and its
outputs depend only on the input and the script it was built with.
"""

from __future__ import annotations

import hashlib
import re
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np

from guardrail.backends.base import (
    FirstTokenDistribution,
    GenerationOutput,
    softmax_top_k,
)
from guardrail.errors import BackendFailure

DEFAULT_EXPLANATION = "The answer is not supported by the provided context."


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class _Counted:
    def __init__(self):
        self._calls = 0
        self._count_lock = threading.Lock()

    def _tick(self):
        with self._count_lock:
            self._calls += 1

    @property
    def calls(self) -> int:
        return self._calls


class MockModeration(_Counted):
    """Keyword-scored moderation: the score is the highest rule weight whose keyword
    occurs in the text (case-insensitive), else ``default``."""

    def __init__(self, rules: Optional[Mapping[str, float]] = None, default: float = 0.0):
        super().__init__()
        self.rules = {k.lower(): float(v) for k, v in (rules or {}).items()}
        self.default = float(default)

    def classify(self, text: str) -> float:
        self._tick()
        lowered = text.lower()
        hits = [w for k, w in self.rules.items() if k in lowered]
        return max(hits) if hits else self.default


@dataclass(frozen=True)
class ScriptedReply:
    """A canned generation: full text plus first-token scores.

    ``first_tokens`` holds ``(surface, value)`` pairs; values are probabilities, or
    raw logits when ``logits=True`` (normalized with softmax at call time).
    """

    text: str
    first_tokens: tuple[tuple[str, float], ...]
    logits: bool = False

    def render(self, top_k: int) -> GenerationOutput:
        if self.logits:
            surfaces = [s for s, _ in self.first_tokens]
            dist = softmax_top_k(surfaces, [v for _, v in self.first_tokens], top_k)
        else:
            dist = FirstTokenDistribution.from_pairs(self.first_tokens, k=top_k)
        return GenerationOutput(self.text, dist)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ScriptedReply":
        pairs = d.get("first_tokens")
        if pairs is None:
            first = (d["text"].split() or [""])[0]
            pairs = [[first, 1.0]]
        return cls(d["text"], tuple((str(s), float(v)) for s, v in pairs), bool(d.get("logits", False)))


Responder = Callable[[str], ScriptedReply]


def echo_context(prompt: str) -> ScriptedReply:
    """Answer with the retrieved context blocks verbatim (or the prompt if ungrounded)."""
    m = re.search(r"#Context#: (.*?)\n#Question#:", prompt, re.DOTALL)
    text = m.group(1) if m else prompt
    first = (text.split() or [""])[0]
    return ScriptedReply(text, ((first, 1.0),))


class MockGeneration(_Counted):
    """Lookup order: exact prompt, sha256 of prompt, first matching substring rule, fallback.

    A miss with no fallback raises :class:`BackendFailure`.
    """

    def __init__(
        self,
        script: Optional[Mapping[str, ScriptedReply]] = None,
        rules: Sequence[tuple[str, ScriptedReply]] = (),
        fallback: Union[ScriptedReply, Responder, None] = None,
    ):
        super().__init__()
        self.script = dict(script or {})
        self.rules = tuple(rules)
        self.fallback = fallback

    def _lookup(self, prompt: str) -> ScriptedReply:
        reply = self.script.get(prompt)
        if reply is None:
            reply = self.script.get(prompt_hash(prompt))
        if reply is not None:
            return reply
        for needle, reply in self.rules:
            if needle in prompt:
                return reply
        if self.fallback is None:
            raise BackendFailure(f"no scripted generation for prompt {prompt_hash(prompt)[:12]}")
        return self.fallback(prompt) if callable(self.fallback) else self.fallback

    def generate(self, prompt: str, top_k: int) -> GenerationOutput:
        self._tick()
        return self._lookup(prompt).render(top_k)


@lru_cache(maxsize=65536)
def _bucket(gram: str, dim: int) -> int:
    digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") % dim


class HashedNgramEmbedder(_Counted):
    """Character n-gram counts hashed into ``dim`` buckets, then L2-normalized.

    The text is padded with sentinel characters so even the empty string yields
    at least one n-gram.
    """

    def __init__(self, dim: int = 256, n: int = 3):
        super().__init__()
        if dim < 1 or n < 1:
            raise ValueError("dim and n must be positive")
        self.dim = dim
        self.n = n

    def embed(self, text: str) -> np.ndarray:
        self._tick()
        pad = "\x02" * (self.n - 1)
        padded = f"{pad}{text}{pad}" if self.n > 1 else (text or "\x02")
        vec = np.zeros(self.dim, dtype=np.float64)
        for i in range(len(padded) - self.n + 1):
            vec[_bucket(padded[i : i + self.n], self.dim)] += 1.0
        return vec / np.linalg.norm(vec)


class MockReasoning(_Counted):
    """Explanations looked up by ``(question, context, answer)``, or by answer alone."""

    def __init__(
        self,
        table: Optional[Mapping] = None,
        fallback: Optional[str] = DEFAULT_EXPLANATION,
        fail_on: Sequence[str] = (),
    ):
        super().__init__()
        self.table = dict(table or {})
        self.fallback = fallback
        self.fail_on = frozenset(fail_on)

    def explain(self, question: str, context: str, answer: str) -> str:
        self._tick()
        if answer in self.fail_on:
            raise BackendFailure(f"scripted reasoning failure for answer {answer!r}")
        for key in ((question, context, answer), answer):
            if key in self.table:
                return self.table[key]
        if self.fallback is None:
            raise BackendFailure("no scripted explanation")
        return self.fallback


_ANSWER_FIELD = re.compile(r"\n#Answer#: (.*?)\n#Hallucination Reason#:", re.DOTALL)


class MockFixing(_Counted):
    """Scripted fixing model. ``echo=True`` returns the answer embedded in the prompt."""

    def __init__(
        self,
        script: Optional[Mapping[str, str]] = None,
        rules: Sequence[tuple[str, str]] = (),
        fallback: Optional[str] = None,
        echo: bool = False,
    ):
        super().__init__()
        self.script = dict(script or {})
        self.rules = tuple(rules)
        self.fallback = fallback
        self.echo = echo

    def complete(self, prompt: str) -> str:
        self._tick()
        if self.echo:
            m = _ANSWER_FIELD.search(prompt)
            if m is None:
                raise BackendFailure("echo mode needs a repair prompt with an #Answer# field")
            return m.group(1)
        out = self.script.get(prompt)
        if out is None:
            out = self.script.get(prompt_hash(prompt))
        if out is not None:
            return out
        for needle, out in self.rules:
            if needle in prompt:
                return out
        if self.fallback is None:
            raise BackendFailure(f"no scripted completion for prompt {prompt_hash(prompt)[:12]}")
        return self.fallback


def mock_from_config(slot: str, cfg: Mapping):
    """Build a mock backend from a plain mapping (as found in a service config file)."""
    cfg = dict(cfg or {})
    if slot == "moderation":
        return MockModeration(cfg.get("rules"), cfg.get("default", 0.0))
    if slot == "generation":
        script = {k: ScriptedReply.from_dict(v) for k, v in (cfg.get("script") or {}).items()}
        rules = [(r["contains"], ScriptedReply.from_dict(r)) for r in cfg.get("rules") or []]
        fb = cfg.get("fallback", "echo_context")
        if fb == "echo_context":
            fallback = echo_context
        elif fb is None:
            fallback = None
        else:
            fallback = ScriptedReply.from_dict(fb)
        return MockGeneration(script, rules, fallback)
    if slot == "embedding":
        return HashedNgramEmbedder(int(cfg.get("dim", 256)), int(cfg.get("n", 3)))
    if slot == "reasoning":
        return MockReasoning(cfg.get("table"), cfg.get("fallback", DEFAULT_EXPLANATION))
    if slot == "fixing":
        rules = [(r["contains"], r["text"]) for r in cfg.get("rules") or []]
        return MockFixing(cfg.get("script"), rules, cfg.get("fallback"), bool(cfg.get("echo", False)))
    raise ValueError(f"unknown slot {slot!r}")
