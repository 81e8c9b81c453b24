"""JSON-over-HTTP adapter: one POST route per backend slot on a model server.

Routes (relative to the endpoint base URL)::

    /classify  {"text"}                          -> {"score"}
    /generate  {"prompt", "top_k"}               -> {"text", "candidates": [{"token", "prob"}]}
    /embed     {"text"}                          -> {"vector"}
    /explain   {"question", "context", "answer"} -> {"reason"}
    /complete  {"prompt"}                        -> {"text"}
"""

from __future__ import annotations

from typing import Optional

import httpx
import numpy as np

from guardrail.backends.base import (
    FirstTokenDistribution,
    GenerationOutput,
    TokenCandidate,
    check_probability,
)
from guardrail.errors import BackendFailure


class HttpBackend:
    """Implements every slot contract against one server. ``httpx.Client`` is thread-safe,
    so a single instance can be shared across concurrent requests."""

    def __init__(self, endpoint: str, timeout: float = 30.0, client: Optional[httpx.Client] = None):
        self.endpoint = endpoint.rstrip("/")
        self._client = client or httpx.Client(timeout=timeout)

    def close(self):
        self._client.close()

    def _post(self, route: str, payload: dict) -> dict:
        try:
            resp = self._client.post(f"{self.endpoint}/{route}", json=payload)
            resp.raise_for_status()
            body = resp.json()
        except (httpx.HTTPError, ValueError) as exc:
            raise BackendFailure(f"POST /{route} failed: {exc}") from exc
        if not isinstance(body, dict):
            raise BackendFailure(f"POST /{route} returned non-object JSON")
        return body

    @staticmethod
    def _field(body: dict, name: str, route: str):
        try:
            return body[name]
        except KeyError:
            raise BackendFailure(f"/{route} response lacks {name!r}") from None

    def classify(self, text: str) -> float:
        body = self._post("classify", {"text": text})
        return check_probability(self._field(body, "score", "classify"))

    def generate(self, prompt: str, top_k: int) -> GenerationOutput:
        body = self._post("generate", {"prompt": prompt, "top_k": top_k})
        text = self._field(body, "text", "generate")
        raw = self._field(body, "candidates", "generate")
        try:
            cands = [
                TokenCandidate(int(c.get("token_id", i)), str(c["token"]), check_probability(c["prob"], "prob"))
                for i, c in enumerate(raw)
            ]
            cands.sort(key=lambda c: -c.prob)
            dist = FirstTokenDistribution(tuple(cands[:top_k]), top_k)
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendFailure(f"malformed /generate candidates: {exc}") from exc
        return GenerationOutput(str(text), dist)

    def embed(self, text: str) -> np.ndarray:
        body = self._post("embed", {"text": text})
        vec = np.asarray(self._field(body, "vector", "embed"), dtype=np.float64)
        norm = np.linalg.norm(vec)
        if vec.ndim != 1 or norm == 0 or not np.isfinite(norm):
            raise BackendFailure("/embed returned an unusable vector")
        return vec / norm

    def explain(self, question: str, context: str, answer: str) -> str:
        body = self._post("explain", {"question": question, "context": context, "answer": answer})
        return str(self._field(body, "reason", "explain"))

    def complete(self, prompt: str) -> str:
        body = self._post("complete", {"prompt": prompt})
        return str(self._field(body, "text", "complete"))
