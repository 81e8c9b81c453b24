"""Vector indexing of a knowledge corpus, exact top-k retrieval, and callback evaluation."""

from __future__ import annotations

import csv
import enum
import json
import random
import re
from dataclasses import dataclass
from typing import IO, Callable, Iterable, Iterator, Optional, Sequence

import numpy as np

from guardrail.backends.base import EmbeddingBackend
from guardrail.errors import (
    BackendFailure,
    EmptyCorpus,
    EmptyIndex,
    EmptyQuerySet,
    MissingKeyText,
    UnknownRecordId,
)
from guardrail.policy import Query

_NORM_TOLERANCE = 1e-6


class IndexStrategy(str, enum.Enum):
    WHOLE_KNOWLEDGE = "whole_knowledge"
    KEY_INFORMATION = "key_information"


@dataclass(frozen=True)
class KnowledgeRecord:
    id: str
    text: str
    key_text: Optional[str] = None

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"record {self.id!r}: text must be non-empty")
        if self.key_text is not None and not self.key_text:
            raise ValueError(f"record {self.id!r}: key_text must be non-empty when present")

    def indexed_text(self, strategy: IndexStrategy) -> str:
        if strategy is IndexStrategy.KEY_INFORMATION:
            if self.key_text is None:
                raise MissingKeyText(f"record {self.id!r} has no key_text")
            return self.key_text
        return self.text

    def to_dict(self):
        d = {"id": self.id, "text": self.text}
        if self.key_text is not None:
            d["key_text"] = self.key_text
        return d


@dataclass(frozen=True, eq=False)
class VectorIndex:
    """Immutable snapshot: ``vectors[i]`` is the unit embedding of ``records[i]``.

    Holds the embedder used at build time so queries land in the same space.
    """

    strategy: IndexStrategy
    records: tuple[KnowledgeRecord, ...]
    vectors: np.ndarray
    embedder: EmbeddingBackend

    def __post_init__(self):
        self.vectors.setflags(write=False)
        # rank of each record id in ascending order, used as the similarity tie-break
        order = sorted(range(len(self.records)), key=lambda i: self.records[i].id)
        rank = np.empty(len(self.records), dtype=np.int64)
        rank[order] = np.arange(len(self.records))
        object.__setattr__(self, "_id_rank", rank)
        object.__setattr__(self, "_by_id", {r.id: r for r in self.records})

    def __len__(self):
        return len(self.records)

    def has_record(self, record_id: str) -> bool:
        return record_id in self._by_id


@dataclass(frozen=True)
class RetrievalResult:
    record: KnowledgeRecord
    similarity: float

    def to_dict(self):
        return {"record": self.record.to_dict(), "similarity": self.similarity}


@dataclass(frozen=True)
class GroundedQuery:
    query_text: str
    contexts: tuple[RetrievalResult, ...]

    @property
    def context_blocks(self) -> list[str]:
        return [r.record.text for r in self.contexts]

    @property
    def context(self) -> str:
        return "\n".join(self.context_blocks)

    def prompt(self) -> str:
        return f"#Context#: {self.context}\n#Question#: {self.query_text}"

    def to_dict(self):
        return {
            "query_text": self.query_text,
            "prompt": self.prompt(),
            "contexts": [r.to_dict() for r in self.contexts],
        }


def _embed(embedder: EmbeddingBackend, text: str) -> np.ndarray:
    try:
        vec = np.asarray(embedder.embed(text), dtype=np.float64)
    except BackendFailure:
        raise
    except Exception as exc:
        raise BackendFailure(f"embedding backend failed: {exc}") from exc
    norm = np.linalg.norm(vec)
    if vec.ndim != 1 or not np.isfinite(norm) or norm == 0.0:
        raise BackendFailure("embedding backend returned an unusable vector")
    if abs(norm - 1.0) > _NORM_TOLERANCE:
        vec = vec / norm
    return vec


def build_index(
    corpus: Sequence[KnowledgeRecord],
    strategy: IndexStrategy,
    embedder: EmbeddingBackend,
) -> VectorIndex:
    strategy = IndexStrategy(strategy)
    if not corpus:
        raise EmptyCorpus("cannot index an empty corpus")
    seen = set()
    for rec in corpus:
        if rec.id in seen:
            raise ValueError(f"duplicate record id {rec.id!r}")
        seen.add(rec.id)
    texts = [rec.indexed_text(strategy) for rec in corpus]
    vectors = [_embed(embedder, t) for t in texts]
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise BackendFailure(f"embedding dimensions disagree: {sorted(dims)}")
    return VectorIndex(strategy, tuple(corpus), np.vstack(vectors), embedder)


def retrieve(index: VectorIndex, query_text: str, k: int) -> list[RetrievalResult]:
    """Exact top-k by cosine similarity; ties go to the smaller record id."""
    if len(index) == 0:
        raise EmptyIndex("index has no entries")
    if k < 1:
        raise ValueError("k must be a positive integer")
    q = _embed(index.embedder, query_text)
    if q.shape[0] != index.vectors.shape[1]:
        raise BackendFailure("query embedding dimension differs from the index")
    sims = np.clip(index.vectors @ q, -1.0, 1.0)
    order = np.lexsort((index._id_rank, -sims))[: min(k, len(index))]
    return [RetrievalResult(index.records[i], float(sims[i])) for i in order]


def ground_query(query: Query, index: VectorIndex, k: int) -> GroundedQuery:
    return GroundedQuery(query.text, tuple(retrieve(index, query.text, k)))


@dataclass(frozen=True)
class LabeledQuery:
    query_text: str
    relevant_record_id: str


def callback(index: VectorIndex, queries: Sequence[LabeledQuery], k: int) -> float:
    """Fraction of queries whose relevant record appears in their top-k results."""
    if not queries:
        raise EmptyQuerySet("callback needs at least one query")
    for q in queries:
        if not index.has_record(q.relevant_record_id):
            raise UnknownRecordId(q.relevant_record_id)
    hits = sum(
        any(r.record.id == q.relevant_record_id for r in retrieve(index, q.query_text, k))
        for q in queries
    )
    return hits / len(queries)


_STOPWORDS = frozenset(
    "a an the of to in on for and or is are was were be been do does did i my me you your "
    "it its this that what which how can could should would will with at by from as".split()
)


def synthetic_rephrase(text: str, seed: int = 0) -> str:
    """Drop stopwords and swap one adjacent word pair, deterministically per (text, seed)."""
    words = re.findall(r"[\w'-]+", text)
    kept = [w for w in words if w.lower() not in _STOPWORDS] or words
    rng = random.Random(f"{seed}:{text}")
    if len(kept) >= 2:
        i = rng.randrange(len(kept) - 1)
        kept[i], kept[i + 1] = kept[i + 1], kept[i]
    return " ".join(kept)


@dataclass(frozen=True)
class CallbackRow:
    strategy: str
    query_mode: str
    k: int
    callback: float


def run_callback_experiment(
    corpus: Sequence[KnowledgeRecord],
    strategy: IndexStrategy,
    query_mode: str,
    k_values: Iterable[int],
    embedder: EmbeddingBackend,
    sample_size: int = 50,
    seed: int = 0,
    rephraser: Optional[Callable[[str], str]] = None,
) -> list[CallbackRow]:
    """Sample up to ``sample_size`` records, query each with its question (``key_text``, else
    ``text``) verbatim or rephrased, and report the callback at every k."""
    strategy = IndexStrategy(strategy)
    if query_mode not in ("original", "rephrased"):
        raise ValueError(f"query_mode must be 'original' or 'rephrased', got {query_mode!r}")
    index = build_index(corpus, strategy, embedder)
    sample = random.Random(seed).sample(list(corpus), min(sample_size, len(corpus)))
    if query_mode == "rephrased" and rephraser is None:
        rephraser = lambda t: synthetic_rephrase(t, seed)  # noqa: E731
    queries = []
    for rec in sample:
        question = rec.key_text if rec.key_text is not None else rec.text
        text = rephraser(question) if query_mode == "rephrased" else question
        queries.append(LabeledQuery(text, rec.id))
    return [
        CallbackRow(strategy.value, query_mode, k, callback(index, queries, k))
        for k in k_values
    ]


def read_corpus(fh: IO[str]) -> Iterator[KnowledgeRecord]:
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            yield KnowledgeRecord(str(d["id"]), d["text"], d.get("key_text"))
        except (KeyError, ValueError, TypeError) as exc:
            raise ValueError(f"corpus line {lineno}: {exc}") from exc


def write_corpus(records: Iterable[KnowledgeRecord], fh: IO[str]) -> None:
    for rec in records:
        fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def write_callback_csv(rows: Iterable[CallbackRow], fh: IO[str]) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["strategy", "query_mode", "k", "callback"])
    for row in rows:
        writer.writerow([row.strategy, row.query_mode, row.k, repr(row.callback)])
