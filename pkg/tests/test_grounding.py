import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from guardrail.backends import HashedNgramEmbedder
from guardrail.errors import EmptyCorpus, EmptyQuerySet, MissingKeyText, UnknownRecordId
from guardrail.grounding import (
    IndexStrategy,
    KnowledgeRecord,
    LabeledQuery,
    build_index,
    callback,
    ground_query,
    read_corpus,
    retrieve,
    run_callback_experiment,
    synthetic_rephrase,
    write_callback_csv,
    write_corpus,
)
from guardrail.policy import Query
from guardrail.synthetic import make_qa_corpus
from oracles import brute_force_callback, brute_force_ranking

KEY = IndexStrategy.KEY_INFORMATION
WHOLE = IndexStrategy.WHOLE_KNOWLEDGE

CORPUS = [
    KnowledgeRecord("r1", "Question: how do I reset my password?\nAnswer: use the account page.", "how do I reset my password?"),
    KnowledgeRecord("r2", "Question: where is my order?\nAnswer: check the tracking link.", "where is my order?"),
    KnowledgeRecord("r3", "Question: can I pay with a card?\nAnswer: all major cards work.", "can I pay with a card?"),
    KnowledgeRecord("r4", "Shipping is free above fifty dollars."),
    KnowledgeRecord("r5", "Returns are accepted within thirty days."),
]


class TestBuildIndex:
    def test_key_information_size_and_norms(self, embedder):
        idx = build_index(CORPUS[:3], KEY, embedder)
        assert len(idx) == 3 and idx.vectors.shape == (3, 256)
        assert np.allclose(np.linalg.norm(idx.vectors, axis=1), 1.0, atol=1e-6)
        assert np.array_equal(idx.vectors[0], embedder.embed(CORPUS[0].key_text))

    def test_strategies_embed_different_text(self, embedder):
        key = build_index(CORPUS[:3], KEY, embedder)
        whole = build_index(CORPUS[:3], WHOLE, embedder)
        for i in range(3):
            assert not np.array_equal(key.vectors[i], whole.vectors[i])

    def test_missing_key_text(self, embedder):
        with pytest.raises(MissingKeyText):
            build_index(CORPUS, KEY, embedder)

    def test_empty_corpus(self, embedder):
        with pytest.raises(EmptyCorpus):
            build_index([], WHOLE, embedder)

    def test_duplicate_ids(self, embedder):
        with pytest.raises(ValueError):
            build_index([CORPUS[0], CORPUS[0]], WHOLE, embedder)

    def test_index_is_read_only(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        with pytest.raises(ValueError):
            idx.vectors[0, 0] = 1.0

    def test_record_validation(self):
        with pytest.raises(ValueError):
            KnowledgeRecord("x", "")
        with pytest.raises(ValueError):
            KnowledgeRecord("x", "text", "")


class TestRetrieve:
    def test_self_similarity(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        top = retrieve(idx, CORPUS[3].text, 1)[0]
        assert top.record.id == "r4"
        assert top.similarity == pytest.approx(1.0, abs=1e-6)

    def test_k_clamped(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        assert len(retrieve(idx, "anything", 50)) == 5

    @pytest.mark.parametrize("query", ["where is my order", "free shipping", "password reset help", "cards"])
    def test_matches_brute_force(self, embedder, query):
        idx = build_index(CORPUS, WHOLE, embedder)
        got = [(r.record.id, r.similarity) for r in retrieve(idx, query, 5)]
        expected = brute_force_ranking(embedder, CORPUS, WHOLE, query, 5)
        assert [g[0] for g in got] == [e[0] for e in expected]
        for (_, a), (_, b) in zip(got, expected):
            assert a == pytest.approx(b, abs=1e-12)

    def test_ties_break_by_id(self, embedder):
        recs = [KnowledgeRecord("b", "same text"), KnowledgeRecord("a", "same text"), KnowledgeRecord("c", "other")]
        idx = build_index(recs, WHOLE, embedder)
        assert [r.record.id for r in retrieve(idx, "same text", 3)][:2] == ["a", "b"]

    def test_nested_top_k(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        for k in range(1, 5):
            small = [r.record.id for r in retrieve(idx, "order status", k)]
            big = [r.record.id for r in retrieve(idx, "order status", k + 1)]
            assert big[:k] == small

    def test_repeatable(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        assert retrieve(idx, "refund", 5) == retrieve(idx, "refund", 5)


class TestGroundQuery:
    def test_single_block(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        g = ground_query(Query(CORPUS[4].text), idx, 1)
        assert g.context_blocks == [CORPUS[4].text]
        assert g.prompt() == f"#Context#: {CORPUS[4].text}\n#Question#: {CORPUS[4].text}"

    def test_clamped_blocks(self, embedder):
        idx = build_index(CORPUS[:2], WHOLE, embedder)
        assert len(ground_query(Query("order"), idx, 3).contexts) == 2

    def test_blocks_in_similarity_order(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        g = ground_query(Query("card payment"), idx, 3)
        expected = [rid for rid, _ in brute_force_ranking(embedder, CORPUS, WHOLE, "card payment", 3)]
        assert [r.record.id for r in g.contexts] == expected
        by_id = {r.id: r.text for r in CORPUS}
        assert g.prompt() == "#Context#: " + "\n".join(by_id[i] for i in expected) + "\n#Question#: card payment"


class TestCallback:
    def test_self_retrieval(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        qs = [LabeledQuery(r.text, r.id) for r in CORPUS]
        assert callback(idx, qs, 1) == 1.0

    def test_exactly_half(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        qs = [
            LabeledQuery(CORPUS[0].text, "r1"),
            LabeledQuery(CORPUS[1].text, "r2"),
            LabeledQuery(CORPUS[3].text, "r5"),  # verbatim r4 text, labelled r5
            LabeledQuery(CORPUS[4].text, "r3"),  # verbatim r5 text, labelled r3
        ]
        assert brute_force_callback(embedder, CORPUS, WHOLE, qs, 1) == 0.5
        assert callback(idx, qs, 1) == 0.5

    def test_k_equals_corpus(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        qs = [LabeledQuery("zzz", "r3"), LabeledQuery("qqq", "r5")]
        assert callback(idx, qs, len(CORPUS)) == 1.0

    def test_errors(self, embedder):
        idx = build_index(CORPUS, WHOLE, embedder)
        with pytest.raises(EmptyQuerySet):
            callback(idx, [], 1)
        with pytest.raises(UnknownRecordId):
            callback(idx, [LabeledQuery("x", "nope")], 1)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.text(alphabet="abcdefgh ", min_size=1, max_size=20), min_size=2, max_size=12, unique=True),
           st.data())
    def test_monotone_and_matches_oracle(self, texts, data):
        emb = HashedNgramEmbedder()
        recs = [KnowledgeRecord(f"r{i:02d}", t) for i, t in enumerate(texts)]
        idx = build_index(recs, WHOLE, emb)
        qs = [
            LabeledQuery(data.draw(st.text(alphabet="abcdefgh ", min_size=1, max_size=10)),
                         data.draw(st.sampled_from([r.id for r in recs])))
            for _ in range(4)
        ]
        values = [callback(idx, qs, k) for k in range(1, len(recs) + 1)]
        assert values == sorted(values)
        assert values[-1] == 1.0
        for k in (1, 2):
            assert values[k - 1] == brute_force_callback(emb, recs, WHOLE, qs, k)


class TestExperiment:
    def test_rows_and_full_k(self, embedder):
        corpus = make_qa_corpus(20, seed=1)
        rows = run_callback_experiment(corpus, KEY, "original", [1, 3, 20], embedder, seed=1)
        assert [(r.strategy, r.query_mode, r.k) for r in rows] == [("key_information", "original", k) for k in (1, 3, 20)]
        assert rows[-1].callback == 1.0

    def test_deterministic(self, embedder):
        corpus = make_qa_corpus(30, seed=2)
        a = run_callback_experiment(corpus, WHOLE, "rephrased", [1, 3], embedder, seed=5)
        b = run_callback_experiment(corpus, WHOLE, "rephrased", [1, 3], embedder, seed=5)
        assert a == b

    def test_key_beats_whole(self, embedder):
        corpus = make_qa_corpus(40, seed=0)
        for mode in ("original", "rephrased"):
            key = run_callback_experiment(corpus, KEY, mode, [1, 3, 5, 10], embedder)
            whole = run_callback_experiment(corpus, WHOLE, mode, [1, 3, 5, 10], embedder)
            assert all(k.callback >= w.callback for k, w in zip(key, whole))

    def test_bad_mode(self, embedder):
        with pytest.raises(ValueError):
            run_callback_experiment(CORPUS, WHOLE, "paraphrased", [1], embedder)

    def test_rephrase_deterministic_and_different(self):
        q = "How do I return the standing desk?"
        assert synthetic_rephrase(q, 0) == synthetic_rephrase(q, 0)
        assert synthetic_rephrase(q, 0) != q
        assert "the" not in synthetic_rephrase(q, 0).lower().split()

    def test_csv(self, embedder):
        rows = run_callback_experiment(CORPUS, WHOLE, "original", [1, 5], embedder)
        buf = io.StringIO()
        write_callback_csv(rows, buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "strategy,query_mode,k,callback"
        assert lines[2] == "whole_knowledge,original,5,1.0"


def test_corpus_jsonl_round_trip():
    buf = io.StringIO()
    write_corpus(CORPUS, buf)
    buf.seek(0)
    assert list(read_corpus(buf)) == CORPUS
