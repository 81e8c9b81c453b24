import http.server
import json
import math
import threading

import numpy as np
import pytest

from guardrail.backends import (
    BackendDescriptor,
    BackendRegistry,
    FirstTokenDistribution,
    HashedNgramEmbedder,
    HttpBackend,
    MockFixing,
    MockGeneration,
    MockModeration,
    MockReasoning,
    ScriptedReply,
    TokenCandidate,
    echo_context,
    mock_from_config,
    prompt_hash,
    softmax_top_k,
)
from guardrail.backends.mock import DEFAULT_EXPLANATION
from guardrail.errors import BackendFailure, BackendUnavailable, UnknownSlot


class TestDistributionInvariants:
    def test_rejects_increasing_probs(self):
        with pytest.raises(ValueError):
            FirstTokenDistribution((TokenCandidate(0, "a", 0.1), TokenCandidate(1, "b", 0.2)), 2)

    def test_rejects_more_than_k(self):
        with pytest.raises(ValueError):
            FirstTokenDistribution((TokenCandidate(0, "a", 0.5), TokenCandidate(1, "b", 0.2)), 1)

    def test_rejects_mass_above_one(self):
        with pytest.raises(ValueError):
            FirstTokenDistribution((TokenCandidate(0, "a", 0.7), TokenCandidate(1, "b", 0.4)), 2)

    def test_tolerates_rounding_at_one(self):
        FirstTokenDistribution.from_pairs([("a", 0.7), ("b", 0.3 + 1e-12)])

    @pytest.mark.parametrize("p", [-0.1, 1.1, float("nan")])
    def test_candidate_prob_range(self, p):
        with pytest.raises(ValueError):
            TokenCandidate(0, "x", p)

    def test_from_pairs_sorts_and_truncates(self):
        d = FirstTokenDistribution.from_pairs([("b", 0.1), ("a", 0.6), ("c", 0.3)], k=2)
        assert [c.surface for c in d.candidates] == ["a", "c"]
        assert d.k == 2


class TestSoftmax:
    def test_two_logit_values(self):
        d = softmax_top_k(["Yes", "No"], [2.0, 0.0], top_k=10)
        # independent arithmetic: e^2 / (e^2 + 1)
        expected = math.exp(2) / (math.exp(2) + 1)
        assert [c.surface for c in d.candidates] == ["Yes", "No"]
        assert d.candidates[0].prob == pytest.approx(0.8808, abs=1e-4)
        assert d.candidates[0].prob == pytest.approx(expected, abs=1e-12)
        assert d.candidates[1].prob == pytest.approx(0.1192, abs=1e-4)

    def test_top_k_one(self):
        d = softmax_top_k(["Yes", "No", "The"], [0.1, 3.0, 1.0], top_k=1)
        assert len(d.candidates) == 1 and d.candidates[0].surface == "No"

    def test_large_logits_stay_finite(self):
        d = softmax_top_k(["a", "b"], [1000.0, 999.0], top_k=2)
        assert d.candidates[0].prob == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-12)

    def test_full_vocabulary_sums_to_one(self):
        rng = np.random.default_rng(3)
        logits = rng.normal(size=50)
        d = softmax_top_k([f"t{i}" for i in range(50)], logits, top_k=50)
        assert abs(sum(c.prob for c in d.candidates) - 1.0) <= 1e-9

    def test_truncated_sum_at_most_one(self):
        d = softmax_top_k([f"t{i}" for i in range(20)], list(range(20)), top_k=5)
        assert sum(c.prob for c in d.candidates) <= 1 + 1e-9


class TestRegistry:
    def test_unknown_slot(self):
        with pytest.raises(UnknownSlot):
            BackendRegistry().register("foo", MockModeration())

    def test_missing_slot(self):
        with pytest.raises(BackendUnavailable):
            BackendRegistry().get("generation")

    def test_last_write_wins(self):
        reg = BackendRegistry()
        first, second = MockModeration(), MockModeration(default=1.0)
        reg.register("moderation", first)
        reg.register("moderation", second)
        assert reg.get("moderation") is second

    def test_contract_checked(self):
        with pytest.raises(TypeError):
            BackendRegistry().register("embedding", MockModeration())

    def test_snapshot_is_isolated(self):
        reg = BackendRegistry({"moderation": MockModeration()})
        snap = reg.snapshot()
        reg.register("moderation", MockModeration(default=1.0))
        assert snap.get("moderation").default == 0.0

    def test_descriptor_http_needs_endpoint(self):
        with pytest.raises(ValueError):
            BackendDescriptor("generation", "http")


class TestMocks:
    def test_moderation_keyword(self):
        m = MockModeration({"attack": 1.0})
        assert m.classify("how to attack") == 1.0
        assert m.classify("how to bake bread") == 0.0
        assert m.calls == 2

    def test_generation_scripted_by_hash(self):
        prompt = "Is this hallucinated?"
        g = MockGeneration({prompt_hash(prompt): ScriptedReply("Yes, x", (("Yes", 0.8), ("No", 0.2)))})
        out = g.generate(prompt, 10)
        assert [(c.surface, c.prob) for c in out.first_token_distribution.candidates] == [("Yes", 0.8), ("No", 0.2)]

    def test_generation_logits(self):
        g = MockGeneration(fallback=ScriptedReply("No.", (("Yes", 0.0), ("No", 2.0)), logits=True))
        d = g.generate("anything", 10).first_token_distribution
        assert d.candidates[0].surface == "No"
        assert d.candidates[0].prob == pytest.approx(0.8808, abs=1e-4)

    def test_generation_miss_without_fallback(self):
        with pytest.raises(BackendFailure):
            MockGeneration().generate("x", 1)

    def test_generation_rule(self):
        g = MockGeneration(rules=[("needle", ScriptedReply("hit", (("hit", 1.0),)))])
        assert g.generate("hay needle hay", 3).text == "hit"

    def test_echo_context(self):
        reply = echo_context("#Context#: alpha\nbeta\n#Question#: q?")
        assert reply.text == "alpha\nbeta"

    def test_embedding_deterministic_and_unit(self):
        e = HashedNgramEmbedder()
        a, b = e.embed("hello world"), e.embed("hello world")
        assert np.array_equal(a, b)
        assert a.shape == (256,)
        assert abs(np.linalg.norm(a) - 1.0) <= 1e-6
        assert abs(np.linalg.norm(e.embed("")) - 1.0) <= 1e-6

    def test_embedding_distinct_short_strings(self):
        e = HashedNgramEmbedder()
        words = ["Yes", "yes", "No", "no", "a", "b", "ab", "ba", "cat", "act", "tac", "refund", "return"]
        vecs = {w: e.embed(w).tobytes() for w in words}
        assert len(set(vecs.values())) == len(words)

    def test_reasoning_table_and_fallback(self):
        r = MockReasoning({"bad answer": "it contradicts the context"})
        assert r.explain("q", "c", "bad answer") == "it contradicts the context"
        assert r.explain("q", "c", "other") == DEFAULT_EXPLANATION
        with pytest.raises(BackendFailure):
            MockReasoning(fallback=None).explain("q", "c", "x")

    def test_fixing_echo(self):
        f = MockFixing(echo=True)
        prompt = "#Question#: q\n#Context#: c\n#Answer#: Lyon\n#Hallucination Reason#: r\n..."
        assert f.complete(prompt) == "Lyon"

    def test_mock_from_config(self):
        g = mock_from_config("generation", {"rules": [{"contains": "x", "text": "Yes, y", "first_tokens": [["Yes", 1.0]]}]})
        assert g.generate("xx", 2).text == "Yes, y"
        assert mock_from_config("embedding", {"dim": 64}).dim == 64

    def test_mocks_pure_across_instances(self):
        e1, e2 = HashedNgramEmbedder(), HashedNgramEmbedder()
        assert e1.embed("stable").tobytes() == e2.embed("stable").tobytes()


class _StubHandler(http.server.BaseHTTPRequestHandler):
    routes = {
        "/classify": lambda b: {"score": 0.3},
        "/generate": lambda b: {
            "text": "Yes, fabricated",
            "candidates": [{"token": "No", "prob": 0.2}, {"token": "Yes", "prob": 0.7}, {"token": "The", "prob": 0.05}],
        },
        "/embed": lambda b: {"vector": [3.0, 4.0]},
        "/explain": lambda b: {"reason": f"because {b['answer']}"},
        "/complete": lambda b: {"text": "Paris"},
        "/bad": lambda b: {"nope": 1},
    }

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        route = self.path.split("/api", 1)[-1]
        if route not in self.routes:
            self.send_response(404)
            self.end_headers()
            return
        payload = json.dumps(self.routes[route](body)).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture(scope="module")
def stub_server():
    server = http.server.ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}/api"
    server.shutdown()


class TestHttpAdapter:
    def test_classify_round_trip(self, stub_server):
        assert HttpBackend(stub_server).classify("anything") == 0.3

    def test_generate_sorts_and_truncates(self, stub_server):
        out = HttpBackend(stub_server).generate("p", 2)
        assert out.text == "Yes, fabricated"
        assert [c.surface for c in out.first_token_distribution.candidates] == ["Yes", "No"]

    def test_embed_normalizes(self, stub_server):
        v = HttpBackend(stub_server).embed("t")
        assert np.allclose(v, [0.6, 0.8])

    def test_explain_and_complete(self, stub_server):
        b = HttpBackend(stub_server)
        assert b.explain("q", "c", "Lyon") == "because Lyon"
        assert b.complete("prompt") == "Paris"

    def test_http_error_is_backend_failure(self, stub_server):
        with pytest.raises(BackendFailure):
            HttpBackend(stub_server + "/missing").classify("x")

    def test_unreachable_server(self):
        with pytest.raises(BackendFailure):
            HttpBackend("http://127.0.0.1:9", timeout=0.5).classify("x")
