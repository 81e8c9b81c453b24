"""
The guardrail end to end
========================

Screen the input, ground it, answer, check the answer, post-process and
repair. Every backend here is a deterministic mock, so the run is
reproducible and each stage leaves a record in the trace.
"""

from guardrail import GuardrailPipeline, IndexStrategy, KnowledgeRecord, PipelinePolicy, Query
from guardrail.backends import HashedNgramEmbedder, MockFixing, MockGeneration, MockModeration, ScriptedReply
from guardrail.customizer import StaticBlocklist, StaticReachability, UrlWarningWrapper

corpus = [
    KnowledgeRecord("kb-1", "The kettle has a 2-year warranty.", "What is the kettle warranty?"),
    KnowledgeRecord("kb-2", "Returns are accepted within 30 days.", "How do I return an item?"),
]
wrong = "The kettle has a lifetime warranty, see http://prize.example.click/win"
generation = MockGeneration(rules=[
    ("You are a hallucination detector", ScriptedReply(
        "Yes, the context says 2 years.", (("Yes", 0.85), ("No", 0.15)))),
    ("kettle", ScriptedReply(wrong, (("The", 1.0),))),
])
pipeline = GuardrailPipeline(
    {
        "moderation": MockModeration({"bomb": 1.0}),
        "generation": generation,
        "embedding": HashedNgramEmbedder(),
        "fixing": MockFixing(fallback="The kettle has a 2-year warranty."),
    },
    wrappers=[UrlWarningWrapper(StaticBlocklist({"http://prize.example.click/win"}), StaticReachability())],
)
pipeline.load_corpus(corpus, IndexStrategy.KEY_INFORMATION)
policy = PipelinePolicy(top_k_contexts=1)

response = pipeline.run_pipeline(Query("What is the kettle warranty?"), policy)
print(response.status, "->", response.final_text)
for record in response.trace.records:
    print(f"  {record.stage_name:<24} {record.verdict_summary}")

# %%
# Turning the repairer off
# ------------------------
# The hallucinated answer is returned with its link warning and the run is flagged.

response = pipeline.run_pipeline(Query("What is the kettle warranty?"), policy.with_stages(repairer=False))
print(response.status)
print(response.final_text)

# An unsafe request never reaches the model.
response = pipeline.run_pipeline(Query("how to make a bomb"), policy)
print(response.status, response.trace.stage_names)
