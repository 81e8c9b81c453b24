"""
Scoring an answer from its first token
======================================

The detector asks a model whether an answer is hallucinated and reads only the
probabilities of the candidate first tokens. Yes-like mass over yes-plus-no mass
gives the score.
"""

from guardrail import PipelinePolicy, detect_hallucination
from guardrail.backends import FirstTokenDistribution, MockGeneration, ScriptedReply, softmax_top_k
from guardrail.detector import YesNoTokenSets, compute_p_halu

# A distribution over the first token, as a model would report it.
dist = FirstTokenDistribution.from_pairs([("Yes", 0.55), (" yes", 0.10), ("No", 0.25), ("The", 0.05)])
print("p_halu =", compute_p_halu(dist))  # 0.65 / 0.90

# Mass on tokens that are neither yes nor no does not move the score,
# and swapping the two sets gives the complement.
print("swapped =", compute_p_halu(dist, YesNoTokenSets().swapped()))

# Raw logits are normalized with a softmax before the top-k cut.
logit_dist = softmax_top_k(["Yes", "No", "Maybe"], [2.0, 0.0, -1.0], top_k=2)
print("from logits:", [(c.surface, round(c.prob, 4)) for c in logit_dist.candidates])

# %%
# Full detection with a scripted model
# ------------------------------------
# The reply's text becomes the reason when the answer is flagged.

generation = MockGeneration(fallback=ScriptedReply(
    "Yes, the context gives a 2-year warranty.", (("Yes", 0.8), ("No", 0.2))))
policy = PipelinePolicy()
a = detect_hallucination(
    "What is the kettle warranty?", "The kettle has a 2-year warranty.",
    "It has a lifetime warranty.", policy, generation)
print(a.to_dict())

# With no yes or no token among the candidates the score is undefined, and the
# policy decides. The default fails closed.
silent = MockGeneration(fallback=ScriptedReply("The answer", (("The", 0.9),)))
print(detect_hallucination("q", "c", "a", policy, silent).to_dict())
