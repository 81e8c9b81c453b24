"""
Which text to index: whole entries or key fields
================================================

Retrieval quality is measured as callback@k, the share of queries whose
relevant record shows up in the top k. Here a synthetic QA corpus is indexed
two ways and queried with the original and a rephrased question.
"""

from guardrail import IndexStrategy, Query, build_index, ground_query, run_callback_experiment
from guardrail.backends import HashedNgramEmbedder
from guardrail.synthetic import make_qa_corpus

corpus = make_qa_corpus(100, seed=0)
embedder = HashedNgramEmbedder()
print(corpus[0].text)

# %%
# Callback table
# --------------

print(f"{'strategy':<16} {'queries':<10} " + " ".join(f"k={k:<4}" for k in (1, 3, 5, 10)))
for strategy in IndexStrategy:
    for mode in ("original", "rephrased"):
        rows = run_callback_experiment(corpus, strategy, mode, [1, 3, 5, 10], embedder, sample_size=50)
        print(f"{strategy.value:<16} {mode:<10} " + " ".join(f"{r.callback:<6.2f}" for r in rows))

# %%
# The grounded prompt
# -------------------
# Retrieved blocks are joined and placed ahead of the question.

index = build_index(corpus, IndexStrategy.KEY_INFORMATION, embedder)
grounded = ground_query(Query(corpus[3].key_text), index, k=2)
for r in grounded.contexts:
    print(f"{r.record.id}  {r.similarity:.3f}")
print(grounded.prompt())
