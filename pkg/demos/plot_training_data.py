"""
Building detector training data
===============================

Labelled question/context/answer triples become prompt/response pairs.
Hallucinated ones get a ``Yes, ...`` response whose explanation comes from a
reasoning model; clean ones get ``No.``.
"""

from collections import Counter

from guardrail.backends import MockReasoning
from guardrail.dataprep import process_dataset, split_response
from guardrail.synthetic import make_raw_halu_records

records = make_raw_halu_records(200, seed=0)
reasoning = MockReasoning()
training = process_dataset(records, reasoning, max_workers=4)

print(len(training), "records,", reasoning.calls, "reasoning calls")
print(Counter("yes" if split_response(t.response) else "no" for t in training))
print(training[0].prompt)
print(training[0].response)
