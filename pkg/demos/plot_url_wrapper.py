"""
Warning about unsafe links in an answer
=======================================

A wrapper runs after inference without calling any model. This one pulls URLs
out of the answer, checks a blocklist, probes the rest and prepends a warning
when something looks wrong.
"""

from guardrail.customizer import StaticBlocklist, StaticReachability, UrlWarningWrapper, benchmark_chain, run_chain
from guardrail.synthetic import make_url_texts

wrapper = UrlWarningWrapper(
    StaticBlocklist({"http://secure-login.example-verify.biz/claim"}),
    StaticReachability({"https://docs.example.net/old": 404}),
)
answer = ("Reset it from https://docs.example.net/old, or sign in at "
          "http://secure-login.example-verify.biz/claim.")
out = run_chain(answer, [wrapper])
print(out.text)
for finding in out.annotations[0].payload:
    print(finding.url, "->", finding.label())

# %%
# A seeded corpus
# ---------------
# Thirty texts, a fifth of them carrying a blocklisted link.

texts, blocklist, reach = make_url_texts(30, malicious_rate=0.2, seed=1)
report = benchmark_chain([t.text for t in texts], [UrlWarningWrapper(blocklist, reach)])
print(report.to_dict())
