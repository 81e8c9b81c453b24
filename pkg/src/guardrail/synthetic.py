"""Seeded synthetic corpora for the grounding, wrapper and data-prep harnesses."""

from __future__ import annotations

import random
from dataclasses import dataclass

from guardrail.customizer import StaticBlocklist, StaticReachability, UrlClass
from guardrail.dataprep import RawHaluRecord
from guardrail.grounding import KnowledgeRecord

_PRODUCTS = [
    "wireless earbuds", "standing desk", "coffee grinder", "hiking backpack", "robot vacuum",
    "electric kettle", "gaming monitor", "yoga mat", "air purifier", "smart thermostat",
    "mechanical keyboard", "camping tent", "blender", "office chair", "running shoes",
    "laptop stand", "water filter", "desk lamp", "baby stroller", "power bank",
]
_INTENTS = [
    "How do I return the {p}?",
    "What is the warranty period for the {p}?",
    "Can I get a refund if the {p} arrives damaged?",
    "How long does shipping take for the {p}?",
    "Is the {p} compatible with international voltage?",
]
_FILLER = [
    "Our support team reviews every request within two business days.",
    "Customers often compare this with the {q} before deciding.",
    "Please keep the original packaging and the order number at hand.",
    "Bundles that include the {q} follow the same policy.",
    "Store credit is issued when the payment method is no longer valid.",
    "Questions about the {q} are handled by a separate desk.",
]


def make_qa_corpus(n: int = 60, seed: int = 0) -> list[KnowledgeRecord]:
    """QA records whose ``key_text`` is the question and whose ``text`` is the full entry.

    Answers are long and mention other products, so whole-entry vectors are noisier
    than question vectors.
    """
    rng = random.Random(seed)
    pairs = [(p, t) for t in _INTENTS for p in _PRODUCTS]
    rng.shuffle(pairs)
    if n > len(pairs):
        raise ValueError(f"at most {len(pairs)} distinct questions available")
    records = []
    for i, (product, template) in enumerate(pairs[:n]):
        question = template.format(p=product)
        others = rng.sample([p for p in _PRODUCTS if p != product], 3)
        filler = [rng.choice(_FILLER).format(q=others[j % 3]) for j in range(4)]
        answer = f"For the {product}, " + " ".join(filler)
        records.append(KnowledgeRecord(f"qa-{i:04d}", f"Question: {question}\nAnswer: {answer}", question))
    return records


_SNIPPETS = [
    "The {p} ships with a quick-start guide",
    "Reviewers praised the battery life of the {p}",
    "A recent article summarized the best {p} deals",
    "This thread compares three brands of {p}",
    "See the manufacturer's notes on the {p}",
]
_BENIGN_HOSTS = ["shop.example.com", "news.example.org", "docs.example.net", "reviews.example.io"]
_MALICIOUS_HOSTS = ["secure-login.example-verify.biz", "free-prizes.example.click", "acc0unt-update.example.ru"]
_WRAPPERS = ["{u}", "({u})", "\"{u}\"", "{u}.", "{u}!", "{u},", "{u}:"]


@dataclass(frozen=True)
class SeededUrl:
    url: str
    classification: UrlClass
    status_code: int | None = None


@dataclass(frozen=True)
class UrlText:
    text: str
    urls: tuple[SeededUrl, ...]


def make_url_texts(n: int = 30, malicious_rate: float = 0.2, unreachable_rate: float = 0.15, seed: int = 0):
    """Texts built from product and article snippets, each citing one or more URLs.

    ``round(n * malicious_rate)`` texts get one extra malicious URL; each benign URL
    is made to answer 404 with probability ``unreachable_rate``. Returns the texts and
    the mock blocklist/reachability clients encoding that ground truth.
    """
    rng = random.Random(seed)
    malicious, statuses, texts = set(), {}, []
    seeded_bad = set(rng.sample(range(n), round(n * malicious_rate)))
    for i in range(n):
        seeded, parts = [], []
        for j in range(rng.randint(1, 3)):
            host = rng.choice(_BENIGN_HOSTS)
            url = f"https://{host}/item/{i}-{j}?ref=t{i}"
            if rng.random() < unreachable_rate:
                statuses[url] = 404
                seeded.append(SeededUrl(url, UrlClass.UNREACHABLE, 404))
            else:
                statuses[url] = 200
                seeded.append(SeededUrl(url, UrlClass.SAFE, 200))
            snippet = rng.choice(_SNIPPETS).format(p=rng.choice(_PRODUCTS))
            parts.append(f"{snippet}: " + rng.choice(_WRAPPERS).format(u=url))
        if i in seeded_bad:
            url = f"http://{rng.choice(_MALICIOUS_HOSTS)}/claim?id={i}"
            malicious.add(url)
            pos = rng.randint(0, len(parts))
            parts.insert(pos, "Limited offer at " + rng.choice(_WRAPPERS).format(u=url))
            seeded.insert(pos, SeededUrl(url, UrlClass.MALICIOUS))
        texts.append(UrlText(" ".join(p if p.endswith((".", ",")) else p + "." for p in parts), tuple(seeded)))
    return texts, StaticBlocklist(malicious), StaticReachability(statuses, default=200)


def make_raw_halu_records(n: int = 200, halu_rate: float = 0.5, seed: int = 0) -> list[RawHaluRecord]:
    rng = random.Random(seed)
    records = []
    for i in range(n):
        product = rng.choice(_PRODUCTS)
        years = rng.randint(1, 5)
        question = f"What is the warranty period for the {product}? (case {i})"
        context = f"The {product} comes with a {years}-year limited warranty."
        if rng.random() < halu_rate:
            answer = f"The {product} has a lifetime warranty with free replacements."
            records.append(RawHaluRecord(question, context, answer, True))
        else:
            records.append(RawHaluRecord(question, context, f"It has a {years}-year warranty.", False))
    return records
