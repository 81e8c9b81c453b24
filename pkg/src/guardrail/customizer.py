"""Model-free output wrappers, applied in order after inference.

The shipped wrapper finds URLs in an answer, checks each against a phishing
blocklist and then probes the rest for reachability. It puts a warning block at the
very start of the text listing every malicious or 4XX URL.
"""

from __future__ import annotations

import enum
import re
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Optional, Protocol, Sequence

import httpx

from guardrail.errors import ClientFailure, DuplicateWrapperName, WrapperFailure

WARNING_HEADER = "[WARNING] This response contains potentially unsafe URLs:\n"
PROBE_FAILURE_STATUS = 499

_URL_RE = re.compile(r'https?://[^\s<"]+')
_TRAILING = ".,;:!?)"


@dataclass(frozen=True)
class Annotation:
    wrapper_name: str
    payload: Any

    def to_dict(self):
        payload = self.payload
        if isinstance(payload, (list, tuple)):
            payload = [p.to_dict() if hasattr(p, "to_dict") else p for p in payload]
        elif hasattr(payload, "to_dict"):
            payload = payload.to_dict()
        return {"wrapper_name": self.wrapper_name, "payload": payload}


@dataclass(frozen=True)
class WrapperOutcome:
    text: str
    annotations: tuple[Annotation, ...] = ()
    modified: bool = False

    def to_dict(self):
        return {
            "text": self.text,
            "modified": self.modified,
            "annotations": [a.to_dict() for a in self.annotations],
        }


class Wrapper(Protocol):
    name: str

    def __call__(self, text: str, annotations: Sequence[Annotation]) -> WrapperOutcome: ...


@dataclass(frozen=True)
class FunctionWrapper:
    """Adapts a plain ``(text, annotations) -> WrapperOutcome`` callable."""

    name: str
    transform: Callable[[str, Sequence[Annotation]], WrapperOutcome]

    def __call__(self, text, annotations):
        return self.transform(text, annotations)


def run_chain(text: str, wrappers: Sequence[Wrapper]) -> WrapperOutcome:
    names = [w.name for w in wrappers]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise DuplicateWrapperName(f"duplicate wrapper names: {dupes}")
    current, notes, modified = text, [], False
    for w in wrappers:
        try:
            out = w(current, tuple(notes))
        except Exception as exc:
            raise WrapperFailure(w.name, exc) from exc
        current = out.text
        notes.extend(out.annotations)
        modified = modified or out.modified
    return WrapperOutcome(current, tuple(notes), modified)


def extract_urls(text: str) -> list[str]:
    """Scheme-anchored URLs in order of appearance, trailing punctuation removed."""
    urls = []
    for m in _URL_RE.finditer(text):
        url = m.group(0).rstrip(_TRAILING)
        if url.split("://", 1)[1]:
            urls.append(url)
    return urls


class UrlClass(str, enum.Enum):
    MALICIOUS = "malicious"
    UNREACHABLE = "unreachable"
    SAFE = "safe"


@dataclass(frozen=True)
class UrlFinding:
    url: str
    classification: UrlClass
    status_code: Optional[int] = None
    error: Optional[str] = None

    def __post_init__(self):
        if self.classification is UrlClass.UNREACHABLE and not (
            self.status_code is not None and 400 <= self.status_code <= 499
        ):
            raise ValueError("unreachable findings carry a 4XX status code")

    @property
    def unsafe(self) -> bool:
        return self.classification is not UrlClass.SAFE

    def label(self) -> str:
        if self.classification is UrlClass.UNREACHABLE:
            return f"unreachable (HTTP {self.status_code})"
        return self.classification.value

    def to_dict(self):
        return {
            "url": self.url,
            "classification": self.classification.value,
            "status_code": self.status_code,
            "error": self.error,
        }


class BlocklistClient(Protocol):
    def lookup(self, url: str) -> bool: ...


class ReachabilityClient(Protocol):
    def probe(self, url: str) -> int: ...


def classify_url(
    url: str,
    blocklist: BlocklistClient,
    reachability: ReachabilityClient,
    on_probe_failure: str = "unreachable",
) -> UrlFinding:
    """Blocklisted URLs are never probed. A failed probe counts as unreachable (HTTP 499)
    unless ``on_probe_failure="skip"``, which reports it as safe with the error attached."""
    if blocklist.lookup(url):
        return UrlFinding(url, UrlClass.MALICIOUS)
    try:
        status = int(reachability.probe(url))
    except ClientFailure as exc:
        if on_probe_failure == "skip":
            return UrlFinding(url, UrlClass.SAFE, None, str(exc))
        return UrlFinding(url, UrlClass.UNREACHABLE, PROBE_FAILURE_STATUS, str(exc))
    if 400 <= status <= 499:
        return UrlFinding(url, UrlClass.UNREACHABLE, status)
    # 5XX is recorded but not treated as unreachable
    return UrlFinding(url, UrlClass.SAFE, status)


def format_warning(findings: Iterable[UrlFinding]) -> str:
    lines, seen = [], set()
    for f in findings:
        if f.unsafe and f.url not in seen:
            seen.add(f.url)
            lines.append(f"- {f.url} ({f.label()})\n")
    return WARNING_HEADER + "".join(lines) if lines else ""


class UrlWarningWrapper:
    """Prepends a warning naming every malicious or unreachable URL in the text.

    Each distinct URL is classified once. Findings for every occurrence, safe ones
    included, go into the annotation.
    """

    def __init__(
        self,
        blocklist: BlocklistClient,
        reachability: ReachabilityClient,
        name: str = "url_warning",
        on_probe_failure: str = "unreachable",
        max_workers: int = 1,
    ):
        if on_probe_failure not in ("unreachable", "skip"):
            raise ValueError("on_probe_failure must be 'unreachable' or 'skip'")
        self.name = name
        self.blocklist = blocklist
        self.reachability = reachability
        self.on_probe_failure = on_probe_failure
        self.max_workers = max_workers

    def classify_all(self, urls: Sequence[str]) -> list[UrlFinding]:
        distinct = list(dict.fromkeys(urls))

        def one(u):
            return classify_url(u, self.blocklist, self.reachability, self.on_probe_failure)

        if self.max_workers > 1 and len(distinct) > 1:
            with ThreadPoolExecutor(self.max_workers) as pool:
                found = dict(zip(distinct, pool.map(one, distinct)))
        else:
            found = {u: one(u) for u in distinct}
        return [found[u] for u in urls]

    def __call__(self, text: str, annotations: Sequence[Annotation] = ()) -> WrapperOutcome:
        findings = self.classify_all(extract_urls(text))
        notes = (Annotation(self.name, tuple(findings)),) if findings else ()
        warning = format_warning(findings)
        if not warning:
            return WrapperOutcome(text, notes, False)
        return WrapperOutcome(warning + "\n\n" + text, notes, True)


class StaticBlocklist:
    """In-memory blocklist matching exact URLs or bare hostnames."""

    def __init__(self, urls: Iterable[str] = (), hosts: Iterable[str] = ()):
        self.urls = frozenset(urls)
        self.hosts = frozenset(h.lower() for h in hosts)

    def lookup(self, url: str) -> bool:
        if url in self.urls:
            return True
        host = httpx.URL(url).host.lower() if self.hosts else ""
        return host in self.hosts


class StaticReachability:
    """Scripted status codes; URLs in ``failures`` raise :class:`ClientFailure`."""

    def __init__(self, statuses: Optional[dict] = None, default: int = 200, failures: Iterable[str] = ()):
        self.statuses = dict(statuses or {})
        self.default = default
        self.failures = frozenset(failures)

    def probe(self, url: str) -> int:
        if url in self.failures:
            raise ClientFailure(f"scripted probe failure for {url}")
        return self.statuses.get(url, self.default)


class HttpReachability:
    """Live probe: GET with up to ``max_redirects`` 3XX hops, returning the final status."""

    def __init__(self, timeout: float = 5.0, max_redirects: int = 5, client: Optional[httpx.Client] = None):
        self._client = client or httpx.Client(
            timeout=timeout, follow_redirects=True, max_redirects=max_redirects
        )

    def probe(self, url: str) -> int:
        try:
            with self._client.stream("GET", url) as resp:
                return resp.status_code
        except httpx.HTTPError as exc:
            raise ClientFailure(f"probe of {url} failed: {exc}") from exc


class SafeBrowsingBlocklist:
    """Google Safe Browsing v4 ``threatMatches:find`` lookup."""

    API = "https://safebrowsing.googleapis.com/v4/threatMatches:find"
    THREATS = ("MALWARE", "SOCIAL_ENGINEERING", "UNWANTED_SOFTWARE", "POTENTIALLY_HARMFUL_APPLICATION")

    def __init__(self, api_key: str, client_id: str = "guardrail", timeout: float = 5.0,
                 client: Optional[httpx.Client] = None):
        self.api_key = api_key
        self.client_id = client_id
        self._client = client or httpx.Client(timeout=timeout)

    def lookup(self, url: str) -> bool:
        body = {
            "client": {"clientId": self.client_id, "clientVersion": "1.0"},
            "threatInfo": {
                "threatTypes": list(self.THREATS),
                "platformTypes": ["ANY_PLATFORM"],
                "threatEntryTypes": ["URL"],
                "threatEntries": [{"url": url}],
            },
        }
        try:
            resp = self._client.post(self.API, params={"key": self.api_key}, json=body)
            resp.raise_for_status()
            return bool(resp.json().get("matches"))
        except (httpx.HTTPError, ValueError) as exc:
            raise ClientFailure(f"safe-browsing lookup failed: {exc}") from exc


@dataclass
class LatencyReport:
    n: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    p99_ms: float
    modified: int = 0
    samples_ms: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "n": self.n,
            "mean_ms": self.mean_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "p99_ms": self.p99_ms,
            "modified": self.modified,
        }


def _percentile(sorted_vals, q):
    if len(sorted_vals) == 1:
        return sorted_vals[0]
    return statistics.quantiles(sorted_vals, n=100, method="inclusive")[q - 1]


def benchmark_chain(texts: Sequence[str], wrappers: Sequence[Wrapper]) -> LatencyReport:
    if not texts:
        raise ValueError("no texts to benchmark")
    samples, modified = [], 0
    for t in texts:
        start = time.perf_counter()
        out = run_chain(t, wrappers)
        samples.append((time.perf_counter() - start) * 1e3)
        modified += out.modified
    ordered = sorted(samples)
    return LatencyReport(
        n=len(samples),
        mean_ms=statistics.fmean(samples),
        p50_ms=_percentile(ordered, 50),
        p95_ms=_percentile(ordered, 95),
        p99_ms=_percentile(ordered, 99),
        modified=modified,
        samples_ms=samples,
    )
