"""Service configuration: one YAML/JSON document, overridable through ``GUARDRAIL_*`` env vars.

Nested keys are joined with a double underscore in variable names, e.g.
``GUARDRAIL_POLICY__HALU_THRESHOLD=0.6`` or ``GUARDRAIL_LISTEN__PORT=9000``.
Only scalar fields can be overridden.
"""

from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional

import yaml

from guardrail.backends import SLOTS, BackendDescriptor, build_backend
from guardrail.customizer import (
    HttpReachability,
    SafeBrowsingBlocklist,
    StaticBlocklist,
    StaticReachability,
    UrlWarningWrapper,
)
from guardrail.errors import ConfigError
from guardrail.grounding import IndexStrategy, read_corpus
from guardrail.pipeline import DEFAULT_REJECTION_MESSAGE, GuardrailPipeline
from guardrail.policy import PipelinePolicy

ENV_PREFIX = "GUARDRAIL_"

_STAGE_SLOTS = {
    "input_safety": ["moderation"],
    "grounding": ["embedding"],
    "hallucination_detection": ["generation"],
    "repairer": ["fixing"],
}

DEFAULT_CONFIG = {
    "listen": {"host": "127.0.0.1", "port": 8080},
    "policy": {"stages_enabled": {"grounding": False}},
    "backends": {
        "moderation": {"kind": "mock", "config": {"rules": {"attack": 1.0, "bomb": 1.0, "ignore previous instructions": 1.0}}},
        "generation": {
            "kind": "mock",
            "config": {
                "rules": [{"contains": "You are a hallucination detector", "text": "No.", "first_tokens": [["No", 1.0]]}],
                "fallback": "echo_context",
            },
        },
        "embedding": {"kind": "mock"},
        "reasoning": {"kind": "mock"},
        "fixing": {"kind": "mock", "config": {"echo": True}},
    },
    "corpus_path": None,
    "index_strategy": "key_information",
    "wrappers": [],
}


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    policy: PipelinePolicy = field(default_factory=PipelinePolicy)
    backends: dict = field(default_factory=dict)
    corpus_path: Optional[str] = None
    index_strategy: IndexStrategy = IndexStrategy.KEY_INFORMATION
    wrappers: list = field(default_factory=list)
    rejection_message: str = DEFAULT_REJECTION_MESSAGE


def _parse_scalar(raw: str):
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError:
        return raw
    return raw if isinstance(value, (dict, list)) or value is None else value


def apply_env_overrides(doc: dict, environ: Mapping[str, str]) -> dict:
    doc = copy.deepcopy(doc)
    errors = []
    for key, raw in sorted(environ.items()):
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        node = doc
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                errors.append((".".join(path), f"{key} targets a non-mapping parent"))
                break
        else:
            if isinstance(node.get(path[-1]), (dict, list)):
                errors.append((".".join(path), f"{key} can only override scalar fields"))
                continue
            node[path[-1]] = raw if path[-1] in ("rejection_message", "corpus_path") else _parse_scalar(raw)
    if errors:
        raise ConfigError(errors)
    return doc


def _validate_wrapper(i, spec, errors):
    path = f"wrappers[{i}]"
    if not isinstance(spec, dict):
        errors.append((path, "must be a mapping"))
        return
    if spec.get("type", "url_warning") != "url_warning":
        errors.append((f"{path}.type", f"unknown wrapper type {spec.get('type')!r}"))
    if spec.get("on_probe_failure", "unreachable") not in ("unreachable", "skip"):
        errors.append((f"{path}.on_probe_failure", "must be 'unreachable' or 'skip'"))
    bl = spec.get("blocklist") or {"kind": "static"}
    if bl.get("kind") not in ("static", "safe_browsing"):
        errors.append((f"{path}.blocklist.kind", "must be 'static' or 'safe_browsing'"))
    elif bl["kind"] == "safe_browsing" and not bl.get("api_key"):
        errors.append((f"{path}.blocklist.api_key", "required for safe_browsing"))
    rc = spec.get("reachability") or {"kind": "static"}
    if rc.get("kind") not in ("static", "http"):
        errors.append((f"{path}.reachability.kind", "must be 'static' or 'http'"))


def parse_config(doc: Mapping) -> ServiceConfig:
    """Validate a config document, reporting every problem with its field path."""
    errors = []
    known = {"listen", "policy", "backends", "corpus_path", "index_strategy", "wrappers", "rejection_message"}
    for key in sorted(set(doc) - known):
        errors.append((key, "unknown field"))

    listen = doc.get("listen") or {}
    host = listen.get("host", "127.0.0.1")
    port = listen.get("port", 8080)
    if not isinstance(port, int) or isinstance(port, bool) or not 0 <= port <= 65535:
        errors.append(("listen.port", f"must be an integer in [0, 65535], got {port!r}"))

    policy = PipelinePolicy()
    try:
        policy = PipelinePolicy.from_dict(doc.get("policy") or {})
    except (TypeError, ValueError) as exc:
        errors.append(("policy", str(exc)))

    backends = {}
    for slot, d in (doc.get("backends") or {}).items():
        if slot not in SLOTS:
            errors.append((f"backends.{slot}", f"unknown slot; expected one of {list(SLOTS)}"))
            continue
        try:
            backends[slot] = BackendDescriptor(slot, d.get("kind", "mock"), d.get("endpoint"), d.get("config") or {})
        except (ValueError, AttributeError) as exc:
            errors.append((f"backends.{slot}", str(exc)))

    flags = policy.stages_enabled
    needed = {"generation"}
    for stage, slots in _STAGE_SLOTS.items():
        if flags.enabled(stage):
            needed.update(slots)
    for slot in sorted(needed - set(backends)):
        errors.append((f"backends.{slot}", "required by an enabled stage"))

    corpus_path = doc.get("corpus_path")
    if flags.grounding and not corpus_path:
        errors.append(("corpus_path", "required when grounding is enabled"))
    elif not flags.grounding and corpus_path:
        errors.append(("corpus_path", "must be omitted when grounding is disabled"))
    elif corpus_path and not Path(corpus_path).is_file():
        errors.append(("corpus_path", f"no such file: {corpus_path}"))

    strategy = IndexStrategy.KEY_INFORMATION
    try:
        strategy = IndexStrategy(doc.get("index_strategy", "key_information"))
    except ValueError:
        errors.append(("index_strategy", "must be 'whole_knowledge' or 'key_information'"))

    wrappers = doc.get("wrappers") or []
    if not isinstance(wrappers, list):
        errors.append(("wrappers", "must be a list"))
        wrappers = []
    for i, spec in enumerate(wrappers):
        _validate_wrapper(i, spec, errors)
    names = [w.get("name", "url_warning") for w in wrappers if isinstance(w, dict)]
    if len(names) != len(set(names)):
        errors.append(("wrappers", "wrapper names must be unique"))

    message = doc.get("rejection_message", DEFAULT_REJECTION_MESSAGE)
    if not isinstance(message, str) or not message:
        errors.append(("rejection_message", "must be a non-empty string"))

    if errors:
        raise ConfigError(errors)
    return ServiceConfig(host, port, policy, backends, corpus_path, strategy, list(wrappers), message)


def load_config(path: Optional[str] = None, environ: Optional[Mapping[str, str]] = None) -> ServiceConfig:
    if path is None:
        doc = copy.deepcopy(DEFAULT_CONFIG)
    else:
        try:
            doc = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError([("<file>", str(exc))]) from exc
        if not isinstance(doc, dict):
            raise ConfigError([("<root>", "config document must be a mapping")])
    doc = apply_env_overrides(doc, os.environ if environ is None else environ)
    return parse_config(doc)


def build_wrapper(spec: Mapping):
    bl = dict(spec.get("blocklist") or {"kind": "static"})
    if bl.pop("kind", "static") == "safe_browsing":
        blocklist = SafeBrowsingBlocklist(bl["api_key"], timeout=float(bl.get("timeout", 5.0)))
    else:
        blocklist = StaticBlocklist(bl.get("urls", ()), bl.get("hosts", ()))
    rc = dict(spec.get("reachability") or {"kind": "static"})
    if rc.pop("kind", "static") == "http":
        reach = HttpReachability(float(rc.get("timeout", 5.0)), int(rc.get("max_redirects", 5)))
    else:
        reach = StaticReachability(rc.get("statuses"), int(rc.get("default", 200)), rc.get("failures", ()))
    return UrlWarningWrapper(
        blocklist,
        reach,
        name=spec.get("name", "url_warning"),
        on_probe_failure=spec.get("on_probe_failure", "unreachable"),
        max_workers=int(spec.get("max_workers", 1)),
    )


def build_pipeline(config: ServiceConfig, **kwargs) -> GuardrailPipeline:
    pipeline = GuardrailPipeline(
        {slot: build_backend(d) for slot, d in config.backends.items()},
        wrappers=[build_wrapper(w) for w in config.wrappers],
        rejection_message=config.rejection_message,
        **kwargs,
    )
    if config.corpus_path:
        with open(config.corpus_path, encoding="utf-8") as fh:
            pipeline.load_corpus(list(read_corpus(fh)), config.index_strategy)
    return pipeline
