from guardrail.backends.base import (
    SLOTS,
    BackendDescriptor,
    BackendRegistry,
    EmbeddingBackend,
    FirstTokenDistribution,
    FixingBackend,
    GenerationBackend,
    GenerationOutput,
    ModerationBackend,
    ReasoningBackend,
    TokenCandidate,
    softmax_top_k,
)
from guardrail.backends.http import HttpBackend
from guardrail.backends.mock import (
    HashedNgramEmbedder,
    MockFixing,
    MockGeneration,
    MockModeration,
    MockReasoning,
    ScriptedReply,
    echo_context,
    mock_from_config,
    prompt_hash,
)


def build_backend(descriptor: BackendDescriptor):
    if descriptor.kind == "http":
        return HttpBackend(descriptor.endpoint, **dict(descriptor.config))
    return mock_from_config(descriptor.slot, descriptor.config)


__all__ = [
    "SLOTS",
    "BackendDescriptor",
    "BackendRegistry",
    "EmbeddingBackend",
    "FirstTokenDistribution",
    "FixingBackend",
    "GenerationBackend",
    "GenerationOutput",
    "HashedNgramEmbedder",
    "HttpBackend",
    "MockFixing",
    "MockGeneration",
    "MockModeration",
    "MockReasoning",
    "ModerationBackend",
    "ReasoningBackend",
    "ScriptedReply",
    "TokenCandidate",
    "build_backend",
    "echo_context",
    "mock_from_config",
    "prompt_hash",
    "softmax_top_k",
]
