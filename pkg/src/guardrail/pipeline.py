"""The end-to-end guardrail: screen, ground, infer, detect, customize, repair.

Stages always run in that order, and every stage that runs leaves one
:class:`StageRecord` in the response trace.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from guardrail.backends.base import BackendRegistry
from guardrail.backends.mock import prompt_hash
from guardrail.customizer import Wrapper, WrapperOutcome, run_chain
from guardrail.detector import DEFAULT_TOKEN_SETS, YesNoTokenSets, check_input, detect_hallucination
from guardrail.errors import BackendUnavailable, StageFailure, UnknownSlot
from guardrail.grounding import IndexStrategy, KnowledgeRecord, VectorIndex, build_index, ground_query
from guardrail.policy import STAGES, PipelinePolicy, Query, UnsafeInputAction
from guardrail.repairer import RepairRequest, build_repair_prompt, repair

DEFAULT_REJECTION_MESSAGE = "Your query was rejected by the safety policy."

_STAGE_SLOTS = {
    "input_safety": ("moderation",),
    "grounding": ("embedding",),
    "inference": ("generation",),
    "hallucination_detection": ("generation",),
    "repairer": ("fixing",),
}


@dataclass(frozen=True)
class StageRecord:
    stage_name: str
    verdict_summary: str
    elapsed_micros: int
    artifacts: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "stage_name": self.stage_name,
            "verdict_summary": self.verdict_summary,
            "elapsed_micros": self.elapsed_micros,
            "artifacts": self.artifacts,
        }


@dataclass(frozen=True)
class PipelineTrace:
    records: tuple[StageRecord, ...] = ()

    @property
    def stage_names(self) -> list[str]:
        return [r.stage_name for r in self.records]

    def __getitem__(self, stage_name: str) -> StageRecord:
        for r in self.records:
            if r.stage_name == stage_name:
                return r
        raise KeyError(stage_name)

    def __len__(self):
        return len(self.records)

    def to_list(self):
        return [r.to_dict() for r in self.records]


@dataclass(frozen=True)
class PipelineResponse:
    final_text: str
    status: str  # answered | rejected | repaired | flagged
    trace: PipelineTrace

    def to_dict(self, include_trace: bool = True):
        d = {"final_text": self.final_text, "status": self.status}
        if include_trace:
            d["trace"] = self.trace.to_list()
        return d


class GuardrailPipeline:
    """Holds the backend registry, the knowledge index and the wrapper chain.

    ``run_pipeline`` takes a snapshot of all three at entry, so concurrent requests
    never see a half-applied reconfiguration. ``clock`` returns nanoseconds and
    can be swapped for a fake in golden-trace tests.
    """

    def __init__(
        self,
        backends: Optional[dict] = None,
        index: Optional[VectorIndex] = None,
        wrappers: Sequence[Wrapper] = (),
        rejection_message: str = DEFAULT_REJECTION_MESSAGE,
        token_sets: YesNoTokenSets = DEFAULT_TOKEN_SETS,
        clock: Callable[[], int] = time.perf_counter_ns,
    ):
        self._registry = BackendRegistry(backends)
        self._lock = threading.Lock()
        self._index = index
        self._wrappers = tuple(wrappers)
        self.rejection_message = rejection_message
        self.token_sets = token_sets
        self.clock = clock

    def register_backend(self, slot: str, backend) -> None:
        self._registry.register(slot, backend)

    def backend(self, slot: str):
        return self._registry.get(slot)

    @property
    def index(self) -> Optional[VectorIndex]:
        return self._index

    def set_index(self, index: Optional[VectorIndex]) -> None:
        with self._lock:
            self._index = index

    def load_corpus(self, corpus: Sequence[KnowledgeRecord], strategy: IndexStrategy) -> VectorIndex:
        index = build_index(corpus, strategy, self._registry.get("embedding"))
        self.set_index(index)
        return index

    @property
    def wrappers(self) -> tuple:
        return self._wrappers

    def set_wrappers(self, wrappers: Sequence[Wrapper]) -> None:
        with self._lock:
            self._wrappers = tuple(wrappers)

    def _preflight(self, policy: PipelinePolicy, registry: BackendRegistry, index):
        for stage in STAGES:
            if not policy.stages_enabled.enabled(stage):
                continue
            if stage == "repairer" and not policy.stages_enabled.hallucination_detection:
                continue
            for slot in _STAGE_SLOTS.get(stage, ()):
                if slot not in registry:
                    raise BackendUnavailable(slot, f"required by enabled stage {stage!r}")
            if stage == "grounding" and index is None:
                raise BackendUnavailable("embedding", "grounding is enabled but no knowledge index is loaded")

    def run_pipeline(self, query: Query, policy: PipelinePolicy) -> PipelineResponse:
        with self._lock:
            registry = self._registry.snapshot()
            index, wrappers = self._index, self._wrappers
        self._preflight(policy, registry, index)
        run = _Run(self.clock)
        flags = policy.stages_enabled
        input_flagged = False

        if flags.input_safety:
            verdict = run.stage("input_safety", lambda: self._input_safety(query, policy, registry))
            if verdict.unsafe:
                if policy.unsafe_input_action is UnsafeInputAction.REJECT:
                    return PipelineResponse(self.rejection_message, "rejected", run.trace())
                input_flagged = True

        context, prompt = "", query.text
        if flags.grounding:
            grounded = run.stage("grounding", lambda: self._grounding(query, index, policy))
            context, prompt = grounded.context, grounded.prompt()

        answer = run.stage("inference", lambda: self._inference(prompt, policy, registry))

        assessment = None
        if flags.hallucination_detection:
            assessment = run.stage(
                "hallucination_detection",
                lambda: self._detect(query.text, context, answer, policy, registry),
            )

        text = answer
        if flags.customizer:
            text = run.stage("customizer", lambda: self._customize(answer, wrappers)).text

        hallucinated = assessment is not None and assessment.is_hallucinated
        repaired = False
        if hallucinated and flags.repairer:
            post_wrappers = wrappers if flags.customizer else ()
            result, text = run.stage(
                "repairer",
                lambda: self._repair(
                    RepairRequest(query.text, context, answer, assessment.reason), registry, post_wrappers, text
                ),
            )
            repaired = result.repaired

        if input_flagged or (hallucinated and not repaired):
            status = "flagged"
        elif repaired:
            status = "repaired"
        else:
            status = "answered"
        return PipelineResponse(text, status, run.trace())

    # Each stage body returns (value, verdict_summary, artifacts).

    def _input_safety(self, query, policy, registry):
        verdict = check_input(query, registry.get("moderation"), policy.input_unsafe_threshold)
        action = policy.unsafe_input_action.value if verdict.unsafe else "pass"
        summary = f"{verdict.label} (score={verdict.score:.3f})"
        return verdict, summary, {**verdict.to_dict(), "action": action}

    def _grounding(self, query, index, policy):
        grounded = ground_query(query, index, policy.top_k_contexts)
        artifacts = {
            "strategy": index.strategy.value,
            "k": policy.top_k_contexts,
            "contexts": [
                {"id": r.record.id, "similarity": round(r.similarity, 6)} for r in grounded.contexts
            ],
        }
        return grounded, f"retrieved {len(grounded.contexts)} context(s)", artifacts

    def _inference(self, prompt, policy, registry):
        out = registry.get("generation").generate(prompt, policy.top_k_tokens)
        artifacts = {"prompt_sha256": prompt_hash(prompt), "answer": out.text}
        return out.text, f"generated {len(out.text)} chars", artifacts

    def _detect(self, question, context, answer, policy, registry):
        a = detect_hallucination(question, context, answer, policy, registry.get("generation"), self.token_sets)
        verdict = "hallucinated" if a.is_hallucinated else "not hallucinated"
        if a.indeterminate:
            summary = f"indeterminate -> {verdict}"
        else:
            summary = f"{verdict} (p_halu={a.p_halu:.3f})"
        return a, summary, a.to_dict()

    def _customize(self, text, wrappers) -> tuple[WrapperOutcome, str, dict]:
        out = run_chain(text, wrappers)
        names = ",".join(w.name for w in wrappers) or "none"
        summary = f"{'modified' if out.modified else 'unchanged'} by [{names}]"
        artifacts = {"modified": out.modified, "annotations": [a.to_dict() for a in out.annotations]}
        return out, summary, artifacts

    def _repair(self, req, registry, wrappers, current_text):
        result = repair(req, registry.get("fixing"))
        artifacts = {"prompt": build_repair_prompt(req), **result.to_dict()}
        if not result.repaired:
            return (result, current_text), "not repaired (fixing model echoed the answer)", artifacts
        # the corrected answer gets the same wrapper treatment as the original
        post = run_chain(result.corrected_answer, wrappers)
        artifacts["post_repair_annotations"] = [a.to_dict() for a in post.annotations]
        return (result, post.text), "repaired", artifacts


class _Run:
    """Per-request stage timer and trace accumulator."""

    def __init__(self, clock):
        self.clock = clock
        self.records: list[StageRecord] = []

    def stage(self, name, body):
        start = self.clock()
        try:
            value, summary, artifacts = body()
        except (BackendUnavailable, UnknownSlot):
            raise
        except Exception as exc:
            raise StageFailure(name, exc) from exc
        elapsed = (self.clock() - start) // 1000
        self.records.append(StageRecord(name, summary, int(elapsed), artifacts))
        return value

    def trace(self) -> PipelineTrace:
        return PipelineTrace(tuple(self.records))


def run_pipeline(query: Query, policy: PipelinePolicy, pipeline: GuardrailPipeline) -> PipelineResponse:
    return pipeline.run_pipeline(query, policy)
