"""Guardrail middleware for LLM inference.

Screens user queries, grounds them with retrieved context, scores answers for
hallucination from the detector's first-token distribution, applies rule-based
output wrappers and repairs hallucinated answers. Every model call goes through a
pluggable backend slot.
"""

from guardrail.backends import BackendRegistry, FirstTokenDistribution, GenerationOutput, TokenCandidate
from guardrail.customizer import (
    UrlClass,
    UrlFinding,
    UrlWarningWrapper,
    WrapperOutcome,
    classify_url,
    extract_urls,
    run_chain,
)
from guardrail.dataprep import RawHaluRecord, TrainingRecord, process_dataset, render_detection_prompt
from guardrail.detector import (
    HallucinationAssessment,
    SafetyVerdict,
    YesNoTokenSets,
    check_input,
    compute_p_halu,
    detect_hallucination,
)
from guardrail.grounding import (
    GroundedQuery,
    IndexStrategy,
    KnowledgeRecord,
    LabeledQuery,
    RetrievalResult,
    VectorIndex,
    build_index,
    callback,
    ground_query,
    retrieve,
    run_callback_experiment,
)
from guardrail.pipeline import GuardrailPipeline, PipelineResponse, PipelineTrace, StageRecord, run_pipeline
from guardrail.policy import IndeterminateAction, PipelinePolicy, Query, StageFlags, UnsafeInputAction
from guardrail.repairer import RepairRequest, RepairResult, build_repair_prompt, repair

__version__ = "0.1.0"
