"""Attention-gradient saliency flows and instance-adaptive prompt selection.

The package computes, for a decoder-only transformer run, the saliency of
every attention connection (|attention x loss-gradient|), aggregates it
into question/prompt/rationale region flows, and selects a trigger prompt
per question from those flows by sequential substitution or top-k
majority vote.  A desk-scale float64 transformer with exact attention
gradients stands in for a production model; captures from real models
enter through the binary dump format.
"""

from .dumpio import DumpFormatError, DumpRecord, read_dump, validate_dump, write_dump
from .pipeline import (
    DEFAULT_FORMAT_TEXT,
    ToyRunResult,
    analyze_sequence,
    flows_from_dump,
    make_dump_evaluator,
    make_toy_evaluator,
    run_toy_instance,
)
from .saliency import (
    CohortStats,
    FlowGrid,
    FlowTriple,
    SaliencyCapture,
    cohort_means,
    flow_grid,
    flow_triple,
    head_map,
    layer_profile,
    mean_matrix,
    region_score,
    run_mean_flows,
    saliency_capture,
    saliency_per_head,
)
from .segmentation import (
    AnswerStyle,
    Recognition,
    Spans,
    build_layout,
    extract_answer,
    finalize_spans,
    normalize_answer,
    recognize_answer_step,
)
from .selection import (
    DEFAULT_PROMPTS,
    IapConfig,
    PromptCandidate,
    ReasoningRecord,
    Selection,
    amv,
    calibrate_region_thresholds,
    calibrate_threshold,
    cohort_means_for_records,
    iap_mv,
    iap_ss,
    region_means,
    run_strategy,
    synthesized_score,
    tally_majority,
)
from .toylm import (
    AttentionCapture,
    DecodeResult,
    GradCapture,
    ModelConfig,
    ModelWeights,
    backward_to_attention,
    decode_tokens,
    encode_text,
    fd_attention_grad_oracle,
    forward_capture,
    greedy_decode,
    init_weights,
    load_weights,
    loss_at_answer,
    save_weights,
)

__version__ = "0.1.0"
