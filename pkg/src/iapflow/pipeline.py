"""End-to-end toy runs: layout, decoding, gradient capture, and flows.

One instance is a (question, prompt) pair.  The input sequence is the
question bytes, the format glue, then the prompt bytes; generation runs
until the answer recognizer fires or the budget is spent.  When an answer
step exists, a teacher-forced re-pass computes the answer-span loss and
its attention gradients, and the saliency flows follow.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .dumpio import DumpRecord
from .saliency import FlowGrid, SaliencyCapture, flow_grid, saliency_capture
from .segmentation import (
    AnswerStyle,
    Spans,
    build_layout,
    finalize_spans,
    normalize_answer,
    recognize_answer_step,
)
from .selection import PromptCandidate, ReasoningRecord
from .toylm import (
    AttentionCapture,
    DecodeResult,
    GradCapture,
    ModelWeights,
    decode_tokens,
    encode_text,
    forward_capture,
    backward_to_attention,
    greedy_decode,
)

DEFAULT_FORMAT_TEXT = "\nAnswer: "


@dataclass
class ToyRunResult:
    """Everything captured from one toy instance."""

    tokens: np.ndarray
    input_len: int
    generated_text: str
    spans: Spans
    attention: AttentionCapture
    gradients: GradCapture
    saliency: SaliencyCapture
    answer: str | None
    answer_step: int | None
    loss: float | None
    flows: FlowGrid | None

    @property
    def recognized(self) -> bool:
        return self.answer_step is not None

    def token_strings(self) -> list[str]:
        return [decode_tokens(np.asarray([t])) for t in self.tokens.tolist()]

    def to_dump_record(self, model_id: str, prompt_id: str) -> DumpRecord:
        return DumpRecord(
            model_id=model_id,
            num_layers=self.attention.matrices.shape[0],
            num_heads=self.attention.matrices.shape[1],
            seq_len=len(self.tokens),
            tokens=self.token_strings(),
            spans=self.spans,
            answer_step=self.answer_step,
            answer=self.answer,
            prompt_id=prompt_id,
            attention=self.attention.matrices,
            gradients=self.gradients.matrices,
        )


def _analyze_recognized(
    weights: ModelWeights,
    tokens: np.ndarray,
    partial: Spans,
    style: AnswerStyle,
    decode: DecodeResult,
) -> ToyRunResult:
    spans = finalize_spans(partial, decode.answer_step)
    loss, attention, gradients = backward_to_attention(weights, tokens, decode.answer_token_span)
    sal = saliency_capture(attention, gradients)
    return ToyRunResult(
        tokens=tokens,
        input_len=decode.input_len,
        generated_text=decode.text,
        spans=spans,
        attention=attention,
        gradients=gradients,
        saliency=sal,
        answer=normalize_answer(decode.answer_text, style),
        answer_step=decode.answer_step,
        loss=loss,
        flows=flow_grid(sal, spans),
    )


def _analyze_unrecognized(
    weights: ModelWeights, tokens: np.ndarray, partial: Spans, decode: DecodeResult
) -> ToyRunResult:
    # No answer step: flows are undefined, so the gradient capture is zero
    # and only the attention tensor carries information.
    _, attention = forward_capture(weights, tokens)
    gradients = GradCapture(np.zeros_like(attention.matrices), attention.seq_len)
    return ToyRunResult(
        tokens=tokens,
        input_len=decode.input_len,
        generated_text=decode.text,
        spans=partial,
        attention=attention,
        gradients=gradients,
        saliency=saliency_capture(attention, gradients),
        answer=None,
        answer_step=None,
        loss=None,
        flows=None,
    )


def run_toy_instance(
    weights: ModelWeights,
    question_text: str,
    prompt_text: str,
    style: AnswerStyle,
    max_new: int = 64,
    format_text: str = DEFAULT_FORMAT_TEXT,
) -> ToyRunResult:
    """Decode one instance greedily and capture its saliency flows."""
    if not question_text:
        raise ValueError("question must be nonempty")
    q_ids = encode_text(question_text)
    f_ids = encode_text(format_text)
    p_ids = encode_text(prompt_text)
    partial = build_layout(len(q_ids), len(f_ids), len(p_ids))
    input_ids = np.concatenate([q_ids, f_ids, p_ids])
    decode = greedy_decode(
        weights, input_ids, lambda text: recognize_answer_step(text, style), max_new
    )
    if decode.answer_step is not None:
        return _analyze_recognized(weights, decode.tokens, partial, style, decode)
    return _analyze_unrecognized(weights, decode.tokens, partial, decode)


def analyze_sequence(
    weights: ModelWeights,
    question_text: str,
    prompt_text: str,
    rationale_text: str,
    style: AnswerStyle,
    format_text: str = DEFAULT_FORMAT_TEXT,
) -> ToyRunResult:
    """Analyze a fully given run instead of decoding one.

    The rationale text stands in for generated output: recognition runs on
    it with the same streaming semantics, and the sequence is truncated at
    the answer step exactly as a stopped generation would be.  Useful for
    producing flow-bearing captures regardless of what the toy model would
    emit on its own.
    """
    q_ids = encode_text(question_text)
    f_ids = encode_text(format_text)
    p_ids = encode_text(prompt_text)
    partial = build_layout(len(q_ids), len(f_ids), len(p_ids))
    input_len = len(q_ids) + len(f_ids) + len(p_ids)
    r_ids = encode_text(rationale_text)
    tokens = np.concatenate([q_ids, f_ids, p_ids, r_ids])
    hit = recognize_answer_step(decode_tokens(r_ids), style)
    if hit is None:
        decode = DecodeResult(tokens=tokens, input_len=input_len, text=rationale_text)
        return _analyze_unrecognized(weights, tokens, partial, decode)
    answer_step = input_len + hit.match_span[1] - 1
    tokens = tokens[: answer_step + 1]
    decode = DecodeResult(
        tokens=tokens,
        input_len=input_len,
        text=decode_tokens(tokens[input_len:]),
        answer_step=answer_step,
        answer_token_span=(input_len + hit.answer_span[0], input_len + hit.answer_span[1] - 1),
        answer_text=hit.answer,
    )
    return _analyze_recognized(weights, tokens, partial, style, decode)


def flows_from_dump(record: DumpRecord) -> FlowGrid | None:
    """Region flows of a dump, or None when no answer step was recognized."""
    if not record.spans.is_final:
        return None
    sal = SaliencyCapture(np.abs(record.attention * record.gradients), record.seq_len)
    return flow_grid(sal, record.spans)


def make_toy_evaluator(
    weights: ModelWeights,
    question_texts: dict[str, str],
    style: AnswerStyle,
    max_new: int = 64,
    format_text: str = DEFAULT_FORMAT_TEXT,
):
    """Evaluator closure running toy inference per (question, prompt)."""

    def evaluate(question_id: str, candidate: PromptCandidate) -> ReasoningRecord:
        started = time.perf_counter()
        run = run_toy_instance(
            weights, question_texts[question_id], candidate.text, style,
            max_new=max_new, format_text=format_text,
        )
        return ReasoningRecord(
            question_id=question_id,
            prompt_id=candidate.id,
            text=run.generated_text,
            answer=run.answer,
            flows=run.flows,
            generated_tokens=len(run.tokens) - run.input_len,
            wall_time=time.perf_counter() - started,
        )

    return evaluate


def make_dump_evaluator(dump_paths_by_question: dict[str, dict[str, str]]):
    """Evaluator closure reading precomputed dumps per (question, prompt)."""
    from .dumpio import read_dump

    def evaluate(question_id: str, candidate: PromptCandidate) -> ReasoningRecord:
        started = time.perf_counter()
        paths = dump_paths_by_question[question_id]
        if candidate.id not in paths:
            raise KeyError(f"no dump for prompt {candidate.id} of question {question_id}")
        record = read_dump(paths[candidate.id])
        return ReasoningRecord(
            question_id=question_id,
            prompt_id=candidate.id,
            text="",
            answer=record.answer,
            flows=flows_from_dump(record),
            generated_tokens=(
                record.seq_len - record.spans.rationale_start
                if record.spans.rationale_start < record.seq_len
                else 0
            ),
            wall_time=time.perf_counter() - started,
        )

    return evaluate
