"""Instance-adaptive prompt selection.

Each (question, prompt) run gets a synthesized score: the mean, over a
chosen set of layers and heads, of the weighted sum of its three region
flows.  Two strategies use these scores to pick a prompt per question:

* sequential substitution: try prompts in a fixed order and accept the
  first whose score clears a calibrated threshold, falling back to the
  best-scoring candidate when none qualifies;
* majority vote: score every prompt, keep the top k, and return the
  predominant answer among them.

An answer majority vote over all candidates, with no scores involved,
serves as the baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .saliency import FlowGrid, cohort_means


@dataclass(frozen=True)
class PromptCandidate:
    id: str
    text: str
    category: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("prompt text must be nonempty")
        if self.category not in ("instructive", "misleading", "irrelevant"):
            raise ValueError(f"unknown prompt category {self.category!r}")


# The nine candidate trigger prompts, in their default trial order.
# Prompts 1-6 are instructive, 7 is irrelevant, 8-9 are misleading.
DEFAULT_PROMPTS: tuple[PromptCandidate, ...] = (
    PromptCandidate("#1", "Let's think step by step.", "instructive"),
    PromptCandidate("#2", "First,", "instructive"),
    PromptCandidate("#3", "The answer is after the proof.", "instructive"),
    PromptCandidate("#4", "Before we dive into the answer,", "instructive"),
    PromptCandidate("#5", "Let's solve this problem by splitting it into steps.", "instructive"),
    PromptCandidate("#6", "Let's think about this logically.", "instructive"),
    PromptCandidate("#7", "It's a beautiful day.", "irrelevant"),
    PromptCandidate("#8", "Don't think. Just feel.", "misleading"),
    PromptCandidate("#9", "By the fact that the earth is round,", "misleading"),
)


def prompt_by_id(prompt_id: str) -> PromptCandidate:
    for cand in DEFAULT_PROMPTS:
        if cand.id == prompt_id:
            return cand
    raise KeyError(f"no default prompt with id {prompt_id!r}")


@dataclass
class IapConfig:
    """Selection hyperparameters.

    ``lambdas`` weight the (qp, qr, pr) flows and must sum to 1; ``layers``
    and ``heads`` restrict the grid cells entering the score ("all" keeps
    everything).  ``threshold`` is the single-score acceptance bound for
    sequential substitution; ``region_thresholds`` switches it to the
    per-region mode where each of the three flow means must clear its own
    bound.  The default threshold is the reference math-task calibration.
    """

    lambdas: tuple[float, float, float] = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)
    layers: Sequence[int] | str = "all"
    heads: Sequence[int] | str = "all"
    threshold: float = 5.5e-6
    region_thresholds: tuple[float, float, float] | None = None
    k: int = 3
    strategy: str = "mv"
    prompt_order: Sequence[str] | None = None

    def __post_init__(self) -> None:
        if len(self.lambdas) != 3 or any(l < 0 for l in self.lambdas):
            raise ValueError("lambdas must be three nonnegative weights")
        if abs(sum(self.lambdas) - 1.0) > 1e-12:
            raise ValueError("lambdas must sum to 1")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.strategy not in ("ss", "mv", "amv"):
            raise ValueError("strategy must be ss, mv, or amv")
        if self.threshold <= 0:
            raise ValueError("threshold must be positive")
        if self.region_thresholds is not None and any(t <= 0 for t in self.region_thresholds):
            raise ValueError("region thresholds must be positive")
        for name in ("layers", "heads"):
            val = getattr(self, name)
            if isinstance(val, str):
                if val != "all":
                    raise ValueError(f"{name} must be 'all' or a nonempty index list")
            elif len(val) == 0:
                raise ValueError(f"{name} must be nonempty")

    def resolve_indices(self, num_layers: int, num_heads: int) -> tuple[list[int], list[int]]:
        layers = list(range(num_layers)) if self.layers == "all" else sorted(set(self.layers))
        heads = list(range(num_heads)) if self.heads == "all" else sorted(set(self.heads))
        if layers and (layers[0] < 0 or layers[-1] >= num_layers):
            raise ValueError("layer index out of range")
        if heads and (heads[0] < 0 or heads[-1] >= num_heads):
            raise ValueError("head index out of range")
        return layers, heads


@dataclass
class ReasoningRecord:
    """One (question, prompt) run and everything scored from it."""

    question_id: str
    prompt_id: str
    text: str = ""
    answer: str | None = None
    flows: FlowGrid | None = None
    score: float | None = None
    generated_tokens: int = 0
    wall_time: float = 0.0


@dataclass
class Selection:
    """Outcome of one strategy on one question."""

    chosen_prompt_ids: list[str]
    final_answer: str | None
    scores: dict[str, float | None]
    candidates_run: int
    diagnostics: list[str] = field(default_factory=list)


Evaluator = Callable[[str, PromptCandidate], ReasoningRecord]


def synthesized_score(grid: FlowGrid, config: IapConfig) -> float:
    """Mean over the selected layer-head cells of the lambda-weighted flow sum."""
    layers, heads = config.resolve_indices(grid.num_layers, grid.num_heads)
    cells = grid.data[np.ix_(layers, heads)]
    weighted = cells @ np.asarray(config.lambdas)
    return float(weighted.mean())


def region_means(grid: FlowGrid, config: IapConfig) -> tuple[float, float, float]:
    """Per-region mean flows over the selected layer-head cells."""
    layers, heads = config.resolve_indices(grid.num_layers, grid.num_heads)
    cells = grid.data[np.ix_(layers, heads)]
    means = cells.mean(axis=(0, 1))
    return float(means[0]), float(means[1]), float(means[2])


def _order_candidates(candidates: Sequence[PromptCandidate], config: IapConfig) -> list[PromptCandidate]:
    if config.prompt_order is None:
        return list(candidates)
    by_id = {c.id: c for c in candidates}
    missing = [pid for pid in config.prompt_order if pid not in by_id]
    if missing:
        raise ValueError(f"prompt_order names unknown candidates: {missing}")
    return [by_id[pid] for pid in config.prompt_order]


def _score_record(record: ReasoningRecord, config: IapConfig) -> None:
    if record.flows is not None and record.score is None:
        record.score = synthesized_score(record.flows, config)


def tally_majority(votes: Sequence[tuple[str, float]]) -> str:
    """Modal answer of (answer, supporter score) votes; a count tie goes to
    the answer holding the single highest-scoring supporter."""
    if not votes:
        raise ValueError("cannot tally an empty vote set")
    counts: dict[str, int] = {}
    best_support: dict[str, float] = {}
    for answer, score in votes:
        counts[answer] = counts.get(answer, 0) + 1
        best_support[answer] = max(best_support.get(answer, -np.inf), score)
    top = max(counts.values())
    leaders = [a for a, n in counts.items() if n == top]
    return max(leaders, key=lambda a: best_support[a])


def iap_ss(
    question_id: str,
    candidates: Sequence[PromptCandidate],
    evaluator: Evaluator,
    config: IapConfig,
) -> tuple[Selection, list[ReasoningRecord]]:
    """Sequential substitution: accept the first candidate whose score
    qualifies, falling back to the best score when none does.

    A candidate qualifies when its synthesized score reaches the threshold
    or, in per-region mode, when each of its three region means reaches its
    own threshold.  Evaluation stops at the first qualifier, so the number
    of inference calls is part of the result.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    ordered = _order_candidates(candidates, config)
    records: list[ReasoningRecord] = []
    scores: dict[str, float | None] = {}
    diagnostics: list[str] = []
    candidates_run = 0
    chosen: ReasoningRecord | None = None
    for cand in ordered:
        candidates_run += 1
        try:
            record = evaluator(question_id, cand)
        except Exception as exc:  # noqa: BLE001 - evaluator faults are data
            diagnostics.append(f"{cand.id}: evaluator failed: {exc}")
            scores[cand.id] = None
            continue
        _score_record(record, config)
        records.append(record)
        scores[cand.id] = record.score
        if record.flows is None or record.score is None:
            diagnostics.append(f"{cand.id}: no flows captured")
            continue
        if config.region_thresholds is not None:
            means = region_means(record.flows, config)
            qualified = all(m >= t for m, t in zip(means, config.region_thresholds))
        else:
            qualified = record.score >= config.threshold
        if qualified:
            chosen = record
            break
    if chosen is None:
        scored = [r for r in records if r.score is not None]
        if not scored:
            return (
                Selection([], None, scores, candidates_run, diagnostics + ["no candidate produced a score"]),
                records,
            )
        chosen = max(scored, key=lambda r: r.score)
        diagnostics.append("no candidate qualified; fell back to the max score")
    return (
        Selection([chosen.prompt_id], chosen.answer, scores, candidates_run, diagnostics),
        records,
    )


def _vote_records(records: list[ReasoningRecord], diagnostics: list[str]) -> str | None:
    votes = [(r.answer, r.score if r.score is not None else -np.inf) for r in records if r.answer is not None]
    if not votes:
        diagnostics.append("no extractable answer among the voting records")
        return None
    return tally_majority(votes)


def iap_mv(
    question_id: str,
    candidates: Sequence[PromptCandidate],
    evaluator: Evaluator,
    config: IapConfig,
) -> tuple[Selection, list[ReasoningRecord]]:
    """Majority vote over the top-k synthesized scores.

    All candidates are evaluated; records are ranked by score (score ties
    keep the earlier prompt order) and the modal answer among the k best is
    returned, with answer-count ties broken toward the answer backed by the
    single highest score.
    """
    if not 1 <= config.k <= len(candidates):
        raise ValueError(f"k={config.k} outside 1..{len(candidates)}")
    ordered = _order_candidates(candidates, config)
    records: list[ReasoningRecord] = []
    scores: dict[str, float | None] = {}
    diagnostics: list[str] = []
    candidates_run = 0
    for cand in ordered:
        candidates_run += 1
        try:
            record = evaluator(question_id, cand)
        except Exception as exc:  # noqa: BLE001
            diagnostics.append(f"{cand.id}: evaluator failed: {exc}")
            scores[cand.id] = None
            continue
        _score_record(record, config)
        records.append(record)
        scores[cand.id] = record.score
    ranked = sorted(
        [r for r in records if r.score is not None],
        key=lambda r: r.score,
        reverse=True,
    )
    top = ranked[: config.k]
    answer = _vote_records(top, diagnostics)
    return Selection([r.prompt_id for r in top], answer, scores, candidates_run, diagnostics), records


def amv(
    question_id: str,
    candidates: Sequence[PromptCandidate],
    evaluator: Evaluator,
    config: IapConfig | None = None,
) -> tuple[Selection, list[ReasoningRecord]]:
    """Answer majority vote over all candidates, ignoring scores for
    ranking but keeping them for the tie rule."""
    if not candidates:
        raise ValueError("need at least one candidate")
    ordered = _order_candidates(candidates, config) if config is not None else list(candidates)
    records: list[ReasoningRecord] = []
    scores: dict[str, float | None] = {}
    diagnostics: list[str] = []
    candidates_run = 0
    for cand in ordered:
        candidates_run += 1
        try:
            record = evaluator(question_id, cand)
        except Exception as exc:  # noqa: BLE001
            diagnostics.append(f"{cand.id}: evaluator failed: {exc}")
            scores[cand.id] = None
            continue
        if config is not None:
            _score_record(record, config)
        records.append(record)
        scores[cand.id] = record.score
    answer = _vote_records(records, diagnostics)
    voted = [r.prompt_id for r in records if r.answer is not None]
    return Selection(voted, answer, scores, candidates_run, diagnostics), records


def calibrate_threshold(labeled_scores: Sequence[tuple[float, bool]]) -> float:
    """Best single threshold separating good (True) from bad (False) runs.

    Candidates are the midpoints between adjacent distinct sorted scores;
    each is judged by the accuracy of "good iff score >= threshold", and
    accuracy ties break toward the larger threshold.
    """
    if not labeled_scores:
        raise ValueError("no labeled scores")
    labels = {label for _, label in labeled_scores}
    if labels != {True, False}:
        raise ValueError("calibration needs both good and bad examples")
    values = sorted({float(s) for s, _ in labeled_scores})
    if len(values) == 1:
        # All scores identical; any threshold at the value predicts all-good.
        return values[0]
    midpoints = [(a + b) / 2.0 for a, b in zip(values, values[1:])]
    scores = np.asarray([s for s, _ in labeled_scores])
    good = np.asarray([label for _, label in labeled_scores])
    best_threshold = None
    best_accuracy = -1.0
    for t in midpoints:
        accuracy = float(np.mean((scores >= t) == good))
        if accuracy > best_accuracy or (accuracy == best_accuracy and t > best_threshold):
            best_accuracy = accuracy
            best_threshold = t
    return best_threshold


def calibrate_region_thresholds(
    labeled_means: Sequence[tuple[tuple[float, float, float], bool]],
) -> tuple[float, float, float]:
    """Per-region thresholds, each calibrated independently on its flow."""
    out = []
    for idx in range(3):
        out.append(calibrate_threshold([(means[idx], label) for means, label in labeled_means]))
    return out[0], out[1], out[2]


def cohort_means_for_records(labeled_records: Sequence[tuple[ReasoningRecord, bool]]):
    """Good/bad cohort flow means over labeled runs; records without flows
    are excluded."""
    good = [r.flows for r, label in labeled_records if label and r.flows is not None]
    bad = [r.flows for r, label in labeled_records if not label and r.flows is not None]
    return cohort_means(good, bad)


def run_strategy(
    strategy: str,
    question_id: str,
    candidates: Sequence[PromptCandidate],
    evaluator: Evaluator,
    config: IapConfig,
) -> tuple[Selection, list[ReasoningRecord]]:
    if strategy == "ss":
        return iap_ss(question_id, candidates, evaluator, config)
    if strategy == "mv":
        return iap_mv(question_id, candidates, evaluator, config)
    if strategy == "amv":
        return amv(question_id, candidates, evaluator, config)
    raise ValueError(f"unknown strategy {strategy!r}")
