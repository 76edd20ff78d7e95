"""Planted synthetic benchmarks for exercising the selection strategies.

Each (question, prompt) run is labeled good or bad up front; good runs
get their answer set to the gold answer and their flow grids drawn from a
higher distribution than bad runs, mirroring the observed cohort gap.
This gives a benchmark where score-based selection is learnable, with
known single-prompt accuracies to compare against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .saliency import FlowGrid
from .selection import DEFAULT_PROMPTS, PromptCandidate, ReasoningRecord


@dataclass
class SyntheticRun:
    good: bool
    answer: str
    flows: FlowGrid
    score_seed_noise: float = 0.0


@dataclass
class SyntheticBenchmark:
    questions: list[str]
    gold: dict[str, str]
    prompts: tuple[PromptCandidate, ...]
    runs: dict[tuple[str, str], SyntheticRun] = field(default_factory=dict)

    def evaluator(self):
        """Fresh ReasoningRecord per call so strategies never share state."""

        def evaluate(question_id: str, candidate: PromptCandidate) -> ReasoningRecord:
            run = self.runs[(question_id, candidate.id)]
            return ReasoningRecord(
                question_id=question_id,
                prompt_id=candidate.id,
                answer=run.answer,
                flows=run.flows,
                generated_tokens=1,
            )

        return evaluate

    def single_prompt_accuracy(self, prompt_id: str) -> float:
        hits = sum(
            1 for q in self.questions if self.runs[(q, prompt_id)].answer == self.gold[q]
        )
        return hits / len(self.questions)

    def best_single_prompt_accuracy(self) -> float:
        return max(self.single_prompt_accuracy(p.id) for p in self.prompts)

    def labeled_scores(self, score_fn) -> list[tuple[float, bool]]:
        """(score, good) pairs over every run, for threshold calibration."""
        out = []
        for run in self.runs.values():
            out.append((score_fn(run.flows), run.good))
        return out


def _draw_grid(
    rng: np.random.Generator,
    num_layers: int,
    num_heads: int,
    mean: float,
    spread: float,
) -> FlowGrid:
    data = rng.normal(mean, spread, size=(num_layers, num_heads, 3))
    return FlowGrid(data=np.clip(data, 1e-9, None))


def generate_benchmark(
    num_questions: int,
    seed: int = 0,
    prompts: tuple[PromptCandidate, ...] = DEFAULT_PROMPTS,
    prompt_qualities: dict[str, float] | None = None,
    num_layers: int = 2,
    num_heads: int = 2,
    good_flow_mean: float = 8.0e-6,
    bad_flow_mean: float = 3.0e-6,
    flow_spread: float = 6.0e-7,
    first_always_good: bool = False,
) -> SyntheticBenchmark:
    """Build a benchmark with per-prompt success rates and separated flows.

    ``prompt_qualities`` maps prompt id to its probability of producing a
    good run; unlisted prompts default to a mid/low mix that makes no
    single prompt dominant.  ``first_always_good`` forces the first prompt
    to qualify on every question (useful for early-exit accounting tests).
    """
    rng = np.random.default_rng(seed)
    if prompt_qualities is None:
        base = [0.55, 0.50, 0.45, 0.40, 0.40, 0.35, 0.25, 0.15, 0.10]
        prompt_qualities = {
            p.id: base[i % len(base)] for i, p in enumerate(prompts)
        }
    bench = SyntheticBenchmark(
        questions=[f"q{i:04d}" for i in range(num_questions)],
        gold={},
        prompts=prompts,
    )
    for qi, qid in enumerate(bench.questions):
        gold_answer = str(rng.integers(1, 1000))
        bench.gold[qid] = gold_answer
        for pi, prompt in enumerate(prompts):
            good = bool(rng.random() < prompt_qualities[prompt.id])
            if first_always_good and pi == 0:
                good = True
            if good:
                answer = gold_answer
                flows = _draw_grid(rng, num_layers, num_heads, good_flow_mean, flow_spread)
            else:
                # Wrong answers are made unique per prompt so bad runs never
                # gang up on a single wrong answer.
                answer = f"{gold_answer}x{pi}"
                flows = _draw_grid(rng, num_layers, num_heads, bad_flow_mean, flow_spread)
            bench.runs[(qid, prompt.id)] = SyntheticRun(good=good, answer=answer, flows=flows)
    return bench
