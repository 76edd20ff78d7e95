"""Saliency matrices and region flow scores.

The saliency of one (layer, head) is the elementwise product of its
attention probability matrix with the loss gradient at that matrix, in
absolute value.  Entry (t, s) is read as the intensity of information
flow from the earlier token s into the later token t, so region scores
aggregate rectangles of these matrices: the question-to-prompt,
question-to-rationale, and prompt-to-rationale flows of a run.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np

from .segmentation import Spans
from .toylm import AttentionCapture, GradCapture

FLOW_KINDS = ("qp", "qr", "pr")


class FlowTriple(NamedTuple):
    i_qp: float
    i_qr: float
    i_pr: float


@dataclass
class SaliencyCapture:
    """Nonnegative saliency matrices, shape (L, H, T, T), zero above the
    causal diagonal."""

    matrices: np.ndarray
    seq_len: int

    @property
    def num_layers(self) -> int:
        return self.matrices.shape[0]

    @property
    def num_heads(self) -> int:
        return self.matrices.shape[1]


@dataclass
class FlowGrid:
    """Per-(layer, head) flow triples, stored as an (L, H, 3) array in
    (qp, qr, pr) component order."""

    data: np.ndarray

    @property
    def num_layers(self) -> int:
        return self.data.shape[0]

    @property
    def num_heads(self) -> int:
        return self.data.shape[1]

    def triple(self, layer: int, head: int) -> FlowTriple:
        return FlowTriple(*self.data[layer, head])

    def component(self, kind: str) -> np.ndarray:
        return self.data[:, :, FLOW_KINDS.index(kind)]


@dataclass
class CohortStats:
    """Mean run-level flow per kind over one labeled cohort."""

    qp: float
    qr: float
    pr: float
    count: int


def saliency_per_head(attention: np.ndarray, gradient: np.ndarray) -> np.ndarray:
    """Elementwise |attention * gradient| for one head's matrices."""
    a = np.asarray(attention, dtype=np.float64)
    g = np.asarray(gradient, dtype=np.float64)
    if a.shape != g.shape:
        raise ValueError(f"shape mismatch: attention {a.shape} vs gradient {g.shape}")
    return np.abs(a * g)


def saliency_capture(attention: AttentionCapture, gradient: GradCapture) -> SaliencyCapture:
    """Saliency matrices for every (layer, head) of one run."""
    if attention.matrices.shape != gradient.matrices.shape:
        raise ValueError("attention and gradient captures have different shapes")
    return SaliencyCapture(
        matrices=np.abs(attention.matrices * gradient.matrices),
        seq_len=attention.seq_len,
    )


def region_score(matrix: np.ndarray, source_span: tuple[int, int], target_span: tuple[int, int]) -> float:
    """Mean flow from the source region into the target region.

    Flow from token i to token j is stored at (row j, column i), so this is
    the mean of the [target rows] x [source columns] rectangle.  The
    normalizer is the full rectangle size even though cells above the
    diagonal are structurally zero.
    """
    s_lo, s_hi = source_span
    t_lo, t_hi = target_span
    T = matrix.shape[0]
    if matrix.ndim != 2 or matrix.shape[1] != T:
        raise ValueError("saliency matrix must be square")
    if not (0 <= s_lo <= s_hi and 0 <= t_lo <= t_hi and s_hi < T and t_hi < T):
        raise ValueError(f"spans {source_span}, {target_span} invalid for T={T}")
    if s_hi >= t_lo:
        raise ValueError("every source index must precede every target index")
    return float(matrix[t_lo : t_hi + 1, s_lo : s_hi + 1].mean())


def flow_triple(sal: SaliencyCapture, spans: Spans, layer: int, head: int) -> FlowTriple:
    """The (qp, qr, pr) region scores of one (layer, head)."""
    if not (0 <= layer < sal.num_layers and 0 <= head < sal.num_heads):
        raise ValueError("layer or head index out of range")
    spans.validate(sal.seq_len)
    m = sal.matrices[layer, head]
    return FlowTriple(
        i_qp=region_score(m, spans.question, spans.prompt),
        i_qr=region_score(m, spans.question, spans.rationale),
        i_pr=region_score(m, spans.prompt, spans.rationale),
    )


def flow_grid(sal: SaliencyCapture, spans: Spans) -> FlowGrid:
    """Flow triples for the full layer-head grid."""
    L, H = sal.num_layers, sal.num_heads
    data = np.zeros((L, H, 3))
    for l in range(L):
        for h in range(H):
            data[l, h] = flow_triple(sal, spans, l, h)
    return FlowGrid(data=data)


def mean_matrix(sal: SaliencyCapture) -> np.ndarray:
    """Elementwise mean of the saliency matrices over all layers and heads."""
    return sal.matrices.mean(axis=(0, 1))


def layer_profile(grid: FlowGrid) -> np.ndarray:
    """Head-mean flow triple per layer, shape (L, 3)."""
    return grid.data.mean(axis=1)


def head_map(grid: FlowGrid, flow_kind: str) -> np.ndarray:
    """The (L, H) matrix of one flow component."""
    if flow_kind not in FLOW_KINDS:
        raise ValueError(f"flow kind must be one of {FLOW_KINDS}")
    return grid.component(flow_kind).copy()


def run_mean_flows(grid: FlowGrid) -> FlowTriple:
    """All-(layer, head) mean of the flow triple: the run-level flows."""
    return FlowTriple(*grid.data.mean(axis=(0, 1)))


def cohort_means(
    good_grids: Iterable[FlowGrid], bad_grids: Iterable[FlowGrid]
) -> tuple[CohortStats, CohortStats]:
    """Mean run-level flows of the good and bad cohorts."""

    def stats(grids: Iterable[FlowGrid]) -> CohortStats:
        runs = np.asarray([run_mean_flows(g) for g in grids])
        if runs.size == 0:
            raise ValueError("cohort must contain at least one run")
        means = runs.mean(axis=0)
        return CohortStats(qp=means[0], qr=means[1], pr=means[2], count=len(runs))

    return stats(good_grids), stats(bad_grids)
