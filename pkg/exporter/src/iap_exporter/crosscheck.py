"""Independent in-process flow computation.

The consumer of a dump recomputes region flows from the stored tensors;
this module does the same arithmetic on the exporter's own float64
tensors so the two paths can be compared end to end.
"""

from __future__ import annotations

import numpy as np


def region_mean(matrix: np.ndarray, source: tuple[int, int], target: tuple[int, int]) -> float:
    """Mean flow from source tokens into target tokens: the mean of the
    [target rows] x [source columns] rectangle."""
    return float(matrix[target[0] : target[1] + 1, source[0] : source[1] + 1].mean())


def flow_triples(attention: np.ndarray, gradients: np.ndarray, spans: dict) -> np.ndarray:
    """Per-(layer, head) (qp, qr, pr) flows of |attention * gradient|."""
    saliency = np.abs(attention.astype(np.float64) * gradients.astype(np.float64))
    L, H = saliency.shape[:2]
    question = tuple(spans["question"])
    prompt = tuple(spans["prompt"])
    rationale = (spans["rationale_start"], spans["rationale_end"])
    out = np.zeros((L, H, 3))
    for l in range(L):
        for h in range(H):
            m = saliency[l, h]
            out[l, h] = (
                region_mean(m, question, prompt),
                region_mean(m, question, rationale),
                region_mean(m, prompt, rationale),
            )
    return out
