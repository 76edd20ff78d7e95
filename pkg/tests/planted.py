"""Test support: dumps with exactly planted region flows.

Attention rows are uniform over the causal prefix (1/(t+1)) and gradients
are sized so the saliency of every cell in a region rectangle equals the
requested value, making region means exact by construction (up to the
float32 storage of the dump format).
"""

import json

import numpy as np

from iapflow.dumpio import DumpRecord, write_dump
from iapflow.segmentation import build_layout, finalize_spans


def planted_spans(T, q=2, f=1, p=2):
    spans = build_layout(q, f, p)
    assert spans.rationale_start < T
    return finalize_spans(spans, T - 1)


def make_planted_dump(
    base_path,
    qp,
    qr,
    pr,
    answer,
    prompt_id="#1",
    L=2,
    H=2,
    T=8,
    q=2,
    f=1,
    p=2,
):
    """Write a dump whose three region flows are exactly (qp, qr, pr)."""
    spans = planted_spans(T, q, f, p)
    attention = np.zeros((L, H, T, T))
    gradients = np.zeros((L, H, T, T))
    for t in range(T):
        attention[:, :, t, : t + 1] = 1.0 / (t + 1)
    targets = {
        (spans.question, spans.prompt): qp,
        (spans.question, spans.rationale): qr,
        (spans.prompt, spans.rationale): pr,
    }
    for (src, tgt), value in targets.items():
        for j in range(tgt[0], tgt[1] + 1):
            for i in range(src[0], src[1] + 1):
                gradients[:, :, j, i] = value * (j + 1)
    record = DumpRecord(
        model_id="planted",
        num_layers=L,
        num_heads=H,
        seq_len=T,
        tokens=["x"] * T,
        spans=spans,
        answer_step=spans.answer_step,
        answer=answer,
        prompt_id=prompt_id,
        attention=attention,
        gradients=gradients,
    )
    write_dump(record, base_path)
    return record


def write_manifest(path, questions, style="numbers", prompts=None):
    manifest = {"style": style, "questions": questions}
    if prompts is not None:
        manifest["prompts"] = prompts
    path.write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return path
