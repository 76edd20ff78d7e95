"""Walkthrough: from one reasoning run to its saliency flows.

Builds a desk-scale transformer, analyzes a (question, prompt, rationale)
sequence, and prints the three region flows that summarize where the
answer-step loss says information moved.
"""

import numpy as np

from iapflow import (
    AnswerStyle,
    ModelConfig,
    analyze_sequence,
    init_weights,
    mean_matrix,
)

config = ModelConfig(num_layers=2, num_heads=2, d_model=32, max_seq_len=160, seed=7)
weights = init_weights(config)

question = "A farmer has 3 pens with 4 hens each. How many hens?"
prompt = "Let's think step by step."
rationale = "3 pens times 4 hens gives 12. Therefore, the answer is 12."

run = analyze_sequence(weights, question, prompt, rationale, AnswerStyle.NUMBERS)

print(f"sequence length: {len(run.tokens)} tokens")
print(f"question span:   {run.spans.question}")
print(f"prompt span:     {run.spans.prompt}")
print(f"rationale span:  {run.spans.rationale}")
print(f"recognized answer {run.answer!r} at token {run.answer_step}, loss {run.loss:.4f}")
print()

mm = mean_matrix(run.saliency)
print(f"mean saliency matrix: shape {mm.shape}, max {mm.max():.3e}")
print("rows attend to earlier columns only; the upper triangle is exactly zero:")
print(f"  upper-triangle max = {np.triu(mm, k=1).max():.1e}")
print()

print("per-(layer, head) region flows (question->prompt, question->rationale, prompt->rationale):")
for layer in range(run.flows.num_layers):
    for head in range(run.flows.num_heads):
        qp, qr, pr = run.flows.triple(layer, head)
        print(f"  layer {layer} head {head}:  qp={qp:.3e}  qr={qr:.3e}  pr={pr:.3e}")
