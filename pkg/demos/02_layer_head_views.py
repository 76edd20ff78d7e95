"""Walkthrough: layer profiles and head maps of the flow grid.

The per-(layer, head) flows can be viewed two ways: averaged over heads to
see how each layer moves information, or projected per flow kind into an
L x H map showing which heads specialize.  Both views are written as CSV
grids next to this script.
"""

from pathlib import Path

from iapflow import (
    AnswerStyle,
    ModelConfig,
    analyze_sequence,
    head_map,
    init_weights,
    layer_profile,
)
from iapflow.reports import write_head_map_csvs, write_matrix_csv

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)

config = ModelConfig(num_layers=4, num_heads=4, d_model=32, max_seq_len=160, seed=13)
weights = init_weights(config)

run = analyze_sequence(
    weights,
    question_text="Tom read 5 pages on Monday and 6 on Tuesday. Total pages?",
    prompt_text="Let's think about this logically.",
    rationale_text="5 plus 6 equals 11, so the answer is 11.",
    style=AnswerStyle.NUMBERS,
)

profile = layer_profile(run.flows)
print("layer profile (head-mean flows per layer):")
print(f"  {'layer':>5}  {'q->p':>10}  {'q->r':>10}  {'p->r':>10}")
for layer, (qp, qr, pr) in enumerate(profile):
    print(f"  {layer:>5}  {qp:>10.3e}  {qr:>10.3e}  {pr:>10.3e}")

write_matrix_csv(profile, out_dir / "layer_profile.csv")
print(f"\nwrote {out_dir / 'layer_profile.csv'}")

qp_map = head_map(run.flows, "qp")
strongest = divmod(int(qp_map.argmax()), qp_map.shape[1])
print(f"\nstrongest question->prompt head: layer {strongest[0]}, head {strongest[1]}")

paths = write_head_map_csvs(run.flows, out_dir / "head_map")
for path in paths:
    print(f"wrote {path}")
