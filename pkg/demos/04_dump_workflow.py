"""Walkthrough: the capture-dump wire format.

Runs one toy instance, writes its version-1 dump (sidecar JSON metadata
plus two little-endian float32 tensors), validates it, and re-derives the
flows offline from the files alone - the same path an external exporter's
dumps take.
"""

from pathlib import Path

from iapflow import (
    AnswerStyle,
    ModelConfig,
    analyze_sequence,
    flows_from_dump,
    init_weights,
    read_dump,
    run_mean_flows,
    validate_dump,
    write_dump,
)
from iapflow.dumpio import dump_paths

out_dir = Path(__file__).parent / "out"
out_dir.mkdir(exist_ok=True)
base = out_dir / "demo_run"

config = ModelConfig(num_layers=2, num_heads=2, d_model=32, max_seq_len=160, seed=3)
weights = init_weights(config)
run = analyze_sequence(
    weights,
    question_text="A box holds 8 balls. Two boxes hold how many?",
    prompt_text="First,",
    rationale_text="two times 8 is 16. The answer is 16.",
    style=AnswerStyle.NUMBERS,
)

write_dump(run.to_dump_record("toy-demo", "#2"), base)
for path in dump_paths(base):
    print(f"wrote {path.name}: {path.stat().st_size} bytes")

record = read_dump(base)
diagnostics = validate_dump(record)
print(f"\nvalidation diagnostics: {diagnostics or 'clean'}")

grid = flows_from_dump(record)
offline = run_mean_flows(grid)
inproc = run_mean_flows(run.flows)
print("\nrun-level mean flows (qp, qr, pr):")
print(f"  in-process (float64): {inproc.i_qp:.6e} {inproc.i_qr:.6e} {inproc.i_pr:.6e}")
print(f"  from dump  (float32): {offline.i_qp:.6e} {offline.i_qr:.6e} {offline.i_pr:.6e}")
rel = max(
    abs(a - b) / abs(a) for a, b in zip(inproc, offline)
)
print(f"  worst relative deviation after f32 storage: {rel:.2e}")

print("\nthe same analysis is available from the command line:")
print(f"  iapflow report --dump {base} --out {out_dir / 'report.json'} \\")
print(f"      --heatmap {out_dir / 'mean_saliency.csv'}")
