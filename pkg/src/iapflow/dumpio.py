"""Binary capture-dump format, version 1.

A dump is three sibling files sharing a base path:

* ``<base>.meta.json``  - UTF-8 JSON metadata (model id, dimensions, token
  strings, spans, answer step, answer text, prompt id, dtype, layout);
* ``<base>.attn.bin``   - attention probabilities;
* ``<base>.grad.bin``   - loss gradients at those probabilities.

Each .bin file starts with the magic ``IAPD`` and a little-endian u32
version, followed by little-endian float32 values in row-major
[layer][head][row][col] order.  Tensors are stored in float32 regardless
of the producer's precision; analysis promotes them back to float64.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .segmentation import Spans

DUMP_MAGIC = b"IAPD"
DUMP_VERSION = 1
_HEADER = struct.Struct("<4sI")


class DumpFormatError(ValueError):
    """A dump file violates the version-1 format contract."""


@dataclass
class DumpRecord:
    """One run's captured tensors plus the metadata needed to analyze them."""

    model_id: str
    num_layers: int
    num_heads: int
    seq_len: int
    tokens: list[str]
    spans: Spans
    answer_step: int | None
    answer: str | None
    prompt_id: str
    attention: np.ndarray
    gradients: np.ndarray

    def validate_shapes(self) -> None:
        expected = (self.num_layers, self.num_heads, self.seq_len, self.seq_len)
        if self.attention.shape != expected:
            raise DumpFormatError(f"attention blob shape {self.attention.shape} != {expected}")
        if self.gradients.shape != expected:
            raise DumpFormatError(f"gradient blob shape {self.gradients.shape} != {expected}")
        if len(self.tokens) != self.seq_len:
            raise DumpFormatError(f"{len(self.tokens)} token strings for seq_len {self.seq_len}")
        try:
            self.spans.validate(self.seq_len)
        except ValueError as exc:
            raise DumpFormatError(f"span inconsistency: {exc}") from exc
        if (self.answer_step is None) != (self.spans.answer_step is None):
            raise DumpFormatError("answer_step and spans disagree about recognition")


def _spans_to_json(spans: Spans) -> dict:
    return {
        "question": list(spans.question),
        "prompt": list(spans.prompt),
        "rationale_start": spans.rationale_start,
        "rationale_end": spans.rationale_end,
        "answer_step": spans.answer_step,
    }


def _spans_from_json(payload: dict) -> Spans:
    return Spans(
        question=tuple(payload["question"]),
        prompt=tuple(payload["prompt"]),
        rationale_start=payload["rationale_start"],
        rationale_end=payload.get("rationale_end"),
        answer_step=payload.get("answer_step"),
    )


def _write_blob(path: Path, tensor: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(DUMP_MAGIC, DUMP_VERSION))
        fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def _read_blob(path: Path, shape: tuple[int, int, int, int]) -> np.ndarray:
    count = int(np.prod(shape))
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DumpFormatError(f"{path.name}: truncated header")
        magic, version = _HEADER.unpack(header)
        if magic != DUMP_MAGIC:
            raise DumpFormatError(f"{path.name}: bad magic {magic!r}")
        if version != DUMP_VERSION:
            raise DumpFormatError(f"{path.name}: version mismatch (got {version}, want {DUMP_VERSION})")
        raw = fh.read()
    if len(raw) != 4 * count:
        raise DumpFormatError(f"{path.name}: size mismatch (got {len(raw)} payload bytes, want {4 * count})")
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float64)


def dump_paths(base: str | Path) -> tuple[Path, Path, Path]:
    base = Path(base)
    return (
        base.with_name(base.name + ".meta.json"),
        base.with_name(base.name + ".attn.bin"),
        base.with_name(base.name + ".grad.bin"),
    )


def write_dump(record: DumpRecord, base_path: str | Path) -> None:
    """Write the three dump files after revalidating the record."""
    record.validate_shapes()
    if not np.all(np.isfinite(record.attention)) or not np.all(np.isfinite(record.gradients)):
        raise DumpFormatError("refusing to write non-finite tensors")
    meta_path, attn_path, grad_path = dump_paths(base_path)
    meta = {
        "format": "iap-capture-dump",
        "version": DUMP_VERSION,
        "model_id": record.model_id,
        "num_layers": record.num_layers,
        "num_heads": record.num_heads,
        "seq_len": record.seq_len,
        "tokens": record.tokens,
        "spans": _spans_to_json(record.spans),
        "answer_step": record.answer_step,
        "answer": record.answer,
        "prompt_id": record.prompt_id,
        "dtype": "float32",
        "layout": "layer,head,query_row,key_col",
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _write_blob(attn_path, record.attention)
    _write_blob(grad_path, record.gradients)


def read_dump(base_path: str | Path) -> DumpRecord:
    """Parse a dump, revalidating every format invariant."""
    meta_path, attn_path, grad_path = dump_paths(base_path)
    for p in (meta_path, attn_path, grad_path):
        if not p.exists():
            raise FileNotFoundError(f"missing dump file {p}")
    try:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DumpFormatError(f"{meta_path.name}: invalid JSON: {exc}") from exc
    if meta.get("version") != DUMP_VERSION:
        raise DumpFormatError(f"{meta_path.name}: version mismatch (got {meta.get('version')})")
    if meta.get("dtype") != "float32":
        raise DumpFormatError(f"{meta_path.name}: unsupported dtype {meta.get('dtype')!r}")
    if meta.get("layout") != "layer,head,query_row,key_col":
        raise DumpFormatError(f"{meta_path.name}: unsupported layout {meta.get('layout')!r}")
    shape = (meta["num_layers"], meta["num_heads"], meta["seq_len"], meta["seq_len"])
    record = DumpRecord(
        model_id=meta["model_id"],
        num_layers=meta["num_layers"],
        num_heads=meta["num_heads"],
        seq_len=meta["seq_len"],
        tokens=meta["tokens"],
        spans=_spans_from_json(meta["spans"]),
        answer_step=meta.get("answer_step"),
        answer=meta.get("answer"),
        prompt_id=meta["prompt_id"],
        attention=_read_blob(attn_path, shape),
        gradients=_read_blob(grad_path, shape),
    )
    record.validate_shapes()
    return record


def validate_dump(record: DumpRecord) -> list[str]:
    """Quality diagnostics for an imported dump; an empty list means clean.

    Tolerances are sized for float32 imports: attention rows should sum to
    1 within 1e-4 and the region above the causal diagonal should be zero
    within 1e-6.
    """
    diagnostics: list[str] = []
    if not np.all(np.isfinite(record.attention)):
        diagnostics.append("attention tensor contains non-finite entries")
    if not np.all(np.isfinite(record.gradients)):
        diagnostics.append("gradient tensor contains non-finite entries")
    if not diagnostics:
        row_sums = record.attention.sum(axis=-1)
        worst = float(np.abs(row_sums - 1.0).max())
        if worst > 1e-4:
            diagnostics.append(f"attention rows deviate from stochasticity by up to {worst:.3e}")
        upper = np.triu_indices(record.seq_len, k=1)
        worst_mask = float(np.abs(record.attention[:, :, upper[0], upper[1]]).max()) if record.seq_len > 1 else 0.0
        if worst_mask > 1e-6:
            diagnostics.append(f"attention above the causal diagonal reaches {worst_mask:.3e}")
    try:
        record.spans.validate(record.seq_len)
    except ValueError as exc:
        diagnostics.append(f"span ordering: {exc}")
    return diagnostics
