"""Version-1 capture-dump writer.

Wire contract: ``<base>.meta.json`` with the run metadata, plus
``<base>.attn.bin`` and ``<base>.grad.bin`` each holding the magic
``IAPD``, a little-endian u32 version, and little-endian float32 values
in row-major [layer][head][row][col] order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

DUMP_MAGIC = b"IAPD"
DUMP_VERSION = 1


def _write_blob(path: Path, tensor: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sI", DUMP_MAGIC, DUMP_VERSION))
        fh.write(np.ascontiguousarray(tensor, dtype="<f4").tobytes())


def write_dump(
    base_path: str | Path,
    *,
    model_id: str,
    tokens: list[str],
    spans: dict,
    answer_step: int | None,
    answer: str | None,
    prompt_id: str,
    attention: np.ndarray,
    gradients: np.ndarray,
) -> None:
    if attention.shape != gradients.shape or attention.ndim != 4:
        raise ValueError(f"tensor shapes disagree: {attention.shape} vs {gradients.shape}")
    L, H, T, T2 = attention.shape
    if T != T2 or len(tokens) != T:
        raise ValueError("token list and tensor sizes disagree")
    if not (np.all(np.isfinite(attention)) and np.all(np.isfinite(gradients))):
        raise ValueError("refusing to write non-finite tensors")
    base = Path(base_path)
    meta = {
        "format": "iap-capture-dump",
        "version": DUMP_VERSION,
        "model_id": model_id,
        "num_layers": L,
        "num_heads": H,
        "seq_len": T,
        "tokens": tokens,
        "spans": spans,
        "answer_step": answer_step,
        "answer": answer,
        "prompt_id": prompt_id,
        "dtype": "float32",
        "layout": "layer,head,query_row,key_col",
    }
    base.with_name(base.name + ".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_blob(base.with_name(base.name + ".attn.bin"), attention)
    _write_blob(base.with_name(base.name + ".grad.bin"), gradients)
