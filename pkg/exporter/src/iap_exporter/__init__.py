"""Capture attention probabilities and their loss gradients from
decoder-only language models into version-1 analysis dumps."""

from .capture import CaptureResult, attach_attention_hooks, capture_run
from .crosscheck import flow_triples, region_mean
from .models import ByteTokenizer, build_scripted_model, build_tiny_model, load_model
from .prompts import DEFAULT_PROMPTS, resolve_prompt
from .recognition import Recognition, recognize

__version__ = "0.1.0"
