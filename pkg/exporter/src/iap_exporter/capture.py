"""Capture one zero-shot CoT run from a decoder-only language model.

The run decodes greedily until the answer recognizer fires (or the budget
ends), then replays the final sequence once in teacher-forced mode with
forward hooks on every attention module.  The hooks retain gradients on
the post-softmax attention probability tensors, a single backward call
from the answer-span cross-entropy fills them, and both tensors are
written as a version-1 dump.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .dumpfmt import write_dump
from .recognition import Recognition, recognize


@dataclass
class CaptureResult:
    model_id: str
    token_ids: list[int]
    token_strings: list[str]
    spans: dict
    answer_step: int | None
    answer: str | None
    loss: float | None
    attention: np.ndarray
    gradients: np.ndarray
    generated_text: str

    @property
    def fired(self) -> bool:
        return self.answer_step is not None

    def write(self, base_path, prompt_id: str) -> None:
        write_dump(
            base_path,
            model_id=self.model_id,
            tokens=self.token_strings,
            spans=self.spans,
            answer_step=self.answer_step,
            answer=self.answer,
            prompt_id=prompt_id,
            attention=self.attention,
            gradients=self.gradients,
        )


def attach_attention_hooks(model):
    """Forward hooks on every attention module, retaining gradients on the
    square probability tensor each one emits."""
    captured: list[tuple[str, torch.Tensor]] = []
    handles = []

    def make_hook(name):
        def hook(module, args, output):
            if not isinstance(output, tuple):
                return
            for item in reversed(output):
                if torch.is_tensor(item) and item.dim() == 4 and item.shape[-1] == item.shape[-2]:
                    if item.requires_grad:
                        item.retain_grad()
                    captured.append((name, item))
                    return

        return hook

    for name, module in model.named_modules():
        if type(module).__name__.endswith("Attention"):
            handles.append(module.register_forward_hook(make_hook(name)))
    return captured, handles


def _normalize(answer: str, style: str) -> str:
    if style == "numbers":
        return answer.replace(",", "")
    if style == "choices":
        return answer.upper()
    return answer


def _max_positions(model) -> int:
    config = model.config
    for attr in ("n_positions", "max_position_embeddings"):
        if getattr(config, attr, None):
            return int(getattr(config, attr))
    return 4096


def _greedy_decode(model, tokenizer, input_ids: list[int], style: str, max_new: int):
    ids = list(input_ids)
    generated: list[int] = []
    hit: Recognition | None = None
    limit = _max_positions(model)
    with torch.no_grad():
        for _ in range(max_new):
            if len(ids) >= limit:
                break
            logits = model(torch.tensor([ids])).logits
            next_id = int(torch.argmax(logits[0, -1]))
            ids.append(next_id)
            generated.append(next_id)
            hit = recognize(tokenizer.decode(generated), style)
            if hit is not None:
                break
    return generated, hit


def _char_to_token(prefix_lens: list[int], char_index: int) -> int:
    """Index of the token covering a character of the decoded text."""
    for i in range(len(prefix_lens) - 1):
        if prefix_lens[i + 1] > char_index:
            return i
    raise ValueError(f"character {char_index} beyond decoded text")


def capture_run(
    model,
    tokenizer,
    model_id: str,
    question: str,
    prompt_text: str,
    style: str,
    max_new: int = 64,
    format_text: str = "\nAnswer: ",
) -> CaptureResult:
    """Decode, recognize, backpropagate, and assemble the capture."""
    q_ids = tokenizer.encode_piece(question)
    f_ids = tokenizer.encode_piece(format_text)
    p_ids = tokenizer.encode_piece(prompt_text)
    if not (q_ids and f_ids and p_ids):
        raise ValueError("question, format, and prompt must each tokenize to at least one token")
    input_ids = q_ids + f_ids + p_ids
    input_len = len(input_ids)
    spans = {
        "question": [0, len(q_ids) - 1],
        "prompt": [len(q_ids) + len(f_ids), input_len - 1],
        "rationale_start": input_len,
        "rationale_end": None,
        "answer_step": None,
    }

    generated, hit = _greedy_decode(model, tokenizer, input_ids, style, max_new)

    answer_step = None
    answer = None
    answer_token_span = None
    if hit is not None:
        # map character positions of the match back to generated tokens;
        # the answer step is the last token whose text completes the match
        prefix_lens = [len(tokenizer.decode(generated[:i])) for i in range(len(generated) + 1)]
        step_rel = _char_to_token(prefix_lens, hit.match_span[1] - 1)
        answer_step = input_len + step_rel
        generated = generated[: step_rel + 1]
        answer_token_span = (
            input_len + _char_to_token(prefix_lens, hit.answer_span[0]),
            input_len + _char_to_token(prefix_lens, hit.answer_span[1] - 1),
        )
        answer = _normalize(hit.answer, style)
        spans["rationale_end"] = answer_step
        spans["answer_step"] = answer_step

    full_ids = input_ids + generated

    captured, handles = attach_attention_hooks(model)
    try:
        outputs = model(torch.tensor([full_ids]), output_attentions=True)
    finally:
        for handle in handles:
            handle.remove()
    num_layers = int(model.config.num_hidden_layers)
    if len(captured) != num_layers:
        raise RuntimeError(
            f"attention hooks captured {len(captured)} probability tensors for "
            f"{num_layers} layers; hooked modules: {[n for n, _ in captured]}"
        )

    loss_value = None
    if answer_token_span is not None:
        start, end = answer_token_span
        targets = torch.tensor(full_ids[start : end + 1])
        loss = torch.nn.functional.cross_entropy(
            outputs.logits[0, start - 1 : end], targets, reduction="sum"
        )
        loss.backward()
        loss_value = float(loss.detach())
        for name, tensor in captured:
            if tensor.grad is None:
                raise RuntimeError(
                    f"attention module {name!r} did not retain a gradient on its "
                    "probability tensor; capture requires eager attention"
                )
        gradients = np.stack(
            [t.grad.detach().float().squeeze(0).numpy() for _, t in captured]
        ).astype(np.float32)
    else:
        gradients = np.zeros(
            (num_layers,) + tuple(captured[0][1].squeeze(0).shape), dtype=np.float32
        )

    attention = np.stack(
        [t.detach().float().squeeze(0).numpy() for _, t in captured]
    ).astype(np.float32)

    return CaptureResult(
        model_id=model_id,
        token_ids=full_ids,
        token_strings=tokenizer.token_strings(full_ids),
        spans=spans,
        answer_step=answer_step,
        answer=answer,
        loss=loss_value,
        attention=attention,
        gradients=gradients,
        generated_text=tokenizer.decode(generated),
    )
