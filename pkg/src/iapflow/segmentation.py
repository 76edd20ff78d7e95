"""Token-region layout and answer-step recognition.

A reasoning run is split into three token regions: the question, the
trigger prompt, and the generated rationale.  Format tokens (the template
glue between question and prompt, e.g. "Answer: ") belong to no region.
The rationale is open-ended until the answer recognizer fires; its end is
pinned to the answer step.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple


class AnswerStyle(Enum):
    """Which family of answer patterns the task uses."""

    NUMBERS = "numbers"
    CHOICES = "choices"
    YESNO = "yn"

    @classmethod
    def from_flag(cls, value: str) -> "AnswerStyle":
        for style in cls:
            if style.value == value:
                return style
        raise ValueError(f"unknown answer style {value!r} (expected numbers, choices, or yn)")


# Answer-step patterns, one per style.  Keywords are case-sensitive; the
# leading "Therefore, the " is optional, as is the colon after "is" for
# the numeric and letter-choice families.  Numbers allow thousands commas
# and a decimal part; the match must be closed by "," or ".".
_NUMBER_RE = re.compile(r"(?:Therefore, the )?answer is:? ([0-9][0-9,]*(?:\.[0-9]+)?)[,.]")
_CHOICE_RE = re.compile(r"(?:Therefore, the )?(?:answer|choice) is:? ([A-Za-z])[,.]")
_YESNO_RE = re.compile(r"(?:Therefore, the )?answer is (Yes|No)[,.]")

_PATTERNS = {
    AnswerStyle.NUMBERS: _NUMBER_RE,
    AnswerStyle.CHOICES: _CHOICE_RE,
    AnswerStyle.YESNO: _YESNO_RE,
}


def style_pattern(style: AnswerStyle) -> re.Pattern[str]:
    """The compiled answer-step regex for a style."""
    return _PATTERNS[style]


@dataclass(frozen=True)
class Spans:
    """Inclusive token index ranges for the three regions of one run.

    ``rationale_end`` and ``answer_step`` stay ``None`` until the answer
    recognizer has fired and :func:`finalize_spans` pinned them.
    """

    question: tuple[int, int]
    prompt: tuple[int, int]
    rationale_start: int
    rationale_end: int | None = None
    answer_step: int | None = None

    @property
    def rationale(self) -> tuple[int, int]:
        if self.rationale_end is None:
            raise ValueError("spans not finalized: rationale end unknown")
        return (self.rationale_start, self.rationale_end)

    @property
    def is_final(self) -> bool:
        return self.rationale_end is not None and self.answer_step is not None

    def validate(self, seq_len: int | None = None) -> None:
        """Check the region ordering invariants, raising ValueError on violation."""
        q_s, q_e = self.question
        p_s, p_e = self.prompt
        if not (0 <= q_s <= q_e < p_s <= p_e < self.rationale_start):
            raise ValueError(f"span ordering violated: {self}")
        if self.rationale_end is not None:
            if self.rationale_end < self.rationale_start:
                raise ValueError("rationale end precedes its start")
            if self.answer_step is None or self.answer_step < self.rationale_end:
                raise ValueError("answer step must be at or after the rationale end")
        if seq_len is not None:
            if self.answer_step is not None:
                if self.answer_step >= seq_len:
                    raise ValueError(f"spans exceed sequence length {seq_len}")
            elif self.rationale_start > seq_len:
                # partial spans may sit at the end of an input-only sequence
                raise ValueError(f"spans exceed sequence length {seq_len}")


def build_layout(question_token_count: int, format_token_count: int, prompt_token_count: int) -> Spans:
    """Lay out the input regions: question, then format tokens, then prompt.

    Format tokens are excluded from every region.  The rationale starts at
    the first generated position, right after the prompt; its end is filled
    in later by :func:`finalize_spans`.
    """
    q, f, p = question_token_count, format_token_count, prompt_token_count
    if q < 1 or f < 1 or p < 1:
        raise ValueError("question, format, and prompt must each span at least one token")
    return Spans(question=(0, q - 1), prompt=(q + f, q + f + p - 1), rationale_start=q + f + p)


def finalize_spans(partial: Spans, answer_step_token_index: int) -> Spans:
    """Pin the rationale end to the answer step, completing the spans."""
    if answer_step_token_index < partial.rationale_start:
        raise ValueError(
            f"answer step {answer_step_token_index} precedes rationale start {partial.rationale_start}"
        )
    spans = replace(partial, rationale_end=answer_step_token_index, answer_step=answer_step_token_index)
    spans.validate()
    return spans


class Recognition(NamedTuple):
    """One answer-step hit: the answer text, the full match's character
    range, and the answer group's character range (both ends exclusive)."""

    answer: str
    match_span: tuple[int, int]
    answer_span: tuple[int, int]


def recognize_answer_step(generated_text_so_far: str, style: AnswerStyle) -> Recognition | None:
    """First firing of the style's pattern under streaming semantics.

    The text is scanned as a growing character stream: the recognizer fires
    at the earliest character position where a complete match exists, and
    that match is final.  This makes recognition monotone under extension,
    matching what happens when generation is checked token by token and
    stopped at the first hit.
    """
    pattern = _PATTERNS[style]
    if pattern.search(generated_text_so_far) is None:
        return None
    # A match exists somewhere; binary-search the shortest prefix that
    # fires, so a later, greedier match never shadows the answer that
    # would have stopped generation.  Match existence is monotone in
    # prefix length.
    lo, hi = 1, len(generated_text_so_far)
    first = None
    while lo <= hi:
        mid = (lo + hi) // 2
        m = pattern.search(generated_text_so_far[:mid])
        if m is not None:
            first = m
            hi = mid - 1
        else:
            lo = mid + 1
    assert first is not None
    return Recognition(first.group(1), first.span(), first.span(1))


def normalize_answer(raw: str, style: AnswerStyle) -> str:
    """Canonical form of an extracted answer: commas stripped from numbers,
    letters uppercased."""
    if style is AnswerStyle.NUMBERS:
        return raw.replace(",", "")
    if style is AnswerStyle.CHOICES:
        return raw.upper()
    return raw


def extract_answer(full_text: str, style: AnswerStyle) -> str | None:
    """Last match of the style pattern in the full text, normalized."""
    last = None
    for m in _PATTERNS[style].finditer(full_text):
        last = m
    if last is None:
        return None
    return normalize_answer(last.group(1), style)
