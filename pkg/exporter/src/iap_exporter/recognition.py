"""Answer-step recognition, mirroring the analysis side's wire behavior.

The three pattern families and the streaming firing rule must match what
the consumer of the dumps implements, so they are restated here rather
than imported across the package boundary.
"""

from __future__ import annotations

import re
from typing import NamedTuple

PATTERNS = {
    "numbers": re.compile(r"(?:Therefore, the )?answer is:? ([0-9][0-9,]*(?:\.[0-9]+)?)[,.]"),
    "choices": re.compile(r"(?:Therefore, the )?(?:answer|choice) is:? ([A-Za-z])[,.]"),
    "yn": re.compile(r"(?:Therefore, the )?answer is (Yes|No)[,.]"),
}


class Recognition(NamedTuple):
    answer: str
    match_span: tuple[int, int]
    answer_span: tuple[int, int]


def recognize(text: str, style: str) -> Recognition | None:
    """First firing under streaming semantics: the shortest prefix of the
    text that contains a complete match decides the answer."""
    pattern = PATTERNS[style]
    if pattern.search(text) is None:
        return None
    lo, hi = 1, len(text)
    first = None
    while lo <= hi:
        mid = (lo + hi) // 2
        m = pattern.search(text[:mid])
        if m is not None:
            first = m
            hi = mid - 1
        else:
            lo = mid + 1
    assert first is not None
    return Recognition(first.group(1), first.span(), first.span(1))
