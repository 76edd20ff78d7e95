"""The nine candidate trigger prompts, addressable as #1..#9."""

DEFAULT_PROMPTS = {
    "#1": "Let's think step by step.",
    "#2": "First,",
    "#3": "The answer is after the proof.",
    "#4": "Before we dive into the answer,",
    "#5": "Let's solve this problem by splitting it into steps.",
    "#6": "Let's think about this logically.",
    "#7": "It's a beautiful day.",
    "#8": "Don't think. Just feel.",
    "#9": "By the fact that the earth is round,",
}


def resolve_prompt(text_or_id: str) -> tuple[str, str]:
    """Return (prompt_id, prompt_text) for an id like "#3" or literal text."""
    if text_or_id in DEFAULT_PROMPTS:
        return text_or_id, DEFAULT_PROMPTS[text_or_id]
    for pid, text in DEFAULT_PROMPTS.items():
        if text == text_or_id:
            return pid, text
    return "custom", text_or_id
