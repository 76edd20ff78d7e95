"""exporter command line: capture one run and write its dump."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .capture import capture_run
from .models import load_model
from .prompts import resolve_prompt


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exporter",
        description="Capture attention probabilities and loss gradients from a causal LM run",
    )
    parser.add_argument("--model", required=True,
                        help="model id, or tiny-gpt2[:seed] for the offline byte-level model")
    parser.add_argument("--question", required=True, help="path to a file holding the question")
    parser.add_argument("--prompt", required=True, help="prompt text or #1..#9")
    parser.add_argument("--style", default="numbers", choices=["numbers", "choices", "yn"])
    parser.add_argument("--out", required=True, help="dump base path")
    parser.add_argument("--max-new", type=int, default=64, dest="max_new")
    parser.add_argument("--format-text", default="\nAnswer: ", dest="format_text")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    question_path = Path(args.question)
    if not question_path.exists():
        print(f"error: question file not found: {question_path}", file=sys.stderr)
        return 2
    question = question_path.read_text(encoding="utf-8").strip()
    if not question:
        print(f"error: question file {question_path} is empty", file=sys.stderr)
        return 2
    prompt_id, prompt_text = resolve_prompt(args.prompt)
    try:
        model, tokenizer, model_id = load_model(args.model)
    except Exception as exc:  # noqa: BLE001 - loader errors are user input errors
        print(f"error: cannot load model {args.model!r}: {exc}", file=sys.stderr)
        return 2

    result = capture_run(
        model, tokenizer, model_id, question, prompt_text, args.style,
        max_new=args.max_new, format_text=args.format_text,
    )
    result.write(args.out, prompt_id)
    if not result.fired:
        print(
            "warning: answer recognizer never fired; dump written without an answer step",
            file=sys.stderr,
        )
        return 1
    print(f"recognized answer {result.answer!r} at token {result.answer_step}; loss {result.loss:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
