"""Command-line entry point.

Subcommands:

* ``toy``       - run one toy instance and write its capture dump + report;
* ``report``    - analyze a dump: flow grid, layer profile, head maps, heatmap;
* ``select``    - run a selection strategy over a batch manifest;
* ``calibrate`` - fit the acceptance threshold(s) from labeled runs.

Exit codes: 0 success, 1 partial failures recorded, 2 invalid invocation
or input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import dumpio, reports
from .pipeline import (
    DEFAULT_FORMAT_TEXT,
    flows_from_dump,
    make_dump_evaluator,
    make_toy_evaluator,
    run_toy_instance,
)
from .saliency import SaliencyCapture, mean_matrix
from .segmentation import AnswerStyle
from .selection import (
    DEFAULT_PROMPTS,
    IapConfig,
    PromptCandidate,
    calibrate_region_thresholds,
    calibrate_threshold,
    prompt_by_id,
    region_means,
    run_strategy,
    synthesized_score,
)
from .toylm import ModelConfig, init_weights

CONFIG_ENV_VAR = "IAPFLOW_CONFIG"

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Invalid invocation or input; maps to exit code 2."""


def _fail(message: str):
    raise CliError(message)


def resolve_config_path(flag_value: str | None) -> str | None:
    """--config wins; otherwise the IAPFLOW_CONFIG environment variable."""
    return flag_value if flag_value is not None else os.environ.get(CONFIG_ENV_VAR)


def load_config(path: str | None) -> IapConfig:
    """Config file (JSON) -> IapConfig; a missing path means defaults."""
    if path is None:
        return IapConfig()
    p = Path(path)
    if not p.exists():
        _fail(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        _fail(f"config file {p} is not valid JSON: {exc}")
    kwargs: dict = {}
    if "lambdas" in raw:
        kwargs["lambdas"] = tuple(raw["lambdas"])
    for key in ("layers", "heads"):
        if key in raw:
            kwargs[key] = raw[key] if raw[key] == "all" else list(raw[key])
    if "threshold" in raw:
        kwargs["threshold"] = float(raw["threshold"])
    region_keys = [f"thresholds_{kind}" for kind in ("qp", "qr", "pr")]
    present = [k for k in region_keys if k in raw]
    if present and len(present) != 3:
        _fail(f"config must set all of {region_keys} or none (got {present})")
    if len(present) == 3:
        kwargs["region_thresholds"] = tuple(float(raw[k]) for k in region_keys)
    if "k" in raw:
        kwargs["k"] = int(raw["k"])
    if "strategy" in raw:
        kwargs["strategy"] = raw["strategy"]
    if "prompt_order" in raw:
        kwargs["prompt_order"] = list(raw["prompt_order"])
    try:
        return IapConfig(**kwargs)
    except ValueError as exc:
        _fail(f"invalid config: {exc}")


def _resolve_style(flag_value: str | None, config_path: str | None, manifest: dict) -> AnswerStyle:
    """Style priority: --style flag, then config file, then manifest."""
    if flag_value is not None:
        return AnswerStyle.from_flag(flag_value)
    if config_path is not None and Path(config_path).exists():
        raw = json.loads(Path(config_path).read_text(encoding="utf-8"))
        if "style" in raw:
            return AnswerStyle.from_flag(raw["style"])
    return AnswerStyle.from_flag(manifest.get("style", "numbers"))


def _resolve_prompt(text_or_id: str) -> PromptCandidate:
    if text_or_id.startswith("#"):
        try:
            return prompt_by_id(text_or_id)
        except KeyError:
            _fail(f"unknown prompt id {text_or_id!r}; defaults are #1..#9")
    for cand in DEFAULT_PROMPTS:
        if cand.text == text_or_id:
            return cand
    return PromptCandidate(id="custom", text=text_or_id, category="instructive")


def _toy_weights(args) -> tuple[ModelConfig, "object"]:
    config = ModelConfig(
        num_layers=args.layers,
        num_heads=args.heads,
        d_model=args.d_model,
        max_seq_len=args.max_seq_len,
        seed=args.seed,
    )
    return config, init_weights(config)


def cmd_toy(args) -> int:
    question_path = Path(args.question)
    if not question_path.exists():
        _fail(f"question file not found: {question_path}")
    question = question_path.read_text(encoding="utf-8").strip()
    if not question:
        _fail(f"question file {question_path} is empty")
    style = AnswerStyle.from_flag(args.style)
    prompt = _resolve_prompt(args.prompt)
    config, weights = _toy_weights(args)

    run = run_toy_instance(
        weights, question, prompt.text, style,
        max_new=args.max_new, format_text=args.format_text,
    )
    model_id = f"toy-L{config.num_layers}H{config.num_heads}d{config.d_model}-seed{config.seed}"
    dumpio.write_dump(run.to_dump_record(model_id, prompt.id), args.dump_out)

    report = reports.flow_report(
        run.flows,
        meta={
            "model_id": model_id,
            "prompt_id": prompt.id,
            "prompt_text": prompt.text,
            "style": style.value,
            "seq_len": int(len(run.tokens)),
            "generated_tokens": int(len(run.tokens) - run.input_len),
            "answer": run.answer,
            "answer_step": run.answer_step,
            "loss": run.loss,
        },
    )
    report_path = args.report or (str(args.dump_out) + ".report.json")
    reports.write_json(report, report_path)

    if not run.recognized:
        print(
            "warning: answer recognizer never fired; dump written without an answer step",
            file=sys.stderr,
        )
        return EXIT_PARTIAL
    print(f"recognized answer {run.answer!r} at token {run.answer_step}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        record = dumpio.read_dump(args.dump)
    except FileNotFoundError as exc:
        _fail(str(exc))
    except dumpio.DumpFormatError as exc:
        _fail(f"unreadable dump {args.dump}: {exc}")
    diagnostics = dumpio.validate_dump(record)
    for diag in diagnostics:
        print(f"diagnostic: {diag}", file=sys.stderr)

    grid = flows_from_dump(record)
    report = reports.flow_report(
        grid,
        meta={
            "dump": str(args.dump),
            "model_id": record.model_id,
            "prompt_id": record.prompt_id,
            "num_layers": record.num_layers,
            "num_heads": record.num_heads,
            "seq_len": record.seq_len,
            "answer": record.answer,
            "answer_step": record.answer_step,
            "diagnostics": diagnostics,
        },
    )
    reports.write_json(report, args.out)

    if args.heatmap:
        sal = SaliencyCapture(np.abs(record.attention * record.gradients), record.seq_len)
        reports.write_matrix_csv(mean_matrix(sal), args.heatmap)
    if args.head_maps:
        if grid is None:
            print("diagnostic: no flows available, skipping head maps", file=sys.stderr)
        else:
            reports.write_head_map_csvs(grid, args.head_maps)
    return EXIT_PARTIAL if diagnostics else EXIT_OK


def _load_manifest(path: str) -> dict:
    p = Path(path)
    if not p.exists():
        _fail(f"manifest not found: {p}")
    try:
        manifest = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        _fail(f"manifest {p} is not valid JSON: {exc}")
    questions = manifest.get("questions", [])
    if not questions:
        _fail(f"manifest {p} lists no questions")
    seen = set()
    for q in questions:
        if "id" not in q:
            _fail("every manifest question needs an id")
        if q["id"] in seen:
            _fail(f"duplicate question id {q['id']!r} in manifest")
        seen.add(q["id"])
        if ("text" in q) == ("dumps" in q):
            _fail(f"question {q['id']!r} must carry exactly one of 'text' or 'dumps'")
    return manifest


def _manifest_prompts(manifest: dict) -> tuple[PromptCandidate, ...]:
    if "prompts" not in manifest:
        return DEFAULT_PROMPTS
    return tuple(
        PromptCandidate(p["id"], p["text"], p.get("category", "instructive"))
        for p in manifest["prompts"]
    )


def _build_evaluators(manifest: dict, style: AnswerStyle, args):
    """Per-question evaluator and candidate list from a manifest."""
    text_questions = {q["id"]: q["text"] for q in manifest["questions"] if "text" in q}
    dump_questions = {q["id"]: q["dumps"] for q in manifest["questions"] if "dumps" in q}
    prompts = _manifest_prompts(manifest)
    toy_eval = None
    if text_questions:
        _, weights = _toy_weights(args)
        toy_eval = make_toy_evaluator(weights, text_questions, style, max_new=args.max_new)
    dump_eval = make_dump_evaluator(dump_questions) if dump_questions else None

    def evaluator_for(question_id: str):
        if question_id in text_questions:
            return toy_eval, prompts
        available = dump_questions[question_id]
        cands = tuple(p for p in prompts if p.id in available)
        if not cands:
            raise KeyError(f"question {question_id} references no known prompt ids")
        return dump_eval, cands

    return evaluator_for, prompts


def cmd_select(args) -> int:
    manifest = _load_manifest(args.manifest)
    config_path = resolve_config_path(args.config)
    config = load_config(config_path)
    strategy = args.strategy or config.strategy
    style = _resolve_style(args.style, config_path, manifest)
    evaluator_for, prompts = _build_evaluators(manifest, style, args)

    lines: list[dict] = []
    correct = 0
    with_gold = 0
    failures = 0
    total_inferences = 0
    total_generated = 0
    per_prompt_hits: dict[str, list[int]] = {p.id: [0, 0] for p in prompts}
    started = time.perf_counter()

    for q in manifest["questions"]:
        qid = q["id"]
        gold = q.get("gold")
        try:
            evaluator, cands = evaluator_for(qid)
            selection, records = run_strategy(strategy, qid, cands, evaluator, config)
        except Exception as exc:  # noqa: BLE001 - recorded, run continues
            failures += 1
            lines.append({"question_id": qid, "error": str(exc)})
            continue
        total_inferences += selection.candidates_run
        for record in records:
            total_generated += record.generated_tokens
            if gold is not None and record.answer is not None:
                tally = per_prompt_hits[record.prompt_id]
                tally[0] += int(record.answer == gold)
                tally[1] += 1
            elif gold is not None:
                per_prompt_hits[record.prompt_id][1] += 1
        is_correct = None
        if gold is not None:
            with_gold += 1
            is_correct = selection.final_answer == gold
            correct += int(is_correct)
        lines.append(
            {
                "question_id": qid,
                "strategy": strategy,
                "chosen_prompts": selection.chosen_prompt_ids,
                "answer": selection.final_answer,
                "gold": gold,
                "correct": is_correct,
                "scores": selection.scores,
                "candidates_run": selection.candidates_run,
                "diagnostics": selection.diagnostics,
            }
        )

    wall = time.perf_counter() - started
    accuracy = correct / with_gold if with_gold else None
    single_prompt_accuracy = {
        pid: (hits / seen if seen else None) for pid, (hits, seen) in per_prompt_hits.items()
    }
    summary = {
        "summary": {
            "strategy": strategy,
            "questions": len(manifest["questions"]),
            "failures": failures,
            "accuracy": accuracy,
            "single_prompt_accuracy": single_prompt_accuracy,
            "total_inferences": total_inferences,
            "total_generated_tokens": total_generated,
            "wall_time_s": wall,
        }
    }
    lines.append(summary)
    with open(args.out, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(json.dumps(line, sort_keys=True) + "\n")
    if accuracy is not None:
        print(f"{strategy}: accuracy {accuracy:.4f} over {with_gold} questions")
        for pid in sorted(single_prompt_accuracy):
            acc = single_prompt_accuracy[pid]
            if acc is not None:
                print(f"  prompt {pid}: single-prompt accuracy {acc:.4f}")
    print(f"{strategy}: {total_inferences} inference calls, {wall:.2f}s")
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_calibrate(args) -> int:
    manifest = _load_manifest(args.train_manifest)
    config_path = resolve_config_path(args.config)
    config = load_config(config_path)
    style = _resolve_style(None, config_path, manifest)
    evaluator_for, _ = _build_evaluators(manifest, style, args)

    labeled_scores: list[tuple[float, bool]] = []
    labeled_means: list[tuple[tuple[float, float, float], bool]] = []
    skipped = 0
    for q in manifest["questions"]:
        if "gold" not in q:
            _fail(f"calibration needs gold answers; question {q['id']!r} has none")
        evaluator, cands = evaluator_for(q["id"])
        for cand in cands:
            try:
                record = evaluator(q["id"], cand)
            except Exception:  # noqa: BLE001
                skipped += 1
                continue
            good = record.answer is not None and record.answer == q["gold"]
            if record.flows is None:
                skipped += 1
                continue
            labeled_scores.append((synthesized_score(record.flows, config), good))
            labeled_means.append((region_means(record.flows, config), good))
    if skipped:
        print(f"skipped {skipped} runs without usable flows", file=sys.stderr)
    try:
        if args.mode == "triple":
            qp, qr, pr = calibrate_region_thresholds(labeled_means)
            payload = {"thresholds_qp": qp, "thresholds_qr": qr, "thresholds_pr": pr}
        else:
            payload = {"threshold": calibrate_threshold(labeled_scores)}
    except ValueError as exc:
        _fail(f"calibration impossible: {exc}")
    payload["records"] = len(labeled_scores)
    reports.write_json(payload, args.out)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK


def _add_toy_model_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="weight initialization seed")
    parser.add_argument("--layers", type=int, default=2, help="toy model layer count")
    parser.add_argument("--heads", type=int, default=2, help="toy model head count")
    parser.add_argument("--d-model", type=int, default=32, dest="d_model")
    parser.add_argument("--max-seq-len", type=int, default=256, dest="max_seq_len")
    parser.add_argument("--max-new", type=int, default=64, dest="max_new")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="iapflow",
        description="Attention-gradient saliency flows and instance-adaptive prompt selection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_toy = sub.add_parser("toy", help="run one toy instance and dump its captures")
    p_toy.add_argument("--question", required=True, help="path to a file holding the question text")
    p_toy.add_argument("--prompt", required=True, help="prompt text or a default id (#1..#9)")
    p_toy.add_argument("--style", default="numbers", choices=["numbers", "choices", "yn"])
    p_toy.add_argument("--dump-out", required=True, dest="dump_out", help="dump base path")
    p_toy.add_argument("--report", default=None, help="report JSON path (default <dump-out>.report.json)")
    p_toy.add_argument("--format-text", default=DEFAULT_FORMAT_TEXT, dest="format_text")
    _add_toy_model_flags(p_toy)
    p_toy.set_defaults(func=cmd_toy)

    p_report = sub.add_parser("report", help="analyze a capture dump")
    p_report.add_argument("--dump", required=True, help="dump base path")
    p_report.add_argument("--out", required=True, help="report JSON path")
    p_report.add_argument("--heatmap", default=None, help="mean saliency matrix CSV path")
    p_report.add_argument("--head-maps", default=None, dest="head_maps", help="head map CSV prefix")
    p_report.set_defaults(func=cmd_report)

    p_select = sub.add_parser("select", help="run a selection strategy over a manifest")
    p_select.add_argument("--manifest", required=True)
    p_select.add_argument("--config", default=None, help=f"config JSON (default ${CONFIG_ENV_VAR})")
    p_select.add_argument("--strategy", default=None, choices=["ss", "mv", "amv"])
    p_select.add_argument("--out", required=True, help="results JSONL path")
    p_select.add_argument("--style", default=None, choices=["numbers", "choices", "yn"])
    _add_toy_model_flags(p_select)
    p_select.set_defaults(func=cmd_select)

    p_cal = sub.add_parser("calibrate", help="fit acceptance thresholds from labeled runs")
    p_cal.add_argument("--train-manifest", required=True, dest="train_manifest")
    p_cal.add_argument("--out", required=True, help="threshold JSON path")
    p_cal.add_argument("--config", default=None)
    p_cal.add_argument("--mode", default="single", choices=["single", "triple"])
    _add_toy_model_flags(p_cal)
    p_cal.set_defaults(func=cmd_calibrate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
