"""Exporter integration: dumps validate cleanly on the analysis side and
flows agree with the in-process cross-check.

The analysis package is exercised only through its command line, which is
the wire contract for dump consumers.
"""

import json
import subprocess
import sys

import numpy as np
import pytest

from iap_exporter.capture import capture_run
from iap_exporter.crosscheck import flow_triples
from iap_exporter.models import ByteTokenizer, build_scripted_model, build_tiny_model
from iap_exporter.recognition import recognize

QUESTION = "Q: A pack has 3 crayons and Ann buys 4 packs. How many crayons?"
PROMPT = "Let's think step by step."
RATIONALE = " 4 packs of 3 crayons is 12 crayons. Therefore, the answer is 12."
FORMAT = "\nAnswer: "


def scripted_session(seed=5):
    tokenizer = ByteTokenizer()
    full_ids = tokenizer.encode_piece(QUESTION + FORMAT + PROMPT + RATIONALE)
    model = build_scripted_model(full_ids, seed=seed)
    return model, tokenizer


def run_analysis_report(dump_base, out_path):
    proc = subprocess.run(
        [sys.executable, "-m", "iapflow.cli", "report",
         "--dump", str(dump_base), "--out", str(out_path)],
        capture_output=True,
        text=True,
    )
    return proc


@pytest.fixture(scope="module")
def fired_capture():
    model, tokenizer = scripted_session()
    result = capture_run(
        model, tokenizer, "tiny-scripted", QUESTION, PROMPT, "numbers",
        max_new=len(RATIONALE) + 8, format_text=FORMAT,
    )
    assert result.fired, f"scripted decode did not fire: {result.generated_text!r}"
    return result


class TestCaptureRun:
    def test_decodes_the_scripted_rationale(self, fired_capture):
        assert fired_capture.answer == "12"
        assert fired_capture.generated_text.endswith("answer is 12.")
        assert fired_capture.loss is not None and np.isfinite(fired_capture.loss)

    def test_tensor_shapes_and_finiteness(self, fired_capture):
        L, H, T, T2 = fired_capture.attention.shape
        assert (L, H) == (2, 2) and T == T2 == len(fired_capture.token_ids)
        assert fired_capture.gradients.shape == fired_capture.attention.shape
        assert np.all(np.isfinite(fired_capture.attention))
        assert np.all(np.isfinite(fired_capture.gradients))
        assert fired_capture.gradients.any(), "backward produced all-zero gradients"

    def test_spans_cover_the_regions(self, fired_capture):
        spans = fired_capture.spans
        assert spans["question"][0] == 0
        assert spans["question"][1] < spans["prompt"][0]
        assert spans["prompt"][1] < spans["rationale_start"]
        assert spans["rationale_end"] == fired_capture.answer_step

    def test_unfired_run_still_captures_attention(self):
        model = build_tiny_model(seed=1)
        tokenizer = ByteTokenizer()
        result = capture_run(model, tokenizer, "tiny-gpt2:1", "what is 1+1?",
                             PROMPT, "numbers", max_new=5, format_text=FORMAT)
        assert not result.fired
        assert result.spans["answer_step"] is None
        np.testing.assert_array_equal(result.gradients, 0.0)
        assert np.all(result.attention.sum(-1) > 0.99)


class TestDumpIntegration:
    def test_dump_validates_cleanly_in_analysis_cli(self, fired_capture, tmp_path):
        base = tmp_path / "capture"
        fired_capture.write(base, "#1")
        proc = run_analysis_report(base, tmp_path / "report.json")
        assert proc.returncode == 0, proc.stderr
        assert "diagnostic" not in proc.stderr
        print("PASS integration: captured dump validates cleanly on the analysis side")

    def test_flows_match_in_process_cross_check(self, fired_capture, tmp_path):
        base = tmp_path / "capture"
        fired_capture.write(base, "#1")
        proc = run_analysis_report(base, tmp_path / "report.json")
        assert proc.returncode == 0, proc.stderr
        report = json.loads((tmp_path / "report.json").read_text())
        analyzed = np.asarray(report["per_head_flows"])
        reference = flow_triples(
            fired_capture.attention, fired_capture.gradients, fired_capture.spans
        )
        rel = np.abs(analyzed - reference) / np.maximum(np.abs(reference), 1e-300)
        assert rel.max() < 1e-5, f"max relative flow deviation {rel.max():.2e}"
        print(f"PASS integration: analysis flows within {rel.max():.2e} of the cross-check")

    def test_unfired_dump_reports_null_flows(self, tmp_path):
        model = build_tiny_model(seed=2)
        result = capture_run(model, ByteTokenizer(), "tiny-gpt2:2", "2+2?",
                             PROMPT, "numbers", max_new=4, format_text=FORMAT)
        base = tmp_path / "nofire"
        result.write(base, "#1")
        proc = run_analysis_report(base, tmp_path / "report.json")
        assert proc.returncode == 0, proc.stderr
        report = json.loads((tmp_path / "report.json").read_text())
        assert report["per_head_flows"] is None


class TestCli:
    def test_cli_round_trip(self, tmp_path):
        question = tmp_path / "q.txt"
        question.write_text("what is 5+5?")
        proc = subprocess.run(
            [sys.executable, "-m", "iap_exporter.cli",
             "--model", "tiny-gpt2:3",
             "--question", str(question),
             "--prompt", "#1",
             "--style", "numbers",
             "--out", str(tmp_path / "run"),
             "--max-new", "4"],
            capture_output=True,
            text=True,
        )
        # the random tiny model will not produce an answer: warning + exit 1
        assert proc.returncode in (0, 1), proc.stderr
        meta = json.loads((tmp_path / "run.meta.json").read_text())
        assert meta["prompt_id"] == "#1"
        assert meta["model_id"] == "tiny-gpt2:3"
        analysis = run_analysis_report(tmp_path / "run", tmp_path / "r.json")
        assert analysis.returncode == 0, analysis.stderr

    def test_missing_question_exits_2(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "iap_exporter.cli",
             "--model", "tiny-gpt2", "--question", str(tmp_path / "none.txt"),
             "--prompt", "#1", "--out", str(tmp_path / "run")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2


class TestRecognitionMirror:
    def test_families_match_expected_forms(self):
        assert recognize("Therefore, the answer is: 42.", "numbers").answer == "42"
        assert recognize("The choice is B.", "choices").answer == "B"
        assert recognize("Therefore, the answer is Yes.", "yn").answer == "Yes"
        assert recognize("the answer is maybe.", "numbers") is None


class PairTokenizer(ByteTokenizer):
    """Byte tokenizer whose ids each decode to two characters, standing in
    for a real tokenizer's many-chars-per-token mapping."""

    def encode_piece(self, text):
        if len(text) % 2:
            text += " "
        raw = super().encode_piece(text)
        return [raw[i] * 256 + raw[i + 1] for i in range(0, len(raw), 2)]

    def decode(self, ids):
        flat = []
        for i in ids:
            flat.extend(divmod(i, 256))
        return super().decode(flat)

    def token_strings(self, ids):
        return [self.decode([i]) for i in ids]


class TestMultiCharTokenMapping:
    def test_answer_step_is_last_token_completing_the_match(self):
        from iap_exporter.capture import _char_to_token

        tokenizer = PairTokenizer()
        generated = tokenizer.encode_piece("x answer is 12.!")
        text = tokenizer.decode(generated)
        hit = recognize(text, "numbers")
        assert hit is not None and hit.answer == "12"
        prefix_lens = [len(tokenizer.decode(generated[:i])) for i in range(len(generated) + 1)]
        step = _char_to_token(prefix_lens, hit.match_span[1] - 1)
        # the match ends at the "." whose token also carries the "!"
        assert tokenizer.decode(generated[: step + 1]).endswith(".!")
        answer_tokens = (
            _char_to_token(prefix_lens, hit.answer_span[0]),
            _char_to_token(prefix_lens, hit.answer_span[1] - 1),
        )
        assert "12" in tokenizer.decode(generated[answer_tokens[0] : answer_tokens[1] + 1])
