"""Envelope contract tests, including agreement with the engine's parser."""

from __future__ import annotations

import json
import random
import subprocess
import sys
from pathlib import Path

import solver_runner.harness
from solver_runner.harness import SENTINEL, execute_candidate

HARNESS_PATH = Path(solver_runner.harness.__file__)


def run_harness(tmp_path: Path, code: str, name: str = "cand.py") -> tuple[subprocess.CompletedProcess, dict | None]:
    script = tmp_path / name
    script.write_text(code, encoding="utf-8")
    proc = subprocess.run(
        [sys.executable, str(HARNESS_PATH), str(script)],
        capture_output=True,
        text=True,
        timeout=60,
    )
    envelope = None
    lines = proc.stdout.splitlines()
    if lines and lines[-1].startswith(SENTINEL):
        envelope = json.loads(lines[-1][len(SENTINEL):])
    return proc, envelope


class TestStatusFixtures:
    def test_ok(self, tmp_path):
        proc, envelope = run_harness(tmp_path, "print('OBJECTIVE_VALUE:', 42.0)")
        assert proc.returncode == 0
        assert envelope is not None
        assert envelope["status"] == "ok"
        assert envelope["objective"] == 42.0
        assert "OBJECTIVE_VALUE: 42.0" in envelope["stdout"]

    def test_exception(self, tmp_path):
        proc, envelope = run_harness(tmp_path, "raise NameError('model is not defined')")
        assert proc.returncode == 0  # envelope emitted despite the failure
        assert envelope["status"] == "exception"
        assert envelope["objective"] is None
        assert "NameError" in envelope["traceback"]

    def test_no_objective(self, tmp_path):
        proc, envelope = run_harness(tmp_path, "print('solver finished quietly')")
        assert proc.returncode == 0
        assert envelope["status"] == "no_objective"
        assert envelope["objective"] is None


class TestEnvelopeRobustness:
    def test_candidate_output_cannot_corrupt_envelope(self, tmp_path):
        # The candidate tries to impersonate the sentinel and prints garbage;
        # all of it is captured, so the harness's final line stays parseable.
        code = (
            f"print({SENTINEL!r} + 'not json')\n"
            "print('\\x00\\x01 binary-ish garbage \\udcff'.encode('utf-8', 'replace'))\n"
            "print('OBJECTIVE_VALUE:', 7.5)\n"
        )
        proc, envelope = run_harness(tmp_path, code)
        assert proc.returncode == 0
        assert envelope is not None
        assert envelope["status"] == "ok"
        assert envelope["objective"] == 7.5
        assert SENTINEL in envelope["stdout"]  # impersonation stayed captured

    def test_clean_sys_exit_is_ok(self, tmp_path):
        code = "import sys\nprint('OBJECTIVE_VALUE:', 9.0)\nsys.exit(0)"
        _, envelope = run_harness(tmp_path, code)
        assert envelope["status"] == "ok"
        assert envelope["objective"] == 9.0

    def test_nonzero_sys_exit_is_exception(self, tmp_path):
        _, envelope = run_harness(tmp_path, "import sys\nsys.exit(3)")
        assert envelope["status"] == "exception"
        assert "SystemExit" in envelope["traceback"]

    def test_syntax_error_is_exception(self, tmp_path):
        _, envelope = run_harness(tmp_path, "def broken(:\n    pass")
        assert envelope["status"] == "exception"
        assert "SyntaxError" in envelope["traceback"]

    def test_stderr_captured(self, tmp_path):
        code = "import sys\nprint('warning: big-M untightened', file=sys.stderr)"
        _, envelope = run_harness(tmp_path, code)
        assert "big-M" in envelope["stderr"]

    def test_nonfinite_objective_is_no_objective(self, tmp_path):
        _, envelope = run_harness(tmp_path, "print('OBJECTIVE_VALUE:', float('inf'))")
        assert envelope["status"] == "no_objective"
        assert envelope["objective"] is None

    def test_missing_file_is_harness_failure(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, str(HARNESS_PATH), str(tmp_path / "nope.py")],
            capture_output=True,
            text=True,
        )
        assert proc.returncode != 0
        assert SENTINEL not in proc.stdout

    def test_bad_usage_exits_2(self):
        proc = subprocess.run(
            [sys.executable, str(HARNESS_PATH)], capture_output=True, text=True
        )
        assert proc.returncode == 2

    def test_in_process_api_matches_subprocess(self, tmp_path):
        script = tmp_path / "c.py"
        script.write_text("print('OBJECTIVE_VALUE:', 3.25)", encoding="utf-8")
        envelope = execute_candidate(str(script))
        assert envelope["status"] == "ok"
        assert envelope["objective"] == 3.25


def _random_marker_script(rng: random.Random) -> str:
    lines = []
    for _ in range(rng.randrange(1, 6)):
        roll = rng.random()
        if roll < 0.45:
            value = rng.choice(
                [
                    repr(rng.uniform(-1e6, 1e6)),
                    str(rng.randrange(-10_000, 10_000)),
                    f"{rng.uniform(-10, 10):.3e}",
                ]
            )
            lines.append(f"print('OBJECTIVE_VALUE:', {value})")
        elif roll < 0.55:
            token = rng.choice(['"inf"', '"nan"'])
            lines.append(f"print('OBJECTIVE_VALUE:', float({token}))")
        elif roll < 0.65:
            lines.append("print('OBJECTIVE_VALUE: not-a-number')")
        else:
            lines.append(f"print('solver log line {rng.randrange(100)}')")
    return "\n".join(lines)


class TestAgreementWithEngineParser:
    def test_objective_agrees_on_100_generated_scripts(self, tmp_path):
        # The engine-side parser is the independent reference here: for any
        # marker-printing script, the harness's extracted objective must
        # equal what the engine would scrape from the same captured stdout.
        from agora.executor import parse_objective as engine_parse

        rng = random.Random(31337)
        for i in range(100):
            script = tmp_path / f"gen_{i}.py"
            script.write_text(_random_marker_script(rng), encoding="utf-8")
            envelope = execute_candidate(str(script))
            expected = engine_parse(envelope["stdout"])
            assert envelope["objective"] == expected, script.read_text()
            if expected is None:
                assert envelope["status"] in ("no_objective", "exception")
            else:
                assert envelope["status"] == "ok"

    def test_engine_integration_through_executor(self, tmp_path):
        from agora.executor import Executor, ExecutorConfig

        executor = Executor(
            ExecutorConfig(
                timeout_seconds=30.0,
                use_runner_harness=True,
                runner_path=str(HARNESS_PATH),
            )
        )
        objective, feedback = executor.run_code("print('OBJECTIVE_VALUE:', 68.06)")
        assert objective == 68.06
        assert feedback.status == "solved"

        objective, feedback = executor.run_code("raise ValueError('infeasible')")
        assert objective is None
        assert feedback.status == "runtime_error"
        assert "infeasible" in feedback.stderr

        objective, feedback = executor.run_code("print('quiet')")
        assert objective is None
        assert feedback.status == "no_objective"
