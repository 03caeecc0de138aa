"""Sandboxed execution of candidate solver code.

Each run gets a fresh temp workspace and a hard wall-clock timeout; on
timeout the whole child process group is killed. The objective value is
scraped from stdout via the ``OBJECTIVE_VALUE:`` marker protocol, or taken
from the structured envelope when the runner harness is configured.
"""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass

logger = logging.getLogger(__name__)

OBJECTIVE_MARKER = "OBJECTIVE_VALUE:"
ENVELOPE_SENTINEL = "##AGORA_RESULT##"

# Seconds allowed between the timeout firing and the process tree being dead.
KILL_GRACE = 2.0


@dataclass(frozen=True)
class ExecutionFeedback:
    status: str  # solved | runtime_error | timeout | no_objective | launch_error
    stdout: str = ""
    stderr: str = ""
    exit_code: int | None = None
    wall_time: float = 0.0


@dataclass(frozen=True)
class ExecutorConfig:
    interpreter_argv: tuple[str, ...] = (sys.executable,)
    timeout_seconds: float = 120.0
    pool_size: int = 4
    use_runner_harness: bool = False
    runner_path: str | None = None

    def __post_init__(self) -> None:
        if self.timeout_seconds <= 0:
            raise ValueError("timeout_seconds must be positive")
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.use_runner_harness and not self.runner_path:
            raise ValueError("use_runner_harness requires runner_path")


def parse_objective(stdout: str) -> float | None:
    """Extract the objective from marker lines; ``None`` when absent.

    The last line that starts with the marker and carries a parseable
    numeric token wins (re-solves supersede earlier prints). A non-finite
    winner (inf/nan) is unusable and reported as not found.
    """
    value: float | None = None
    for line in stdout.splitlines():
        line = line.rstrip("\r")
        if not line.startswith(OBJECTIVE_MARKER):
            continue
        tokens = line[len(OBJECTIVE_MARKER):].split()
        if not tokens:
            continue
        try:
            value = float(tokens[0])
        except ValueError:
            continue
    if value is None or not math.isfinite(value):
        return None
    return value


class Executor:
    """Runs candidate scripts in child processes, at most ``pool_size`` at once."""

    def __init__(self, config: ExecutorConfig | None = None):
        self.config = config or ExecutorConfig()
        self._slots = threading.BoundedSemaphore(self.config.pool_size)

    def run_code(self, code: str, timeout: float | None = None) -> tuple[float | None, ExecutionFeedback]:
        if not code.strip():
            raise ValueError("code must be non-empty")
        limit = self.config.timeout_seconds if timeout is None else timeout
        with self._slots:
            return self._run_once(code, limit)

    def _run_once(self, code: str, limit: float) -> tuple[float | None, ExecutionFeedback]:
        workdir = tempfile.mkdtemp(prefix="agora-run-")
        try:
            script = os.path.join(workdir, "candidate.py")
            with open(script, "w", encoding="utf-8") as fh:
                fh.write(code)
            argv = list(self.config.interpreter_argv)
            if self.config.use_runner_harness:
                argv.append(str(self.config.runner_path))
            argv.append(script)

            start = time.monotonic()
            try:
                proc = subprocess.Popen(
                    argv,
                    cwd=workdir,
                    stdout=subprocess.PIPE,
                    stderr=subprocess.PIPE,
                    text=True,
                    errors="replace",
                    start_new_session=True,
                )
            except OSError as exc:
                feedback = ExecutionFeedback(
                    status="launch_error",
                    stderr=f"failed to launch interpreter {argv[0]!r}: {exc}",
                    wall_time=time.monotonic() - start,
                )
                return None, feedback

            timed_out = False
            try:
                out, err = proc.communicate(timeout=limit)
            except subprocess.TimeoutExpired:
                timed_out = True
                self._kill_tree(proc)
                try:
                    out, err = proc.communicate(timeout=KILL_GRACE)
                except subprocess.TimeoutExpired:
                    # A straggler forked during the kill still holds the pipe;
                    # abandon the stream rather than hang the engine.
                    for stream in (proc.stdout, proc.stderr):
                        if stream is not None:
                            stream.close()
                    out, err = "", ""
                    self._kill_tree(proc)
            wall = time.monotonic() - start
            # Tracebacks embed the per-run temp directory; rewrite it to a
            # stable token so feedback (and every prompt built from it) is
            # reproducible across runs and cassette record/replay.
            out = (out or "").replace(workdir, "<workspace>")
            err = (err or "").replace(workdir, "<workspace>")

            if timed_out:
                feedback = ExecutionFeedback(
                    status="timeout",
                    stdout=out,
                    stderr=err + f"\n[killed after {limit}s timeout]",
                    exit_code=proc.returncode,
                    wall_time=wall,
                )
                return None, feedback

            if self.config.use_runner_harness:
                return self._from_envelope(out, err, proc.returncode, wall)
            return self._from_streams(out, err, proc.returncode, wall)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)

    @staticmethod
    def _kill_tree(proc: subprocess.Popen) -> None:
        # start_new_session put the child in its own process group, so one
        # SIGKILL to the group covers the whole tree. A process forked
        # concurrently with the signal can miss the group snapshot and
        # survive, so sweep the group repeatedly until it is empty.
        for _ in range(5):
            try:
                os.killpg(proc.pid, signal.SIGKILL)
            except ProcessLookupError:
                return  # group empty: every member dead and reaped
            except PermissionError:
                proc.kill()
            try:
                proc.wait(timeout=KILL_GRACE)
            except subprocess.TimeoutExpired:
                continue
            # Leader reaped; give any racing fork a beat to land in the
            # group, then sweep again.
            time.sleep(0.02)
        try:
            os.killpg(proc.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass

    @staticmethod
    def _from_streams(out: str, err: str, exit_code: int, wall: float) -> tuple[float | None, ExecutionFeedback]:
        objective = parse_objective(out)
        if exit_code == 0 and objective is not None:
            status = "solved"
        elif exit_code != 0:
            status = "runtime_error"
            objective = None
        else:
            status = "no_objective"
            objective = None
        feedback = ExecutionFeedback(
            status=status, stdout=out, stderr=err, exit_code=exit_code, wall_time=wall
        )
        return objective, feedback

    @staticmethod
    def _from_envelope(out: str, err: str, exit_code: int, wall: float) -> tuple[float | None, ExecutionFeedback]:
        envelope = None
        if exit_code == 0:
            for line in reversed(out.splitlines()):
                if line.startswith(ENVELOPE_SENTINEL):
                    try:
                        envelope = json.loads(line[len(ENVELOPE_SENTINEL):])
                    except json.JSONDecodeError:
                        envelope = None
                    break
        if envelope is None:
            feedback = ExecutionFeedback(
                status="launch_error",
                stdout=out,
                stderr=err + "\n[runner harness produced no result envelope]",
                exit_code=exit_code,
                wall_time=wall,
            )
            return None, feedback

        cand_out = envelope.get("stdout", "")
        cand_err = envelope.get("stderr", "")
        traceback_text = envelope.get("traceback")
        if traceback_text and traceback_text not in cand_err:
            cand_err = cand_err + ("\n" if cand_err else "") + traceback_text
        status_map = {"ok": "solved", "exception": "runtime_error", "no_objective": "no_objective"}
        status = status_map.get(envelope.get("status"), "launch_error")
        objective = envelope.get("objective") if status == "solved" else None
        if status == "solved" and (objective is None or not math.isfinite(float(objective))):
            status, objective = "no_objective", None
        feedback = ExecutionFeedback(
            status=status,
            stdout=cand_out,
            stderr=cand_err,
            exit_code=0 if status != "runtime_error" else 1,
            wall_time=wall,
        )
        return (float(objective) if objective is not None else None), feedback
