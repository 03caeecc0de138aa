"""Run one candidate solver script and emit a structured result envelope.

Invocation: ``python harness.py <code_file>`` (or ``python -m solver_runner``).
The candidate executes in a fresh namespace with its stdout/stderr redirected
into capture buffers, so nothing it prints can reach the harness's own
stdout. The last line the harness prints is always the envelope: one JSON
object prefixed with the ``##AGORA_RESULT##`` sentinel.

Exit code is 0 whenever an envelope was emitted, whatever the candidate did;
a nonzero exit means the harness itself failed (unreadable file, bad usage)
and the caller should treat the run as a launch error. Timeouts are the
caller's job: this process never self-limits, so there is exactly one kill
authority.

This file is deliberately self-contained (stdlib only, no package imports)
so it can be invoked by path from any interpreter.
"""

from __future__ import annotations

import io
import json
import math
import sys
import time
import traceback

SENTINEL = "##AGORA_RESULT##"
OBJECTIVE_MARKER = "OBJECTIVE_VALUE:"


def parse_objective(stdout: str) -> float | None:
    """Last marker line wins; a non-finite winner counts as not found."""
    value = None
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


def execute_candidate(code_path: str) -> dict:
    """Execute the script at ``code_path``; return the envelope payload."""
    with open(code_path, encoding="utf-8") as fh:
        source = fh.read()

    started = time.monotonic()
    status = "ok"
    trace_text = None
    out_buffer, err_buffer = io.StringIO(), io.StringIO()
    real_out, real_err, real_argv = sys.stdout, sys.stderr, sys.argv
    sys.stdout, sys.stderr = out_buffer, err_buffer
    sys.argv = [code_path]
    try:
        code = compile(source, code_path, "exec")
        namespace = {"__name__": "__main__", "__file__": code_path}
        exec(code, namespace)
    except SystemExit as exc:
        if exc.code not in (None, 0):
            status = "exception"
            trace_text = f"SystemExit: {exc.code}"
    except BaseException:
        status = "exception"
        trace_text = traceback.format_exc()
    finally:
        sys.stdout, sys.stderr = real_out, real_err
        sys.argv = real_argv
    elapsed = time.monotonic() - started

    stdout_text = out_buffer.getvalue()
    stderr_text = err_buffer.getvalue()
    objective = parse_objective(stdout_text) if status == "ok" else None
    if status == "ok" and objective is None:
        status = "no_objective"
    return {
        "status": status,
        "objective": objective,
        "stdout": stdout_text,
        "stderr": stderr_text,
        "traceback": trace_text,
        "elapsed": elapsed,
    }


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 1:
        print("usage: harness.py <code_file>", file=sys.stderr)
        return 2
    try:
        envelope = execute_candidate(argv[0])
    except OSError as exc:
        print(f"harness could not read candidate: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(SENTINEL + json.dumps(envelope, ensure_ascii=True) + "\n")
    sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
