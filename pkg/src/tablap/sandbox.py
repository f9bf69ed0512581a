"""Engine side of the script-execution sandbox boundary.

Generated calculation scripts run in a separate runner process. The engine
writes one JSON request to the runner's stdin and reads one JSON response
from its stdout; this module owns the engine half of that envelope plus a
stub used when script execution is disabled (the solver then falls back to
the model's direct answer).
"""

from __future__ import annotations

import json
import shlex
import subprocess
import sys
from dataclasses import dataclass, field
from typing import Optional

ENVELOPE_VERSION = 1
MAX_TIMEOUT_S = 120.0
DEFAULT_TIMEOUT_S = 10.0

# Import policy applied by the runner unless the request overrides it:
# calculation-oriented stdlib plus the pandas stack. Nothing that opens
# sockets is on the list.
DEFAULT_ALLOW_IMPORTS = (
    "math",
    "statistics",
    "datetime",
    "calendar",
    "time",
    "decimal",
    "fractions",
    "random",
    "re",
    "json",
    "csv",
    "io",
    "collections",
    "itertools",
    "functools",
    "operator",
    "string",
    "textwrap",
    "unicodedata",
    "numbers",
    "bisect",
    "heapq",
    "array",
    "copy",
    "typing",
    "dataclasses",
    "enum",
    "numpy",
    "pandas",
    "dateutil",
    "pytz",
    "tzdata",
    "six",
)


class SandboxProtocolError(RuntimeError):
    """The runner replied with something that is not a valid response."""


@dataclass(frozen=True)
class SandboxRequest:
    script: str
    timeout_s: float = DEFAULT_TIMEOUT_S
    allow_imports: tuple[str, ...] = DEFAULT_ALLOW_IMPORTS
    workdir: Optional[str] = None

    def __post_init__(self):
        if not self.script.strip():
            raise ValueError("script is empty")
        if not 0 < self.timeout_s <= MAX_TIMEOUT_S:
            raise ValueError(f"timeout_s must be in (0, {MAX_TIMEOUT_S}]")


@dataclass(frozen=True)
class ExecResult:
    """Outcome of one sandboxed execution. Any nonzero exit counts as a
    failed script for the solver's fallback rule."""

    stdout: str = ""
    stderr: str = ""
    exit_code: int = 0
    duration_ms: int = 0
    timed_out: bool = False
    stdout_truncated: bool = False
    stderr_truncated: bool = False

    @property
    def ok(self) -> bool:
        return self.exit_code == 0 and not self.timed_out

    def last_stdout_line(self) -> Optional[str]:
        for line in reversed(self.stdout.splitlines()):
            if line.strip():
                return line.strip()
        return None


def serialize_request(req: SandboxRequest) -> str:
    return json.dumps(
        {
            "v": ENVELOPE_VERSION,
            "script": req.script,
            "timeout_s": req.timeout_s,
            "allow_imports": list(req.allow_imports),
            "workdir": req.workdir,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def parse_response(raw: str) -> ExecResult:
    try:
        data = json.loads(raw)
    except ValueError as e:
        raise SandboxProtocolError(f"runner emitted invalid JSON: {e}") from None
    if not isinstance(data, dict) or data.get("v") != ENVELOPE_VERSION:
        raise SandboxProtocolError(f"unsupported response envelope: {raw[:200]}")
    if "error" in data:
        raise SandboxProtocolError(str(data["error"]))
    try:
        return ExecResult(
            stdout=str(data["stdout"]),
            stderr=str(data["stderr"]),
            exit_code=int(data["exit_code"]),
            duration_ms=int(data["duration_ms"]),
            timed_out=bool(data["timed_out"]),
            stdout_truncated=bool(data.get("stdout_truncated", False)),
            stderr_truncated=bool(data.get("stderr_truncated", False)),
        )
    except KeyError as e:
        raise SandboxProtocolError(f"response missing field {e}") from None


def serialize_response(result: ExecResult) -> str:
    """Engine-side mirror of the runner's response writer, used for
    round-trip checks of the envelope."""
    return json.dumps(
        {
            "v": ENVELOPE_VERSION,
            "stdout": result.stdout,
            "stderr": result.stderr,
            "exit_code": result.exit_code,
            "duration_ms": result.duration_ms,
            "timed_out": result.timed_out,
            "stdout_truncated": result.stdout_truncated,
            "stderr_truncated": result.stderr_truncated,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def parse_request(raw: str) -> SandboxRequest:
    """Engine-side mirror of the runner's request parser."""
    data = json.loads(raw)
    if not isinstance(data, dict) or data.get("v") != ENVELOPE_VERSION:
        raise SandboxProtocolError(f"unsupported request envelope: {raw[:200]}")
    allow = data.get("allow_imports")
    return SandboxRequest(
        script=data["script"],
        timeout_s=float(data.get("timeout_s", DEFAULT_TIMEOUT_S)),
        allow_imports=tuple(allow) if allow is not None else DEFAULT_ALLOW_IMPORTS,
        workdir=data.get("workdir"),
    )


DEFAULT_RUNNER_CMD = f"{shlex.quote(sys.executable)} -m sandbox_runner"


@dataclass
class SubprocessSandbox:
    """Spawns the runner executable per execution and speaks the envelope.

    The runner enforces the timeout itself; the engine adds an outer grace
    period in case the runner process wedges.
    """

    runner_cmd: str = DEFAULT_RUNNER_CMD
    grace_s: float = 10.0

    def execute(self, req: SandboxRequest) -> ExecResult:
        argv = shlex.split(self.runner_cmd)
        try:
            proc = subprocess.run(
                argv,
                input=serialize_request(req),
                capture_output=True,
                text=True,
                timeout=req.timeout_s + self.grace_s,
            )
        except FileNotFoundError as e:
            return ExecResult(stderr=f"sandbox runner not found: {e}", exit_code=127)
        except subprocess.TimeoutExpired:
            return ExecResult(stderr="sandbox runner did not respond", exit_code=-9, timed_out=True)
        try:
            return parse_response(proc.stdout)
        except SandboxProtocolError as e:
            stderr = proc.stderr.strip()
            detail = f"{e}" + (f"; runner stderr: {stderr[:500]}" if stderr else "")
            return ExecResult(stderr=detail, exit_code=proc.returncode or 1)


@dataclass
class StubSandbox:
    """Always-failing sandbox for offline runs: every script execution is
    reported as failed so the solver falls back to direct answers."""

    message: str = "script execution disabled"
    calls: list = field(default_factory=list)

    def execute(self, req: SandboxRequest) -> ExecResult:
        self.calls.append(req.script)
        return ExecResult(stderr=self.message, exit_code=1)
