"""Versioned JSON envelope shared with the engine.

Request:  {"v": 1, "script", "timeout_s", "allow_imports", "workdir"}
Response: {"v": 1, "stdout", "stderr", "exit_code", "duration_ms",
           "timed_out", "stdout_truncated", "stderr_truncated"}

A protocol-level failure is reported as {"v": 1, "error": "..."}.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

ENVELOPE_VERSION = 1
MAX_TIMEOUT_S = 120.0
DEFAULT_TIMEOUT_S = 10.0


class ProtocolError(ValueError):
    pass


@dataclass(frozen=True)
class Request:
    script: str
    timeout_s: float = DEFAULT_TIMEOUT_S
    allow_imports: Optional[tuple[str, ...]] = None  # None -> runner default
    workdir: Optional[str] = None

    def __post_init__(self):
        if not isinstance(self.script, str) or not self.script.strip():
            raise ProtocolError("script must be a non-empty string")
        if not 0 < self.timeout_s <= MAX_TIMEOUT_S:
            raise ProtocolError(f"timeout_s must be in (0, {MAX_TIMEOUT_S}]")


@dataclass(frozen=True)
class Response:
    stdout: str
    stderr: str
    exit_code: int
    duration_ms: int
    timed_out: bool
    stdout_truncated: bool = False
    stderr_truncated: bool = False

    def __post_init__(self):
        if self.timed_out and self.exit_code == 0:
            raise ProtocolError("a timed-out execution cannot report exit code 0")


def parse_request(raw: str) -> Request:
    try:
        data = json.loads(raw)
    except ValueError as e:
        raise ProtocolError(f"request is not valid JSON: {e}") from None
    if not isinstance(data, dict) or data.get("v") != ENVELOPE_VERSION:
        raise ProtocolError(f"unsupported request envelope version: {data!r:.120}")
    if "script" not in data:
        raise ProtocolError("request missing 'script'")
    allow = data.get("allow_imports")
    if allow is not None and (
        not isinstance(allow, list) or not all(isinstance(a, str) for a in allow)
    ):
        raise ProtocolError("allow_imports must be a list of module names")
    try:
        timeout_s = float(data.get("timeout_s", DEFAULT_TIMEOUT_S))
    except (TypeError, ValueError):
        raise ProtocolError("timeout_s must be a number") from None
    return Request(
        script=data["script"],
        timeout_s=timeout_s,
        allow_imports=tuple(allow) if allow is not None else None,
        workdir=data.get("workdir"),
    )


def serialize_request(req: Request) -> str:
    return json.dumps(
        {
            "v": ENVELOPE_VERSION,
            "script": req.script,
            "timeout_s": req.timeout_s,
            "allow_imports": list(req.allow_imports) if req.allow_imports is not None else None,
            "workdir": req.workdir,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def serialize_response(resp: Response) -> str:
    return json.dumps(
        {
            "v": ENVELOPE_VERSION,
            "stdout": resp.stdout,
            "stderr": resp.stderr,
            "exit_code": resp.exit_code,
            "duration_ms": resp.duration_ms,
            "timed_out": resp.timed_out,
            "stdout_truncated": resp.stdout_truncated,
            "stderr_truncated": resp.stderr_truncated,
        },
        sort_keys=True,
        ensure_ascii=False,
    )


def parse_response(raw: str) -> Response:
    try:
        data = json.loads(raw)
    except ValueError as e:
        raise ProtocolError(f"response is not valid JSON: {e}") from None
    if not isinstance(data, dict) or data.get("v") != ENVELOPE_VERSION:
        raise ProtocolError(f"unsupported response envelope version: {data!r:.120}")
    if "error" in data:
        raise ProtocolError(str(data["error"]))
    try:
        return Response(
            stdout=str(data["stdout"]),
            stderr=str(data["stderr"]),
            exit_code=int(data["exit_code"]),
            duration_ms=int(data["duration_ms"]),
            timed_out=bool(data["timed_out"]),
            stdout_truncated=bool(data.get("stdout_truncated", False)),
            stderr_truncated=bool(data.get("stderr_truncated", False)),
        )
    except KeyError as e:
        raise ProtocolError(f"response missing field {e}") from None


def error_response(message: str) -> str:
    return json.dumps({"v": ENVELOPE_VERSION, "error": message}, sort_keys=True, ensure_ascii=False)
