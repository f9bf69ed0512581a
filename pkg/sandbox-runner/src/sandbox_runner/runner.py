"""Execute one script in an isolated child interpreter."""

from __future__ import annotations

import os
import shutil
import signal
import subprocess
import sys
import tempfile
import time

from .protocol import Request, Response

OUTPUT_CAP_BYTES = 64 * 1024

# Calculation-oriented stdlib plus the pandas stack; no module that can
# open sockets. Overridable per request.
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

# Installed before the user script runs. Direct imports (depth 0) are
# checked against the allow-list; imports made internally by an allowed
# module pass through so packages like pandas can pull their own deps.
_BOOTSTRAP = """\
import builtins
import sys

script_path = sys.argv[1]
allowed = frozenset(name for name in sys.argv[2].split(",") if name)

with open(script_path, "rb") as fh:
    source = fh.read()
code = compile(source, "script.py", "exec")

real_import = builtins.__import__
depth = 0


def guarded_import(name, globals=None, locals=None, fromlist=(), level=0):
    global depth
    if depth == 0 and level == 0:
        top = name.partition(".")[0]
        if top not in allowed:
            raise ImportError(f"import of {top!r} is blocked by sandbox policy")
    depth += 1
    try:
        return real_import(name, globals, locals, fromlist, level)
    finally:
        depth -= 1


builtins.__import__ = guarded_import
exec(code, {"__name__": "__main__", "__builtins__": builtins})
"""


def _truncate(data: bytes) -> tuple[str, bool]:
    truncated = len(data) > OUTPUT_CAP_BYTES
    if truncated:
        data = data[:OUTPUT_CAP_BYTES]
    return data.decode("utf-8", errors="replace"), truncated


def execute(req: Request) -> Response:
    """Run the script in a fresh working directory and report the outcome.

    The child's cwd is a new empty temp directory; the bootstrap and
    script files live in a second support directory so the script sees a
    clean filesystem. On timeout the whole process group is killed.
    """
    allow = req.allow_imports if req.allow_imports is not None else DEFAULT_ALLOW_IMPORTS
    parent = req.workdir if req.workdir else None
    workdir = tempfile.mkdtemp(prefix="sandbox-work-", dir=parent)
    support = tempfile.mkdtemp(prefix="sandbox-support-", dir=parent)
    try:
        script_path = os.path.join(support, "script.py")
        bootstrap_path = os.path.join(support, "bootstrap.py")
        with open(script_path, "w", encoding="utf-8") as fh:
            fh.write(req.script)
        with open(bootstrap_path, "w", encoding="utf-8") as fh:
            fh.write(_BOOTSTRAP)

        argv = [sys.executable, "-I", bootstrap_path, script_path, ",".join(allow)]
        start = time.monotonic()
        proc = subprocess.Popen(
            argv,
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=workdir,
            start_new_session=True,
        )
        timed_out = False
        try:
            stdout_b, stderr_b = proc.communicate(timeout=req.timeout_s)
        except subprocess.TimeoutExpired:
            timed_out = True
            try:
                os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
            except (ProcessLookupError, PermissionError):
                proc.kill()
            stdout_b, stderr_b = proc.communicate()
        duration_ms = int((time.monotonic() - start) * 1000)

        exit_code = proc.returncode
        if timed_out and exit_code == 0:
            exit_code = -signal.SIGKILL
        stdout, stdout_truncated = _truncate(stdout_b)
        stderr, stderr_truncated = _truncate(stderr_b)
        return Response(
            stdout=stdout,
            stderr=stderr,
            exit_code=exit_code,
            duration_ms=duration_ms,
            timed_out=timed_out,
            stdout_truncated=stdout_truncated,
            stderr_truncated=stderr_truncated,
        )
    finally:
        shutil.rmtree(workdir, ignore_errors=True)
        shutil.rmtree(support, ignore_errors=True)
