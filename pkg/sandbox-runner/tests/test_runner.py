import json
import subprocess
import sys
import time

import pytest

from sandbox_runner.protocol import ProtocolError, Request, parse_response
from sandbox_runner.runner import DEFAULT_ALLOW_IMPORTS, OUTPUT_CAP_BYTES, execute


def test_arithmetic_script_exact_stdout():
    resp = execute(Request(script="print(sum([1, 2, 3]))"))
    assert resp.stdout == "6\n"
    assert resp.exit_code == 0 and not resp.timed_out
    assert resp.stderr == "" and not resp.stdout_truncated


def test_infinite_loop_times_out_within_budget():
    start = time.monotonic()
    resp = execute(Request(script="while True: pass", timeout_s=2))
    wall = time.monotonic() - start
    assert resp.timed_out
    assert resp.exit_code != 0
    assert wall < 3.0
    assert resp.duration_ms <= 2000 + 1000


def test_blocked_import_fails_naming_the_module():
    resp = execute(Request(script="import socket\nprint('unreachable')"))
    assert resp.exit_code != 0
    assert "socket" in resp.stderr
    assert resp.stdout == ""


@pytest.mark.parametrize("module", ["math", "statistics", "datetime", "json", "re"])
def test_allowed_modules_import(module):
    resp = execute(Request(script=f"import {module}\nprint('ok')"))
    assert resp.exit_code == 0, resp.stderr
    assert resp.stdout == "ok\n"


@pytest.mark.parametrize("module", ["socket", "os", "subprocess", "urllib", "http"])
def test_blocked_modules_fail_at_import_time(module):
    resp = execute(Request(script=f"import {module}\nprint('ok')"))
    assert resp.exit_code != 0
    assert module in resp.stderr
    assert "ok" not in resp.stdout


def test_script_errors_surface_with_nonzero_exit():
    resp = execute(Request(script="raise ValueError('bad table')"))
    assert resp.exit_code == 1
    assert "bad table" in resp.stderr


def test_fresh_workdir_isolation_between_executions():
    first = execute(Request(script="open('probe.txt', 'w').write('x')\nprint('wrote')"))
    assert first.exit_code == 0 and first.stdout == "wrote\n"
    second = execute(
        Request(
            script=(
                "try:\n"
                "    open('probe.txt')\n"
                "    print('leaked')\n"
                "except FileNotFoundError:\n"
                "    print('isolated')\n"
            )
        )
    )
    assert second.exit_code == 0
    assert second.stdout == "isolated\n"


def test_workdir_is_empty_and_is_the_cwd():
    resp = execute(
        Request(
            script="import os\nprint(sorted(os.listdir('.')))\nprint(os.path.basename(os.getcwd())[:13])",
            allow_imports=("os",),
        )
    )
    assert resp.exit_code == 0, resp.stderr
    listing, prefix = resp.stdout.splitlines()
    assert listing == "[]"
    assert prefix == "sandbox-work-"


def test_stdout_capped_with_truncation_flag():
    resp = execute(Request(script=f"print('x' * {OUTPUT_CAP_BYTES + 5000})"))
    assert resp.exit_code == 0
    assert resp.stdout_truncated
    assert len(resp.stdout.encode("utf-8")) == OUTPUT_CAP_BYTES
    assert resp.stdout == "x" * OUTPUT_CAP_BYTES


def test_multibyte_stdout_is_byte_exact_below_cap():
    resp = execute(Request(script="print('héllo 世界 — ответ: 42')"))
    assert resp.exit_code == 0
    assert resp.stdout == "héllo 世界 — ответ: 42\n"
    assert not resp.stdout_truncated


def test_stderr_capped_independently():
    script = f"import sys\nsys.stderr.write('e' * {OUTPUT_CAP_BYTES + 100})\nprint('done')"
    resp = execute(Request(script=script, allow_imports=("sys",)))
    assert resp.stdout == "done\n"
    assert resp.stderr_truncated and len(resp.stderr.encode("utf-8")) == OUTPUT_CAP_BYTES


def test_request_validation():
    with pytest.raises(ProtocolError):
        Request(script="  ")
    with pytest.raises(ProtocolError):
        Request(script="print(1)", timeout_s=0)
    with pytest.raises(ProtocolError):
        Request(script="print(1)", timeout_s=1000)


def test_default_allow_list_has_no_network_modules():
    for banned in ("socket", "http", "urllib", "ssl", "ftplib", "requests", "httpx"):
        assert banned not in DEFAULT_ALLOW_IMPORTS


# ---------------------------------------------------------------------------
# Through the real process boundary, exactly as the engine drives it


def _run_runner(stdin_text: str) -> subprocess.CompletedProcess:
    return subprocess.run(
        [sys.executable, "-m", "sandbox_runner"],
        input=stdin_text,
        capture_output=True,
        text=True,
        timeout=30,
    )


def test_stdin_stdout_envelope_end_to_end():
    proc = _run_runner(json.dumps({"v": 1, "script": "print(6 * 7)", "timeout_s": 10}))
    assert proc.returncode == 0
    resp = parse_response(proc.stdout)
    assert resp.stdout == "42\n" and resp.exit_code == 0


def test_protocol_error_reported_as_error_envelope():
    proc = _run_runner(json.dumps({"v": 99, "script": "print(1)"}))
    assert proc.returncode == 2
    body = json.loads(proc.stdout)
    assert body["v"] == 1 and "error" in body

    proc = _run_runner("this is not json")
    assert proc.returncode == 2
    assert "error" in json.loads(proc.stdout)


def test_engine_client_drives_runner_through_envelope():
    tablap_sandbox = pytest.importorskip("tablap.sandbox")
    sandbox = tablap_sandbox.SubprocessSandbox(runner_cmd=f"{sys.executable} -m sandbox_runner")
    result = sandbox.execute(tablap_sandbox.SandboxRequest(script="print(845 - 678)"))
    assert result.ok and result.last_stdout_line() == "167"

    blocked = sandbox.execute(tablap_sandbox.SandboxRequest(script="import socket"))
    assert not blocked.ok and "socket" in blocked.stderr
