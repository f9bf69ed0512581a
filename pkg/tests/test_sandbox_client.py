import json

import pytest

from tablap.sandbox import (
    DEFAULT_ALLOW_IMPORTS,
    ExecResult,
    SandboxProtocolError,
    SandboxRequest,
    StubSandbox,
    SubprocessSandbox,
    parse_request,
    parse_response,
    serialize_request,
    serialize_response,
)


def test_request_validation():
    with pytest.raises(ValueError):
        SandboxRequest(script="  ")
    with pytest.raises(ValueError):
        SandboxRequest(script="print(1)", timeout_s=0)
    with pytest.raises(ValueError):
        SandboxRequest(script="print(1)", timeout_s=500)
    req = SandboxRequest(script="print(1)")
    assert req.timeout_s == 10.0
    assert "socket" not in req.allow_imports
    assert "math" in DEFAULT_ALLOW_IMPORTS


def test_request_envelope_round_trip():
    req = SandboxRequest(script="print('héllo | 世界')\n", timeout_s=3.5, allow_imports=("math",))
    back = parse_request(serialize_request(req))
    assert back == req
    payload = json.loads(serialize_request(req))
    assert payload["v"] == 1


def test_response_envelope_round_trip():
    result = ExecResult(stdout="6\n", stderr="", exit_code=0, duration_ms=12,
                        timed_out=False, stdout_truncated=False, stderr_truncated=True)
    assert parse_response(serialize_response(result)) == result


def test_parse_response_rejects_garbage():
    with pytest.raises(SandboxProtocolError):
        parse_response("not json")
    with pytest.raises(SandboxProtocolError):
        parse_response(json.dumps({"v": 2, "stdout": ""}))
    with pytest.raises(SandboxProtocolError):
        parse_response(json.dumps({"v": 1, "error": "bad request"}))
    with pytest.raises(SandboxProtocolError):
        parse_response(json.dumps({"v": 1, "stdout": "x"}))


def test_exec_result_last_stdout_line():
    assert ExecResult(stdout="a\n167\n\n").last_stdout_line() == "167"
    assert ExecResult(stdout="\n \n").last_stdout_line() is None
    assert ExecResult(stdout="").last_stdout_line() is None


def test_exec_result_ok():
    assert ExecResult(exit_code=0).ok
    assert not ExecResult(exit_code=1).ok
    assert not ExecResult(exit_code=0, timed_out=True).ok


def test_stub_sandbox_always_fails():
    stub = StubSandbox()
    result = stub.execute(SandboxRequest(script="print(1)"))
    assert result.exit_code == 1 and not result.ok
    assert stub.calls == ["print(1)"]


def test_subprocess_sandbox_missing_runner():
    sandbox = SubprocessSandbox(runner_cmd="/nonexistent/runner-binary")
    result = sandbox.execute(SandboxRequest(script="print(1)"))
    assert result.exit_code == 127 and "not found" in result.stderr


def test_subprocess_sandbox_bad_runner_output():
    # a "runner" that prints something that is not an envelope
    sandbox = SubprocessSandbox(runner_cmd="echo not-an-envelope")
    result = sandbox.execute(SandboxRequest(script="print(1)"))
    assert not result.ok and "invalid JSON" in result.stderr


def test_real_runner_executes_script_branch():
    pytest.importorskip("sandbox_runner")
    import sys

    sandbox = SubprocessSandbox(runner_cmd=f"{sys.executable} -m sandbox_runner")
    result = sandbox.execute(SandboxRequest(script="print(3 + 2 + 1)"))
    assert result.ok and result.last_stdout_line() == "6"


def test_real_runner_through_solver(demo_cache_path, demo_dataset):
    pytest.importorskip("sandbox_runner")
    import sys

    from conftest import demo_config, replay_gateway
    from tablap.solver import solve_numerical

    cfg = demo_config(demo_cache_path, "replay")
    gateway = replay_gateway(cfg)
    sandbox = SubprocessSandbox(runner_cmd=f"{sys.executable} -m sandbox_runner")
    inst = demo_dataset[0]
    record = solve_numerical(inst.table, inst.question, gateway, sandbox)
    # with a live interpreter the executed script answer wins
    assert record.provenance == "script" and record.answer == "6"
    assert record.trace["exec"]["exit_code"] == 0
