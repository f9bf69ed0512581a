"""Fuzz round-trip agreement between the engine-side envelope code and the
runner-side parser/serializer."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sandbox_runner import protocol as runner_proto

engine = pytest.importorskip("tablap.sandbox")

scripts = st.text(min_size=1, max_size=300).filter(lambda s: s.strip())
timeouts = st.floats(min_value=0.1, max_value=120.0, allow_nan=False)
module_names = st.lists(
    st.text(alphabet="abcdefghijklmnopqrstuvwxyz_", min_size=1, max_size=12),
    max_size=6,
).map(tuple)


@settings(max_examples=100, deadline=None)
@given(script=scripts, timeout_s=timeouts, allow=module_names)
def test_engine_requests_parse_on_runner_side(script, timeout_s, allow):
    req = engine.SandboxRequest(script=script, timeout_s=timeout_s, allow_imports=allow)
    wire = engine.serialize_request(req)
    parsed = runner_proto.parse_request(wire)
    assert parsed.script == req.script
    assert parsed.timeout_s == req.timeout_s
    assert parsed.allow_imports == req.allow_imports
    assert parsed.workdir is None


@settings(max_examples=100, deadline=None)
@given(
    stdout=st.text(max_size=300),
    stderr=st.text(max_size=300),
    exit_code=st.integers(min_value=-64, max_value=255),
    duration_ms=st.integers(min_value=0, max_value=121_000),
    timed_out=st.booleans(),
    stdout_truncated=st.booleans(),
    stderr_truncated=st.booleans(),
)
def test_runner_responses_parse_on_engine_side(
    stdout, stderr, exit_code, duration_ms, timed_out, stdout_truncated, stderr_truncated
):
    if timed_out and exit_code == 0:
        exit_code = -9
    resp = runner_proto.Response(
        stdout=stdout,
        stderr=stderr,
        exit_code=exit_code,
        duration_ms=duration_ms,
        timed_out=timed_out,
        stdout_truncated=stdout_truncated,
        stderr_truncated=stderr_truncated,
    )
    wire = runner_proto.serialize_response(resp)
    parsed = engine.parse_response(wire)
    assert parsed.stdout == resp.stdout
    assert parsed.stderr == resp.stderr
    assert parsed.exit_code == resp.exit_code
    assert parsed.duration_ms == resp.duration_ms
    assert parsed.timed_out == resp.timed_out
    assert parsed.stdout_truncated == resp.stdout_truncated
    assert parsed.stderr_truncated == resp.stderr_truncated


@settings(max_examples=100, deadline=None)
@given(script=scripts, timeout_s=timeouts, allow=module_names)
def test_request_round_trip_is_lossless_on_both_sides(script, timeout_s, allow):
    runner_req = runner_proto.Request(script=script, timeout_s=timeout_s, allow_imports=allow)
    assert runner_proto.parse_request(runner_proto.serialize_request(runner_req)) == runner_req
    engine_req = engine.parse_request(runner_proto.serialize_request(runner_req))
    assert engine_req.script == script and engine_req.allow_imports == allow
