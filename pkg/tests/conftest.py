"""Shared fixtures: scripted fake transport, a recorded replay cache for
the 3-instance demo dataset, and a terminal summary line per acceptance
criterion."""

from __future__ import annotations

from pathlib import Path

import pytest

from tablap.datasets import load_dataset
from tablap.gateway import CompletionCache, Gateway
from tablap.pipeline import PipelineConfig, run_pipeline
from tablap.sandbox import StubSandbox

FIXTURES = Path(__file__).parent / "fixtures"


def chat_body(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


class ScriptedTransport:
    """Computes completions from the prompt text; repeated calls with the
    same prompt walk through the scripted sample list."""

    def __init__(self, script_fn):
        self.script_fn = script_fn
        self.counts: dict[str, int] = {}
        self.calls = 0

    def post_chat(self, payload):
        self.calls += 1
        prompt = payload["messages"][0]["content"]
        nth = self.counts.get(prompt, 0)
        self.counts[prompt] = nth + 1
        return 200, chat_body(self.script_fn(prompt, nth))


class RaisingTransport:
    """Fails the test if any network call is attempted."""

    def __init__(self):
        self.calls = 0

    def post_chat(self, payload):
        self.calls += 1
        raise AssertionError("network transport used in replay mode")


# Scripted model behavior for the three demo instances. Branch role is
# detected from template phrasing, the instance from its question text.
_SOTA_SAMPLES = {
    "demo-001": [
        "The gold column has 3, 2 and 1.\nFinal Answer: 6",
        "Adding 3+2+1 gives 6.\nFinal Answer: 6",
        "3+2 = 5.\nFinal Answer: 5",
        "Sum the Gold column.\nFinal Answer: 6",
        "I think two medals were missed.\nFinal Answer: 5",
    ],
    "demo-002": [
        "845 minus 745 is 100.\nFinal Answer: 100",
        "The gap is 100 points.\nFinal Answer: 100",
        "845 - 678 = 167.\nFinal Answer: 167",
        "Highest 845, lowest 745.\nFinal Answer: 100",
        "845 - 678 = 167.\nFinal Answer: 167",
    ],
    "demo-003": [
        "The table lists Democratic governors.\nFinal Answer: Democratic",
        "1854 falls in a Democratic term.\nFinal Answer: Democratic",
        "Final Answer: Democratic",
        "Final Answer: Democratic",
        "Final Answer: Democratic",
    ],
}

_NUMSOLVER = {
    "demo-001": (
        "Reasoning: Sum the Gold column: 3 + 2 + 1.\n"
        "```python\nprint(3 + 2 + 1)\n```\n"
        "Final Answer: 6"
    ),
    "demo-002": (
        "Reasoning: Highest points 845, lowest 678, difference 845 - 678.\n"
        "```python\nprint(845 - 678)\n```\n"
        "Final Answer: 167"
    ),
    "demo-003": "Reasoning: The 1854 term belongs to Ryland Fletcher.\nFinal Answer: Republican",
}

_SELECTOR = {
    "demo-001": "Both answers agree, so either branch works. [A]",
    "demo-002": "Answer B subtracts the true extremes. [B]",
    "demo-003": "Answer A matches the table period. [A]",
}

_TWE = {
    "demo-001": "The arithmetic is simple and both branches agree. [True]",
    "demo-002": "The reasoning in the selected branch is sound. [True]",
    "demo-003": "Neither reasoning cites the table rows. [False]",
}


def demo_script(prompt: str, nth: int) -> str:
    for instance_id, question in (
        ("demo-001", "How many gold medals were won in total?"),
        ("demo-002", "What is the difference between the highest and lowest point totals?"),
        ("demo-003", "Which party held the office in 1854?"),
    ):
        if question in prompt:
            break
    else:
        raise AssertionError(f"unexpected prompt: {prompt[:120]!r}")
    if "Reply with [A]" in prompt:
        return _SELECTOR[instance_id]
    if "Reply with [True]" in prompt:
        return _TWE[instance_id]
    if "self-contained Python script" in prompt:
        return _NUMSOLVER[instance_id]
    return _SOTA_SAMPLES[instance_id][nth]


def demo_config(cache_path: Path, mode: str, **overrides) -> PipelineConfig:
    base = {
        "mode": mode,
        "cache_path": str(cache_path),
        "filter": "ew",
        "warmup": "50",
        "seed": "7",
        "sandbox_enabled": "false",
        "sota_branch.n_samples": "5",
    }
    base.update({k: str(v) for k, v in overrides.items()})
    return PipelineConfig.from_overrides(**base)


@pytest.fixture(scope="session")
def demo_dataset():
    return load_dataset(FIXTURES / "pipeline_demo.jsonl", "generic-jsonl")


@pytest.fixture(scope="session")
def demo_cache_path(tmp_path_factory, demo_dataset) -> Path:
    """Record the scripted completions once per session; tests replay."""
    cache_path = tmp_path_factory.mktemp("cache") / "cache.jsonl"
    cfg = demo_config(cache_path, "record", workers=1)
    gateway = Gateway(
        roles=cfg.roles(),
        mode="record",
        cache=CompletionCache(cache_path),
        transport=ScriptedTransport(demo_script),
    )
    run_pipeline(demo_dataset, cfg, gateway, StubSandbox(), runs_path=None)
    return cache_path


def replay_gateway(cfg: PipelineConfig, transport=None) -> Gateway:
    return Gateway(
        roles=cfg.roles(),
        mode="replay",
        cache=CompletionCache(cfg.values["cache_path"]),
        transport=transport,
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status in ("passed", "failed", "skipped"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            if status != "skipped" and rep.when != "call":
                continue
            lines.append((nodeid, status.upper()))
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for nodeid, status in sorted(set(lines)):
            terminalreporter.write_line(f"  [{status}] {nodeid.split('::')[-1]}")
