"""Run the full pipeline offline.

A scripted fake model is recorded into a completion cache once, then the
pipeline replays from that cache with script execution stubbed out: no
network, no interpreter, fully deterministic. Finishes by exporting
fine-tuning corpora for the selector and trust-evaluator roles.
"""

import json
import random
import tempfile
from pathlib import Path

from tablap.datasets import QaInstance
from tablap.gateway import CompletionCache, Gateway
from tablap.pipeline import PipelineConfig, run_pipeline
from tablap.sandbox import StubSandbox
from tablap.selection import export_finetune_corpus
from tablap.table import Question, Table

DATASET = [
    QaInstance(
        id="medals",
        question=Question("How many gold medals were won in total?", id="medals"),
        table=Table(
            title="2004 Summer Olympics medal table",
            headers=("Rank", "Nation", "Gold", "Silver", "Bronze"),
            rows=(("1", "United States", "3", "1", "1"),
                  ("2", "Japan", "2", "0", "1"),
                  ("3", "Kenya", "1", "2", "0")),
        ),
        gold_answer=("6",),
        style="wtq",
    ),
    QaInstance(
        id="points",
        question=Question("What is the difference between the highest and lowest point totals?", id="points"),
        table=Table(
            title="1971 Trans-AMA final standings",
            headers=("Rider", "Country", "Points"),
            rows=(("Sylvain Geboers", "Belgium", "845"),
                  ("Mark Blackwell", "USA", "745"),
                  ("Brad Lackey", "USA", "678")),
        ),
        gold_answer=("167",),
        style="wtq",
    ),
]

SAMPLES = {
    "medals": ["Final Answer: 6", "3+2+1 = 6.\nFinal Answer: 6", "Final Answer: 5",
               "Final Answer: 6", "Final Answer: 5"],
    "points": ["Final Answer: 100", "Final Answer: 100", "845-678=167.\nFinal Answer: 167",
               "Final Answer: 100", "Final Answer: 167"],
}
SOLVER = {
    "medals": "Reasoning: sum the Gold column.\n```python\nprint(3 + 2 + 1)\n```\nFinal Answer: 6",
    "points": "Reasoning: 845 - 678.\n```python\nprint(845 - 678)\n```\nFinal Answer: 167",
}
SELECTOR = {"medals": "Both agree. [A]", "points": "B subtracts the true extremes. [B]"}
TWE = {"medals": "[True]", "points": "[True]"}


class ScriptedTransport:
    """Routes each prompt to a canned completion; repeated identical
    prompts (the self-consistency samples) walk the sample list."""

    def __init__(self):
        self.seen = {}

    def post_chat(self, payload):
        prompt = payload["messages"][0]["content"]
        key = "medals" if "gold medals" in prompt else "points"
        if "Reply with [A]" in prompt:
            text = SELECTOR[key]
        elif "Reply with [True]" in prompt:
            text = TWE[key]
        elif "self-contained Python script" in prompt:
            text = SOLVER[key]
        else:
            nth = self.seen.get(prompt, 0)
            self.seen[prompt] = nth + 1
            text = SAMPLES[key][nth]
        return 200, {"choices": [{"message": {"content": text}}]}


def main():
    workdir = Path(tempfile.mkdtemp(prefix="replay-demo-"))
    cache_path = workdir / "cache.jsonl"
    cfg = PipelineConfig.from_overrides(
        mode="record", cache_path=str(cache_path), filter="ew", warmup="50",
        seed="7", sandbox_enabled="false", **{"sota_branch.n_samples": "5"},
    )

    print("== record pass (scripted fake model) ==")
    recorder = Gateway(roles=cfg.roles(), mode="record",
                       cache=CompletionCache(cache_path), transport=ScriptedTransport())
    run_pipeline(DATASET, cfg, recorder, StubSandbox(), runs_path=None)
    print(f"cache holds {len(CompletionCache(cache_path))} completions")

    print("\n== replay pass (offline, deterministic) ==")
    replay_cfg = cfg.override(mode="replay")
    replayer = Gateway(roles=replay_cfg.roles(), mode="replay",
                       cache=CompletionCache(cache_path), transport=None)
    records, metrics = run_pipeline(
        DATASET, replay_cfg, replayer, StubSandbox(), runs_path=workdir / "runs.jsonl"
    )
    for r in records:
        print(f"  {r.instance_id}: A={r.record_a.answer!r} B={r.record_b.answer!r} "
              f"selected={r.selected} -> {r.ans_best!r} "
              f"trust={r.emitted_trust.token} correct={r.gold_correct}")
    print("metrics:", json.dumps(metrics.as_dict(), sort_keys=True))

    print("\n== fine-tuning corpus export ==")
    n_sel = export_finetune_corpus(records, "selector", workdir / "selector.jsonl", random.Random(0))
    n_twe = export_finetune_corpus(records, "twe", workdir / "twe.jsonl", random.Random(0))
    print(f"selector corpus: {n_sel} records, trust corpus: {n_twe} records")
    print(f"artifacts in {workdir}")


if __name__ == "__main__":
    main()
