"""Answer selection between the two branches, and training-corpus export.

A classifier model sees the question, the table title and headers (never
the cell contents), and both answers with their reasoning, and emits [A]
or [B]. The same inputs drive ground-truth label construction for
fine-tuning both the selector and the trust evaluator outside this
package.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .gateway import Gateway, render
from .metrics import exact_match
from .prompts import DEFAULT_TEMPLATES
from .solver import AnswerRecord
from .table import Question, schema_text
from .trust import FALSE_TOKEN, TRUE_TOKEN

logger = logging.getLogger(__name__)

TOKEN_A = "[A]"
TOKEN_B = "[B]"


class MissingGold(ValueError):
    def __init__(self, instance_id: str):
        super().__init__(f"run {instance_id} has no gold answer")
        self.instance_id = instance_id


@dataclass(frozen=True)
class BranchLabel:
    value: str  # "A" | "B"

    def __post_init__(self):
        if self.value not in ("A", "B"):
            raise ValueError(f"branch label must be A or B, got {self.value!r}")

    @property
    def token(self) -> str:
        return TOKEN_A if self.value == "A" else TOKEN_B


@dataclass(frozen=True)
class SelectionInput:
    """Selector/trust-evaluator input: no table cells, schema only."""

    question: Question
    table_title: str
    table_headers: tuple[str, ...]
    record_a: AnswerRecord
    record_b: AnswerRecord

    def prompt_slots(self) -> dict[str, str]:
        return {
            "table_schema": schema_text(self.table_title, self.table_headers),
            "question": self.question.text,
            "ans_a": self.record_a.answer if not self.record_a.failed else "(no answer)",
            "rsn_a": self.record_a.reasoning if not self.record_a.failed else "(branch failed)",
            "ans_b": self.record_b.answer if not self.record_b.failed else "(no answer)",
            "rsn_b": self.record_b.reasoning if not self.record_b.failed else "(branch failed)",
        }


def parse_branch_label(text: str) -> Optional[BranchLabel]:
    """First literal [A]/[B] token in a completion, or None."""
    i_a = text.find(TOKEN_A)
    i_b = text.find(TOKEN_B)
    if i_a < 0 and i_b < 0:
        return None
    if i_b < 0 or (0 <= i_a < i_b):
        return BranchLabel("A")
    return BranchLabel("B")


def select(inp: SelectionInput, gateway: Gateway, default: str = "A") -> tuple[BranchLabel, dict]:
    """Choose a branch. Returns (label, call trace).

    If exactly one branch failed the survivor wins without a model call
    and the trace marks the selection as bypassed. An unparseable
    completion falls back to the configured default branch.
    """
    if inp.record_a.failed and inp.record_b.failed:
        raise ValueError("both branches failed; nothing to select")
    if inp.record_a.failed:
        return BranchLabel("B"), {"bypassed": True}
    if inp.record_b.failed:
        return BranchLabel("A"), {"bypassed": True}
    prompt = render(DEFAULT_TEMPLATES["ans_selector"], inp.prompt_slots())
    completion = gateway.complete("ans_selector", prompt)
    label = parse_branch_label(completion.text)
    if label is None:
        logger.warning("selector completion had neither [A] nor [B]; falling back to %s", default)
        label = BranchLabel(default)
    trace = {
        "bypassed": False,
        "completion": completion.text,
        "from_cache": completion.from_cache,
        "latency_ms": completion.latency_ms,
    }
    return label, trace


def make_selector_label(
    correct_a: bool, correct_b: bool, acc_a: float, acc_b: float, rng: random.Random
) -> Optional[BranchLabel]:
    """Ground-truth selector label for one training instance.

    Exactly one branch correct: that branch. Both wrong: None, the
    instance is discarded. Both correct: pick A with probability
    acc_a / (acc_a + acc_b), weighting toward the stronger branch.
    """
    if correct_a and not correct_b:
        return BranchLabel("A")
    if correct_b and not correct_a:
        return BranchLabel("B")
    if not correct_a and not correct_b:
        return None
    if not (0 <= acc_a <= 1 and 0 <= acc_b <= 1):
        raise ValueError("branch accuracies must lie in [0, 1]")
    if acc_a + acc_b == 0:
        raise ValueError("branch accuracies cannot both be zero when both branches are correct")
    p_a = acc_a / (acc_a + acc_b)
    return BranchLabel("A") if rng.random() < p_a else BranchLabel("B")


def make_twe_label(answered_correctly: bool) -> str:
    """Ground-truth trust label: [True] when any branch answered
    correctly, [False] when both were wrong."""
    return TRUE_TOKEN if answered_correctly else FALSE_TOKEN


@dataclass(frozen=True)
class TrainRecord:
    prompt: str
    target: str
    instance_id: str
    role: str  # selector | twe

    def __post_init__(self):
        vocab = (TOKEN_A, TOKEN_B) if self.role == "selector" else (TRUE_TOKEN, FALSE_TOKEN)
        if self.role not in ("selector", "twe"):
            raise ValueError(f"unknown training role {self.role!r}")
        if self.target not in vocab:
            raise ValueError(f"target {self.target!r} outside vocabulary for role {self.role}")


def export_finetune_corpus(runs: Iterable, role: str, out: str | Path, rng: random.Random) -> int:
    """Write a fine-tuning corpus JSONL from scored pipeline runs.

    Selector corpora drop instances where both branches were wrong; trust
    corpora keep every instance. Branch accuracies for both-correct
    weighting are computed over the provided runs, which should be the
    training split only.
    """
    if role not in ("selector", "twe"):
        raise ValueError(f"unknown export role {role!r}")
    scored = []
    for run in runs:
        if not run.gold:
            raise MissingGold(run.instance_id)
        correct_a = (not run.record_a.failed) and exact_match(run.record_a.answer, run.gold, run.answer_style)
        correct_b = (not run.record_b.failed) and exact_match(run.record_b.answer, run.gold, run.answer_style)
        scored.append((run, correct_a, correct_b))

    records = []
    if role == "selector":
        n = len(scored)
        acc_a = sum(ca for _, ca, _ in scored) / n if n else 0.0
        acc_b = sum(cb for _, _, cb in scored) / n if n else 0.0
        for run, ca, cb in scored:
            label = make_selector_label(ca, cb, acc_a, acc_b, rng)
            if label is None:
                continue
            records.append(
                TrainRecord(
                    prompt=run.prompts["ans_selector"],
                    target=label.token,
                    instance_id=run.instance_id,
                    role="selector",
                )
            )
    else:
        for run, ca, cb in scored:
            records.append(
                TrainRecord(
                    prompt=run.prompts["tw_evaluator"],
                    target=make_twe_label(ca or cb),
                    instance_id=run.instance_id,
                    role="twe",
                )
            )

    out = Path(out)
    with out.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "prompt": rec.prompt,
                        "target": rec.target,
                        "instance_id": rec.instance_id,
                        "role": rec.role,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )
    return len(records)
