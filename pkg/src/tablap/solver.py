"""Answer generation branches.

Branch B prompts a planner model for step-by-step reasoning plus an
executable calculation script, runs the script in the sandbox, and merges
the script answer with the model's direct answer: when both exist and
disagree, the executed answer wins only if it is numeric; when execution
fails, the direct answer is used. Branch A samples several chain-of-thought
completions and takes the most frequent normalized answer, and can also be
fed from an external predictions file.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Optional

from .gateway import Gateway, render
from .metrics import contains_number, normalize_answer
from .prompts import DEFAULT_TEMPLATES
from .sandbox import ExecResult, SandboxRequest
from .table import Question, Table, flatten_table

BRANCH_A = "A_sota"
BRANCH_B = "B_numsolver"

_FENCED_BLOCK = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_FINAL_ANSWER = re.compile(r"final answer\s*:", re.IGNORECASE)


class ParseFailure(ValueError):
    """Model response carried neither a code block nor a final answer."""


class NoAnswer(ValueError):
    """Neither the executed script nor the direct answer produced anything."""


@dataclass(frozen=True)
class SolverOutput:
    reasoning: str
    script: Optional[str]
    direct_answer: Optional[str]
    raw: str


@dataclass(frozen=True)
class AnswerRecord:
    """One branch's answer. provenance: script | direct | vote | external."""

    branch: str
    answer: str
    reasoning: str
    provenance: str
    failed: bool = False
    trace: dict = field(default_factory=dict)

    @staticmethod
    def failure(branch: str, reason: str, trace: Optional[dict] = None) -> "AnswerRecord":
        return AnswerRecord(
            branch=branch, answer="", reasoning="", provenance="direct",
            failed=True, trace={"error": reason, **(trace or {})},
        )


def parse_solver_response(raw: str) -> SolverOutput:
    """Split a planner completion into reasoning, script, and direct answer.

    The script is the content of the last fenced code block; the direct
    answer is the text following the last "Final Answer:" marker.
    """
    blocks = _FENCED_BLOCK.findall(raw)
    script = blocks[-1].strip() if blocks else None
    if script == "":
        script = None

    direct = None
    matches = list(_FINAL_ANSWER.finditer(raw))
    if matches:
        tail = raw[matches[-1].end():].strip()
        direct = tail.split("\n", 1)[0].strip() or None

    if script is None and direct is None:
        raise ParseFailure("no code block and no final-answer marker in response")

    reasoning = _FENCED_BLOCK.sub("", raw).strip()
    return SolverOutput(reasoning=reasoning, script=script, direct_answer=direct, raw=raw)


def resolve_answer(direct: Optional[str], exec_result: Optional[ExecResult]) -> tuple[str, str]:
    """Merge the direct model answer with the executed script answer.

    The script answer is the last non-empty stdout line of a successful
    execution. A script answer that differs from the direct answer wins
    only when it contains a numeric token; otherwise the direct answer is
    kept. Failed or absent executions fall back to the direct answer.
    """
    script_answer = exec_result.last_stdout_line() if exec_result is not None and exec_result.ok else None

    if script_answer is not None:
        if direct is None:
            return script_answer, "script"
        if normalize_answer(script_answer) == normalize_answer(direct):
            return script_answer, "script"
        if contains_number(script_answer):
            return script_answer, "script"
        return direct, "direct"
    if direct is not None:
        return direct, "direct"
    raise NoAnswer("no executed answer and no direct answer")


def solve_numerical(table: Table, question: Question, gateway: Gateway, sandbox, timeout_s: float = 10.0) -> AnswerRecord:
    """Run the planner branch end to end for one instance."""
    prompt = render(
        DEFAULT_TEMPLATES["numsolver"],
        {"table_flat": flatten_table(table), "question": question.text},
    )
    completion = gateway.complete("numsolver", prompt)
    trace = {
        "prompt": prompt,
        "completion": completion.text,
        "cache_key": completion.cache_key,
        "from_cache": completion.from_cache,
        "latency_ms": completion.latency_ms,
    }
    try:
        parsed = parse_solver_response(completion.text)
    except ParseFailure as e:
        return AnswerRecord.failure(BRANCH_B, str(e), trace)

    exec_result = None
    if parsed.script is not None:
        exec_result = sandbox.execute(SandboxRequest(script=parsed.script, timeout_s=timeout_s))
        trace["exec"] = {
            "exit_code": exec_result.exit_code,
            "timed_out": exec_result.timed_out,
            "stdout": exec_result.stdout,
            "stderr": exec_result.stderr,
            "duration_ms": exec_result.duration_ms,
        }
    try:
        answer, provenance = resolve_answer(parsed.direct_answer, exec_result)
    except NoAnswer as e:
        return AnswerRecord.failure(BRANCH_B, str(e), trace)
    return AnswerRecord(
        branch=BRANCH_B, answer=answer, reasoning=parsed.reasoning,
        provenance=provenance, trace=trace,
    )


def self_consistency_vote(answers: list[str], normalizer: Callable[[str], str] = normalize_answer) -> str:
    """Most frequent answer under normalization.

    Ties break toward the class seen earliest, and the returned string is
    the earliest original member of the winning class.
    """
    if not answers:
        raise ValueError("no answers to vote over")
    keys = [normalizer(a) for a in answers]
    counts = Counter(keys)
    first_index = {}
    for i, k in enumerate(keys):
        first_index.setdefault(k, i)
    winner = max(counts, key=lambda k: (counts[k], -first_index[k]))
    return answers[first_index[winner]]


def solve_self_consistency(table: Table, question: Question, gateway: Gateway) -> AnswerRecord:
    """Branch A: sample several chain-of-thought completions and vote."""
    role = gateway.role("sota_branch")
    prompt = render(
        DEFAULT_TEMPLATES["sota_branch"],
        {"table_flat": flatten_table(table), "question": question.text},
    )
    samples = []
    trace = {"prompt": prompt, "samples": []}
    for i in range(role.n_samples):
        completion = gateway.complete("sota_branch", prompt, sample_index=i)
        trace["samples"].append(
            {
                "completion": completion.text,
                "cache_key": completion.cache_key,
                "from_cache": completion.from_cache,
                "latency_ms": completion.latency_ms,
            }
        )
        answer = _extract_final_answer(completion.text)
        if answer is not None:
            samples.append((answer, completion.text))
    if not samples:
        return AnswerRecord.failure(BRANCH_A, "no sample produced a parseable answer", trace)
    answer = self_consistency_vote([a for a, _ in samples])
    reasoning = next(text for a, text in samples if a == answer)
    return AnswerRecord(branch=BRANCH_A, answer=answer, reasoning=reasoning, provenance="vote", trace=trace)


def external_answer(record: dict) -> AnswerRecord:
    """Branch A from an external predictions file record {id, answer, reasoning}."""
    answer = str(record.get("answer", "")).strip()
    if not answer:
        return AnswerRecord.failure(BRANCH_A, "external prediction has no answer")
    return AnswerRecord(
        branch=BRANCH_A, answer=answer, reasoning=str(record.get("reasoning", "")),
        provenance="external", trace={"external_id": record.get("id")},
    )


def _extract_final_answer(raw: str) -> Optional[str]:
    matches = list(_FINAL_ANSWER.finditer(raw))
    if not matches:
        return None
    tail = raw[matches[-1].end():].strip()
    return tail.split("\n", 1)[0].strip() or None
