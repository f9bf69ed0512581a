"""End-to-end orchestration: dual-branch generation, selection, trust
evaluation, and rejection filtering over a dataset.

Branch generation and selection for different instances may run on a
thread pool, but trust-filter transitions are applied by a single
sequencer in dataset order, so results are independent of the worker
count. Every run record is appended to a JSONL log as soon as it is
final, and reruns resume from that log by instance id.
"""

from __future__ import annotations

import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .datasets import QaInstance
from .gateway import CacheMiss, CompletionCache, Gateway, ModelRole, render, transport_from_env
from .metrics import Metrics, ScoredRun, compute_metrics, exact_match
from .prompts import DEFAULT_TEMPLATES
from .sandbox import StubSandbox, SubprocessSandbox
from .selection import BranchLabel, SelectionInput, select
from .solver import (
    BRANCH_A,
    BRANCH_B,
    AnswerRecord,
    external_answer,
    solve_numerical,
    solve_self_consistency,
)
from .trust import RejectionFilter, TrustLabel, evaluate_raw

DEFAULT_CONFIG: dict[str, str] = {
    "api_base_url": "https://api.openai.com/v1",
    "api_key_env": "TABLAP_API_KEY",
    "max_concurrent_requests": "4",
    "mode": "replay",
    "cache_path": "cache.jsonl",
    "branch_a_mode": "self_consistency",
    "branch_a_file": "",
    "filter": "mab",
    "warmup": "50",
    "c": "1.414",
    "seed": "0",
    "default_select": "A",
    "workers": "1",
    "sandbox_enabled": "true",
    "sandbox_runner": "",
    "sandbox_timeout_s": "10",
    "dataset_format": "generic-jsonl",
    "strict_replay": "false",
    # Sampling temperatures are not dictated by any reference run; the
    # sampling branch needs diversity, the judge roles do not.
    "numsolver.model": "gpt-3.5-turbo",
    "numsolver.temperature": "0.0",
    "numsolver.max_tokens": "1024",
    "sota_branch.model": "gpt-3.5-turbo",
    "sota_branch.temperature": "0.7",
    "sota_branch.max_tokens": "1024",
    "sota_branch.n_samples": "5",
    "ans_selector.model": "llama3-8b-instruct",
    "ans_selector.temperature": "0.0",
    "ans_selector.max_tokens": "16",
    "tw_evaluator.model": "llama3-8b-instruct",
    "tw_evaluator.temperature": "0.0",
    "tw_evaluator.max_tokens": "16",
    "ftq_extractor.model": "gpt-4o",
    "ftq_extractor.temperature": "0.0",
    "ftq_extractor.max_tokens": "256",
}

_ROLE_NAMES = ("numsolver", "sota_branch", "ans_selector", "tw_evaluator", "ftq_extractor")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class PipelineConfig:
    values: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_CONFIG))

    @staticmethod
    def from_file(path: str | Path) -> "PipelineConfig":
        """Flat key=value file; blank lines and # comments ignored."""
        values = dict(DEFAULT_CONFIG)
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if key not in DEFAULT_CONFIG:
                raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = value.strip()
        return PipelineConfig(values).validated()

    @staticmethod
    def from_overrides(**overrides: str) -> "PipelineConfig":
        values = dict(DEFAULT_CONFIG)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in DEFAULT_CONFIG:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = str(value)
        return PipelineConfig(values).validated()

    def override(self, **overrides: str) -> "PipelineConfig":
        values = dict(self.values)
        for key, value in overrides.items():
            if value is None:
                continue
            if key not in DEFAULT_CONFIG:
                raise ConfigError(f"unknown config key {key!r}")
            values[key] = str(value)
        return PipelineConfig(values).validated()

    def validated(self) -> "PipelineConfig":
        if self.mode not in ("live", "record", "replay"):
            raise ConfigError(f"mode must be live/record/replay, got {self.mode!r}")
        if self.mode in ("record", "replay") and not self.values["cache_path"]:
            raise ConfigError(f"{self.mode} mode requires cache_path")
        if self.filter not in ("ew", "mab", "none"):
            raise ConfigError(f"filter must be ew/mab/none, got {self.filter!r}")
        if self.filter in ("ew", "mab") and self.values["seed"] == "":
            raise ConfigError(f"filter {self.filter} requires a seed")
        if self.branch_a_mode not in ("self_consistency", "external_file"):
            raise ConfigError(f"branch_a_mode must be self_consistency or external_file")
        if self.branch_a_mode == "external_file" and not self.values["branch_a_file"]:
            raise ConfigError("branch_a_mode=external_file requires branch_a_file")
        if self.values["default_select"] not in ("A", "B"):
            raise ConfigError("default_select must be A or B")
        self.roles()  # validates role numbers
        return self

    # typed accessors for the common fields
    @property
    def mode(self) -> str:
        return self.values["mode"]

    @property
    def filter(self) -> str:
        return self.values["filter"]

    @property
    def branch_a_mode(self) -> str:
        return self.values["branch_a_mode"]

    @property
    def seed(self) -> int:
        return int(self.values["seed"])

    @property
    def warmup(self) -> int:
        return int(self.values["warmup"])

    @property
    def c(self) -> float:
        return float(self.values["c"])

    @property
    def workers(self) -> int:
        return max(1, int(self.values["workers"]))

    @property
    def sandbox_timeout_s(self) -> float:
        return float(self.values["sandbox_timeout_s"])

    def roles(self) -> dict[str, ModelRole]:
        roles = {}
        for name in _ROLE_NAMES:
            roles[name] = ModelRole(
                role=name,
                model_name=self.values[f"{name}.model"],
                temperature=float(self.values[f"{name}.temperature"]),
                max_tokens=int(self.values[f"{name}.max_tokens"]),
                n_samples=int(self.values.get(f"{name}.n_samples", "1")),
            )
        return roles

    def dump(self) -> str:
        return "\n".join(f"{k}={self.values[k]}" for k in sorted(self.values))


def rng_substream(seed: int, name: str) -> random.Random:
    """Named deterministic substream of the run seed."""
    return random.Random(f"{seed}:{name}")


def make_gateway(cfg: PipelineConfig, transport=None) -> Gateway:
    cache = CompletionCache(cfg.values["cache_path"]) if cfg.values["cache_path"] else None
    if cfg.mode in ("live", "record") and transport is None:
        transport = transport_from_env(cfg.values["api_base_url"], cfg.values["api_key_env"])
    return Gateway(
        roles=cfg.roles(),
        mode=cfg.mode,
        cache=cache,
        transport=transport,
        max_concurrent_requests=int(cfg.values["max_concurrent_requests"]),
    )


def make_sandbox(cfg: PipelineConfig):
    if cfg.values["sandbox_enabled"].lower() not in ("1", "true", "yes"):
        return StubSandbox()
    if cfg.values["sandbox_runner"]:
        return SubprocessSandbox(runner_cmd=cfg.values["sandbox_runner"])
    return SubprocessSandbox()


@dataclass(frozen=True)
class RunRecord:
    """Full per-instance trace of one pipeline pass."""

    instance_id: str
    question: str
    answer_style: str
    gold: Optional[tuple[str, ...]]
    record_a: AnswerRecord
    record_b: AnswerRecord
    selected: Optional[str]
    ans_best: str
    raw_trust: Optional[TrustLabel]
    emitted_trust: Optional[TrustLabel]
    arm: Optional[int]
    gold_correct: Optional[bool]
    correct_a: Optional[bool]
    correct_b: Optional[bool]
    prompts: dict
    completions: dict
    timings: dict
    cache_hits: int
    failed: bool = False
    error: Optional[str] = None

    def __post_init__(self):
        if not self.failed:
            chosen = self.record_a if self.selected == "A" else self.record_b
            if self.ans_best != chosen.answer:
                raise ValueError("ans_best must equal the selected branch's answer")

    def to_json_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "question": self.question,
            "answer_style": self.answer_style,
            "gold": list(self.gold) if self.gold is not None else None,
            "record_a": _answer_record_dict(self.record_a),
            "record_b": _answer_record_dict(self.record_b),
            "selected": self.selected,
            "ans_best": self.ans_best,
            "raw_trust": _trust_dict(self.raw_trust),
            "emitted_trust": _trust_dict(self.emitted_trust),
            "arm": self.arm,
            "gold_correct": self.gold_correct,
            "correct_a": self.correct_a,
            "correct_b": self.correct_b,
            "prompts": self.prompts,
            "completions": self.completions,
            "timings": self.timings,
            "cache_hits": self.cache_hits,
            "failed": self.failed,
            "error": self.error,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "RunRecord":
        return RunRecord(
            instance_id=data["instance_id"],
            question=data["question"],
            answer_style=data["answer_style"],
            gold=tuple(data["gold"]) if data["gold"] is not None else None,
            record_a=_answer_record_from_dict(data["record_a"]),
            record_b=_answer_record_from_dict(data["record_b"]),
            selected=data["selected"],
            ans_best=data["ans_best"],
            raw_trust=_trust_from_dict(data["raw_trust"]),
            emitted_trust=_trust_from_dict(data["emitted_trust"]),
            arm=data["arm"],
            gold_correct=data["gold_correct"],
            correct_a=data["correct_a"],
            correct_b=data["correct_b"],
            prompts=data["prompts"],
            completions=data["completions"],
            timings=data["timings"],
            cache_hits=data["cache_hits"],
            failed=data["failed"],
            error=data["error"],
        )

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, ensure_ascii=False)


def _answer_record_dict(rec: AnswerRecord) -> dict:
    return {
        "branch": rec.branch,
        "answer": rec.answer,
        "reasoning": rec.reasoning,
        "provenance": rec.provenance,
        "failed": rec.failed,
        "trace": rec.trace,
    }


def _answer_record_from_dict(data: dict) -> AnswerRecord:
    return AnswerRecord(
        branch=data["branch"],
        answer=data["answer"],
        reasoning=data["reasoning"],
        provenance=data["provenance"],
        failed=data["failed"],
        trace=data["trace"],
    )


def _trust_dict(label: Optional[TrustLabel]) -> Optional[dict]:
    if label is None:
        return None
    return {"value": label.value, "source": label.source}


def _trust_from_dict(data: Optional[dict]) -> Optional[TrustLabel]:
    if data is None:
        return None
    return TrustLabel(value=data["value"], source=data["source"])


@dataclass
class _Generated:
    """Phase-1 output for one instance, before trust filtering."""

    instance: QaInstance
    record_a: AnswerRecord
    record_b: AnswerRecord
    selected: Optional[BranchLabel]
    raw_trust: Optional[TrustLabel]
    prompts: dict
    completions: dict
    timings: dict
    cache_hits: int
    error: Optional[str] = None


def _generate_one(
    inst: QaInstance,
    cfg: PipelineConfig,
    gateway: Gateway,
    sandbox,
    external_map: Optional[dict],
) -> _Generated:
    prompts: dict = {}
    completions: dict = {}
    timings: dict = {}
    cache_hits = 0

    if external_map is not None:
        rec = external_map.get(inst.id)
        record_a = external_answer(rec) if rec is not None else AnswerRecord.failure(
            BRANCH_A, f"no external prediction for id {inst.id}"
        )
        timings["branch_a_ms"] = 0
    else:
        record_a = solve_self_consistency(inst.table, inst.question, gateway)
        prompts["sota_branch"] = record_a.trace.get("prompt", "")
        timings["branch_a_ms"] = sum(
            0 if s.get("from_cache") else s.get("latency_ms", 0) for s in record_a.trace.get("samples", [])
        )
        cache_hits += sum(1 for s in record_a.trace.get("samples", []) if s.get("from_cache"))

    record_b = solve_numerical(inst.table, inst.question, gateway, sandbox, timeout_s=cfg.sandbox_timeout_s)
    prompts["numsolver"] = record_b.trace.get("prompt", "")
    timings["branch_b_ms"] = (0 if record_b.trace.get("from_cache") else record_b.trace.get("latency_ms", 0)) + (
        record_b.trace.get("exec", {}).get("duration_ms", 0)
    )
    cache_hits += int(bool(record_b.trace.get("from_cache")))

    sel_input = SelectionInput(
        question=inst.question,
        table_title=inst.table.title,
        table_headers=inst.table.headers,
        record_a=record_a,
        record_b=record_b,
    )
    # The rendered judge prompts go into the record even when the call is
    # bypassed; corpus export reuses them.
    prompts["ans_selector"] = render(DEFAULT_TEMPLATES["ans_selector"], sel_input.prompt_slots())
    prompts["tw_evaluator"] = render(DEFAULT_TEMPLATES["tw_evaluator"], sel_input.prompt_slots())

    if record_a.failed and record_b.failed:
        return _Generated(
            instance=inst, record_a=record_a, record_b=record_b, selected=None,
            raw_trust=None, prompts=prompts, completions=completions, timings=timings,
            cache_hits=cache_hits, error="both branches failed",
        )

    label, sel_trace = select(sel_input, gateway, default=cfg.values["default_select"])
    if sel_trace.get("bypassed"):
        timings["select_ms"] = 0
    else:
        completions["ans_selector"] = sel_trace["completion"]
        timings["select_ms"] = 0 if sel_trace["from_cache"] else sel_trace["latency_ms"]
        cache_hits += int(sel_trace["from_cache"])

    raw_trust, trust_trace = evaluate_raw(sel_input, gateway)
    completions["tw_evaluator"] = trust_trace["completion"]
    timings["trust_ms"] = 0 if trust_trace["from_cache"] else trust_trace["latency_ms"]
    cache_hits += int(trust_trace["from_cache"])

    return _Generated(
        instance=inst, record_a=record_a, record_b=record_b, selected=label,
        raw_trust=raw_trust, prompts=prompts, completions=completions,
        timings=timings, cache_hits=cache_hits,
    )


def _finalize(gen: _Generated, filt: RejectionFilter) -> RunRecord:
    inst = gen.instance
    if gen.error is not None:
        return RunRecord(
            instance_id=inst.id, question=inst.question.text, answer_style=inst.style,
            gold=inst.gold_answer, record_a=gen.record_a, record_b=gen.record_b,
            selected=None, ans_best="", raw_trust=None, emitted_trust=None, arm=None,
            gold_correct=None, correct_a=None, correct_b=None, prompts=gen.prompts,
            completions=gen.completions, timings=gen.timings, cache_hits=gen.cache_hits,
            failed=True, error=gen.error,
        )
    chosen = gen.record_a if gen.selected.value == "A" else gen.record_b
    emitted, arm = filt.apply(gen.raw_trust)
    gold_correct = correct_a = correct_b = None
    if inst.gold_answer is not None:
        gold_correct = exact_match(chosen.answer, inst.gold_answer, inst.style)
        correct_a = (not gen.record_a.failed) and exact_match(gen.record_a.answer, inst.gold_answer, inst.style)
        correct_b = (not gen.record_b.failed) and exact_match(gen.record_b.answer, inst.gold_answer, inst.style)
        filt.update(gen.raw_trust, emitted, arm, gold_correct)
    return RunRecord(
        instance_id=inst.id, question=inst.question.text, answer_style=inst.style,
        gold=inst.gold_answer, record_a=gen.record_a, record_b=gen.record_b,
        selected=gen.selected.value, ans_best=chosen.answer, raw_trust=gen.raw_trust,
        emitted_trust=emitted, arm=arm, gold_correct=gold_correct,
        correct_a=correct_a, correct_b=correct_b, prompts=gen.prompts,
        completions=gen.completions, timings=gen.timings, cache_hits=gen.cache_hits,
    )


def load_run_log(path: str | Path) -> list[RunRecord]:
    records = []
    path = Path(path)
    if not path.exists():
        return records
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(RunRecord.from_json_dict(json.loads(line)))
    return records


def run_pipeline(
    dataset: list[QaInstance],
    cfg: PipelineConfig,
    gateway: Gateway,
    sandbox,
    runs_path: Optional[str | Path] = None,
    resume: bool = True,
) -> tuple[list[RunRecord], Optional[Metrics]]:
    """Run the full pipeline over a dataset in dataset order.

    Per-instance failures are recorded, never raised. When runs_path is
    given, records append incrementally and an existing log is resumed by
    instance id (its records replay through the filter to rebuild state).
    Returns all records plus metrics over the scored, non-failed ones.
    """
    external_map = None
    if cfg.branch_a_mode == "external_file":
        external_map = {}
        with Path(cfg.values["branch_a_file"]).open(encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    external_map[str(rec["id"])] = rec

    filt = RejectionFilter(cfg.filter, warmup=cfg.warmup, c=cfg.c, seed=_filter_seed(cfg))

    done: list[RunRecord] = []
    if runs_path is not None and resume:
        done = load_run_log(runs_path)
        for rec in done:
            if rec.gold_correct is not None and rec.raw_trust is not None:
                filt.update(rec.raw_trust, rec.emitted_trust, rec.arm, rec.gold_correct)
    done_ids = {rec.instance_id for rec in done}
    todo = [inst for inst in dataset if inst.id not in done_ids]

    log_fh = None
    if runs_path is not None:
        Path(runs_path).parent.mkdir(parents=True, exist_ok=True)
        log_fh = Path(runs_path).open("a" if resume else "w", encoding="utf-8")

    strict_replay = cfg.values["strict_replay"].lower() in ("1", "true", "yes")

    def generate(inst: QaInstance) -> _Generated:
        try:
            return _generate_one(inst, cfg, gateway, sandbox, external_map)
        except Exception as e:  # per-instance failures never abort the run
            if strict_replay and isinstance(e, CacheMiss):
                raise
            return _Generated(
                instance=inst,
                record_a=AnswerRecord.failure(BRANCH_A, "generation aborted"),
                record_b=AnswerRecord.failure(BRANCH_B, "generation aborted"),
                selected=None, raw_trust=None, prompts={}, completions={}, timings={},
                cache_hits=0, error=f"{type(e).__name__}: {e}",
            )

    records = list(done)
    try:
        if cfg.workers == 1:
            generated = (generate(inst) for inst in todo)
        else:
            executor = ThreadPoolExecutor(max_workers=cfg.workers)
            generated = executor.map(generate, todo)
        for gen in generated:
            record = _finalize(gen, filt)
            records.append(record)
            if log_fh is not None:
                log_fh.write(record.to_json_line() + "\n")
                log_fh.flush()
        if cfg.workers != 1:
            executor.shutdown()
    finally:
        if log_fh is not None:
            log_fh.close()

    scored = [
        ScoredRun(
            correct=r.gold_correct,
            trusted=r.emitted_trust.value,
            correct_a=bool(r.correct_a),
            correct_b=bool(r.correct_b),
        )
        for r in records
        if not r.failed and r.gold_correct is not None
    ]
    metrics = compute_metrics(scored) if scored else None
    return records, metrics


def _filter_seed(cfg: PipelineConfig) -> int:
    # Named substream so filter draws are independent of any other
    # consumer of the run seed.
    return rng_substream(cfg.seed, "filter").randrange(2**63)
