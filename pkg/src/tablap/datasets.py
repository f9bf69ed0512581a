"""Dataset loading and statistics.

Three on-disk formats are supported: WTQ-style TSV question files backed
by CSV table files, FeTaQA-style JSONL with inline table arrays, and a
generic JSONL interchange format that round-trips exactly. Token counts
use whitespace splitting throughout so the reported statistics are
reproducible relative to this tokenizer.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .gateway import render
from .prompts import DEFAULT_TEMPLATES
from .table import NUMERICAL_KEYWORDS, Question, Table, flatten_table, is_numerical_question, parse_table

FORMATS = ("wtq", "ftq", "generic-jsonl")


class UnknownFormat(ValueError):
    pass


class MalformedRecord(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class MissingTable(ValueError):
    def __init__(self, instance_id: str, path: str):
        super().__init__(f"instance {instance_id}: table file not found: {path}")
        self.instance_id = instance_id


@dataclass(frozen=True)
class QaInstance:
    id: str
    question: Question
    table: Table
    gold_answer: Optional[tuple[str, ...]] = None
    split: str = "test"
    style: str = "generic"  # answer-entity convention: wtq | ftq | generic

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")
        if self.gold_answer is not None:
            if any(not e.strip() for e in self.gold_answer):
                raise ValueError(f"instance {self.id}: gold answer entities must be non-empty")


@dataclass(frozen=True)
class DatasetStats:
    n_train: int
    n_test: int
    n_numerical_train: int
    n_numerical_test: int
    avg_tokens_per_table: float
    avg_tokens_per_answer: float

    def as_dict(self) -> dict:
        return {
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_numerical_train": self.n_numerical_train,
            "n_numerical_test": self.n_numerical_test,
            "avg_tokens_per_table": self.avg_tokens_per_table,
            "avg_tokens_per_answer": self.avg_tokens_per_answer,
        }


def load_dataset(path: str | Path, format: str) -> list[QaInstance]:
    """Load a dataset file. Any malformed record aborts the load with a
    line-numbered error; a partial result is never returned silently."""
    path = Path(path)
    if format == "generic-jsonl":
        return _load_generic_jsonl(path)
    if format == "wtq":
        return _load_wtq(path)
    if format == "ftq":
        return _load_ftq(path)
    raise UnknownFormat(f"unknown dataset format {format!r} (expected one of {FORMATS})")


def save_dataset(instances: Iterable[QaInstance], path: str | Path) -> None:
    """Write instances in the generic JSONL interchange format."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(
                json.dumps(
                    {
                        "id": inst.id,
                        "question": inst.question.text,
                        "table": {
                            "title": inst.table.title,
                            "headers": list(inst.table.headers),
                            "rows": [list(r) for r in inst.table.rows],
                        },
                        "gold": list(inst.gold_answer) if inst.gold_answer is not None else None,
                        "split": inst.split,
                        "style": inst.style,
                    },
                    sort_keys=True,
                    ensure_ascii=False,
                )
                + "\n"
            )


def _load_generic_jsonl(path: Path) -> list[QaInstance]:
    instances = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as e:
                raise MalformedRecord(lineno, f"invalid JSON: {e}") from None
            try:
                table_rec = rec["table"]
                table = Table(
                    title=table_rec.get("title", ""),
                    headers=tuple(table_rec["headers"]),
                    rows=tuple(tuple(r) for r in table_rec["rows"]),
                    source_id=str(rec["id"]),
                )
                gold = rec.get("gold")
                instances.append(
                    QaInstance(
                        id=str(rec["id"]),
                        question=Question(text=rec["question"], id=str(rec["id"])),
                        table=table,
                        gold_answer=tuple(gold) if gold is not None else None,
                        split=rec.get("split", "test"),
                        style=rec.get("style", "generic"),
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise MalformedRecord(lineno, f"bad record: {e}") from None
    return instances


def _load_wtq(path: Path) -> list[QaInstance]:
    """WTQ-style TSV: columns id, utterance, context, targetValue, where
    context is a CSV table path relative to the TSV's directory and
    multi-entity answers are joined with "|"."""
    root = path.parent
    instances = []
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        required = {"id", "utterance", "context", "targetValue"}
        if reader.fieldnames is None or not required <= set(reader.fieldnames):
            raise MalformedRecord(1, f"WTQ header must contain {sorted(required)}")
        for lineno, rec in enumerate(reader, start=2):
            try:
                instance_id = rec["id"].strip()
                table = _read_table_file(root / rec["context"], instance_id)
                gold = tuple(e.strip() for e in rec["targetValue"].split("|"))
                instances.append(
                    QaInstance(
                        id=instance_id,
                        question=Question(text=rec["utterance"], id=instance_id),
                        table=table,
                        gold_answer=gold,
                        split=rec.get("split", "test").strip() or "test",
                        style="wtq",
                    )
                )
            except MissingTable:
                raise
            except (KeyError, TypeError, ValueError, AttributeError) as e:
                raise MalformedRecord(lineno, f"bad record: {e}") from None
    return instances


def _read_table_file(table_path: Path, instance_id: str) -> Table:
    if not table_path.exists():
        raise MissingTable(instance_id, str(table_path))
    delimiter = "\t" if table_path.suffix.lower() == ".tsv" else ","
    with table_path.open(encoding="utf-8", newline="") as fh:
        grid = [list(row) for row in csv.reader(fh, delimiter=delimiter)]
    parsed = parse_table(grid, title="", source_id=str(table_path))
    return parsed.table


def _load_ftq(path: Path) -> list[QaInstance]:
    """FeTaQA-style JSONL with an inline table_array; answers are
    comma-separated entity lists."""
    instances = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError as e:
                raise MalformedRecord(lineno, f"invalid JSON: {e}") from None
            try:
                instance_id = str(rec.get("feta_id", rec.get("id", lineno)))
                parsed = parse_table(
                    [list(r) for r in rec["table_array"]],
                    title=rec.get("table_page_title", ""),
                    source_id=instance_id,
                )
                answer = rec.get("answer")
                gold = tuple(e.strip() for e in answer.split(", ")) if answer else None
                instances.append(
                    QaInstance(
                        id=instance_id,
                        question=Question(text=rec["question"], id=instance_id),
                        table=parsed.table,
                        gold_answer=gold,
                        split=rec.get("split", "test"),
                        style="ftq",
                    )
                )
            except (KeyError, TypeError, ValueError) as e:
                raise MalformedRecord(lineno, f"bad record: {e}") from None
    return instances


def _tokens(text: str) -> int:
    return len(text.split())


def compute_stats(instances: Iterable[QaInstance]) -> DatasetStats:
    """Counts and whitespace-token averages over flattened tables and gold
    answers (entities joined with ", " before counting)."""
    n = {"train": 0, "test": 0}
    n_num = {"train": 0, "test": 0}
    table_tokens = 0
    n_tables = 0
    answer_tokens = 0
    n_answers = 0
    for inst in instances:
        n[inst.split] += 1
        numerical, _ = is_numerical_question(inst.question, NUMERICAL_KEYWORDS)
        n_num[inst.split] += int(numerical)
        table_tokens += _tokens(flatten_table(inst.table))
        n_tables += 1
        if inst.gold_answer is not None:
            answer_tokens += _tokens(", ".join(inst.gold_answer))
            n_answers += 1
    return DatasetStats(
        n_train=n["train"],
        n_test=n["test"],
        n_numerical_train=n_num["train"],
        n_numerical_test=n_num["test"],
        avg_tokens_per_table=table_tokens / n_tables if n_tables else 0.0,
        avg_tokens_per_answer=answer_tokens / n_answers if n_answers else 0.0,
    )


def build_ftq_extraction_prompt(question: Question, long_answer: str) -> str:
    """Prompt asking the extractor model to keep only the entities that
    answer the question; its completion becomes the gold answer."""
    if not long_answer.strip():
        raise ValueError("long answer is empty")
    return render(
        DEFAULT_TEMPLATES["ftq_extractor"],
        {"question": question.text, "long_answer": long_answer},
    )


def parse_extracted_entities(completion: str) -> tuple[str, ...]:
    """Split an extractor completion into trimmed answer entities."""
    text = completion.strip()
    if not text:
        return ()
    return tuple(e.strip() for e in text.split(", ") if e.strip())
