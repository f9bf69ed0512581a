"""Command-line entry points.

Exit codes: 0 success, 1 partial per-instance failures, 2 configuration
or usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .datasets import (
    QaInstance,
    build_ftq_extraction_prompt,
    compute_stats,
    load_dataset,
    parse_extracted_entities,
)
from .metrics import ScoredRun, compute_metrics, exact_match
from .pipeline import (
    ConfigError,
    PipelineConfig,
    load_run_log,
    make_gateway,
    make_sandbox,
    rng_substream,
    run_pipeline,
)
from .selection import export_finetune_corpus
from .table import Question, parse_table
from .trust import FALSE_TOKEN, TRUE_TOKEN, simulate_filter


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.from_file(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides = {}
    for key in ("mode", "filter", "seed", "workers"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = str(value)
    if getattr(args, "cache", None):
        overrides["cache_path"] = args.cache
    if getattr(args, "branch_a_file", None):
        overrides["branch_a_mode"] = "external_file"
        overrides["branch_a_file"] = args.branch_a_file
    if getattr(args, "no_sandbox", False):
        overrides["sandbox_enabled"] = "false"
    return cfg.override(**overrides) if overrides else cfg.validated()


def cmd_run(args) -> int:
    cfg = _load_config(args)
    dataset = load_dataset(args.dataset, args.format or cfg.values["dataset_format"])
    if args.limit:
        dataset = dataset[: args.limit]
    gateway = make_gateway(cfg)
    sandbox = make_sandbox(cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    records, metrics = run_pipeline(
        dataset, cfg, gateway, sandbox,
        runs_path=out_dir / "runs.jsonl", resume=not args.no_resume,
    )
    if metrics is not None:
        (out_dir / "metrics.json").write_text(
            json.dumps(metrics.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(json.dumps(metrics.as_dict(), sort_keys=True))
    n_failed = sum(1 for r in records if r.failed)
    if n_failed:
        print(f"{n_failed}/{len(records)} instances failed", file=sys.stderr)
        return 1
    return 0


def cmd_solve(args) -> int:
    cfg = _load_config(args)
    with open(args.table, encoding="utf-8", newline="") as fh:
        delimiter = "\t" if args.table.endswith(".tsv") else ","
        grid = [list(row) for row in csv.reader(fh, delimiter=delimiter)]
    parsed = parse_table(grid, title=args.title or "")
    inst = QaInstance(
        id="cli-solve",
        question=Question(text=args.question, id="cli-solve"),
        table=parsed.table,
    )
    gateway = make_gateway(cfg)
    sandbox = make_sandbox(cfg)
    records, _ = run_pipeline([inst], cfg, gateway, sandbox, runs_path=None)
    record = records[0]
    print(
        json.dumps(
            {
                "answer": record.ans_best,
                "selected_branch": record.selected,
                "trust_label": record.emitted_trust.token if record.emitted_trust else None,
                "answer_a": record.record_a.answer,
                "answer_b": record.record_b.answer,
                "error": record.error,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
    )
    return 1 if record.failed else 0


def cmd_eval(args) -> int:
    gold_by_id = {}
    for inst in load_dataset(args.gold, args.format):
        if inst.gold_answer is not None:
            gold_by_id[inst.id] = (inst.gold_answer, inst.style)
    scored = []
    rows = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            pid = str(rec["id"])
            if pid not in gold_by_id:
                print(f"prediction {pid} has no gold answer; skipped", file=sys.stderr)
                continue
            gold, style = gold_by_id[pid]
            correct = exact_match(str(rec["answer"]), gold, style)
            trusted = rec.get("trust_label", TRUE_TOKEN) == TRUE_TOKEN
            scored.append(ScoredRun(correct=correct, trusted=trusted))
            rows.append(
                {
                    "id": pid,
                    "answer": rec["answer"],
                    "gold": " | ".join(gold),
                    "correct": correct,
                    "trust_label": TRUE_TOKEN if trusted else FALSE_TOKEN,
                    "label_correct": trusted == correct,
                }
            )
    if not scored:
        print("no predictions matched the gold set", file=sys.stderr)
        return 2
    metrics = compute_metrics(scored)
    # prediction files carry no per-branch information
    report = {k: v for k, v in metrics.as_dict().items() if k not in ("accuracy_a", "accuracy_b")}
    Path(args.report).write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    if args.errors:
        with open(args.errors, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_export_train(args) -> int:
    runs_path = Path(args.runs)
    if runs_path.is_dir():
        runs_path = runs_path / "runs.jsonl"
    runs = [r for r in load_run_log(runs_path) if not r.failed]
    role = {"selector": "selector", "twe": "twe"}[args.target]
    rng = rng_substream(args.seed, "selector_labels")
    count = export_finetune_corpus(runs, role, args.out, rng)
    print(f"wrote {count} records to {args.out}")
    return 0


def cmd_simulate_filter(args) -> int:
    stream = []
    with open(args.stream, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            raw = rec["raw_label"]
            raw_value = raw == TRUE_TOKEN if isinstance(raw, str) else bool(raw)
            stream.append((raw_value, bool(rec["gold_correct"])))
    trace = simulate_filter(stream, args.filter, warmup=args.warmup, c=args.c, seed=args.seed)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for row in trace:
            out.write(json.dumps(row, sort_keys=True) + "\n")
    finally:
        if args.out:
            out.close()
    return 0


def cmd_stats(args) -> int:
    instances = load_dataset(args.dataset, args.format)
    print(json.dumps(compute_stats(instances).as_dict(), indent=2, sort_keys=True))
    return 0


def cmd_extract_ftq(args) -> int:
    cfg = _load_config(args)
    gateway = make_gateway(cfg)
    n_failed = 0
    with open(args.input, encoding="utf-8") as fin, open(args.out, "w", encoding="utf-8") as fout:
        for lineno, line in enumerate(fin, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            question = Question(text=rec["question"], id=str(rec.get("feta_id", lineno)))
            prompt = build_ftq_extraction_prompt(question, rec["answer"])
            try:
                completion = gateway.complete("ftq_extractor", prompt)
                entities = parse_extracted_entities(completion.text)
            except Exception as e:
                print(f"line {lineno}: extraction failed: {e}", file=sys.stderr)
                n_failed += 1
                continue
            out_rec = dict(rec)
            out_rec["answer"] = ", ".join(entities)
            out_rec["long_answer"] = rec["answer"]
            fout.write(json.dumps(out_rec, sort_keys=True, ensure_ascii=False) + "\n")
    return 1 if n_failed else 0


def cmd_config(args) -> int:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    if args.dump:
        print(cfg.dump())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tablap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_gateway_args(p):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--mode", choices=["live", "record", "replay"])
        p.add_argument("--cache", help="completion cache JSONL path")

    p = sub.add_parser("run", help="run the pipeline over a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=["wtq", "ftq", "generic-jsonl"])
    p.add_argument("--out", required=True, help="output directory for runs.jsonl and metrics.json")
    p.add_argument("--filter", choices=["ew", "mab", "none"])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--limit", type=int)
    p.add_argument("--branch-a-file", help="external Branch-A predictions JSONL")
    p.add_argument("--no-sandbox", action="store_true", help="stub script execution")
    p.add_argument("--no-resume", action="store_true")
    add_gateway_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("solve", help="answer one question about one table")
    p.add_argument("--table", required=True, help="CSV/TSV table file, first row = headers")
    p.add_argument("--title", default="")
    p.add_argument("--question", required=True)
    p.add_argument("--no-sandbox", action="store_true")
    add_gateway_args(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("eval", help="score a predictions file against gold answers")
    p.add_argument("--predictions", required=True, help="JSONL {id, answer, trust_label}")
    p.add_argument("--gold", required=True, help="gold dataset file")
    p.add_argument("--format", default="generic-jsonl", choices=["wtq", "ftq", "generic-jsonl"])
    p.add_argument("--report", required=True, help="metrics JSON output")
    p.add_argument("--errors", help="per-instance CSV output")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-train", help="export a fine-tuning corpus from a run log")
    p.add_argument("--runs", required=True, help="runs.jsonl file or directory containing it")
    p.add_argument("--target", required=True, choices=["selector", "twe"])
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_export_train)

    p = sub.add_parser("simulate-filter", help="run a rejection filter over a label stream")
    p.add_argument("--stream", required=True, help="JSONL {raw_label, gold_correct}")
    p.add_argument("--filter", required=True, choices=["ew", "mab", "none"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--c", type=float, default=1.414)
    p.add_argument("--warmup", type=int, default=50)
    p.add_argument("--out", help="trace JSONL path (default stdout)")
    p.set_defaults(func=cmd_simulate_filter)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", required=True, choices=["wtq", "ftq", "generic-jsonl"])
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("extract-ftq", help="extract entity answers from long-form answers")
    p.add_argument("--input", required=True, help="JSONL with question and long answer fields")
    p.add_argument("--out", required=True)
    add_gateway_args(p)
    p.set_defaults(func=cmd_extract_ftq)

    p = sub.add_parser("config", help="show configuration")
    p.add_argument("--config")
    p.add_argument("--dump", action="store_true")
    p.set_defaults(func=cmd_config)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
