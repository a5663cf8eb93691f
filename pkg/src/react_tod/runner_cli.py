"""Batch simulation driver and artifact exporter.

`simulate` runs N seeded dialogues and writes one JSON record per dialogue
(logs.jsonl), a metrics report, an issues report and a run manifest. With
the scripted backend, dialogue i replays bundled fixture (seed+i) mod
#fixtures, so runs are deterministic; with the http backend, dialogue i
pairs the live agent with an agenda simulator on goal seed seed+i.

Exit codes: 0 ok, 2 usage error, 3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import evaluator
from .domain_db import FIXTURE_DB_PATH, BookingLedger, load_database
from .fixtures import load_fixtures, replay_fixture
from .llm_backend import (
    BackendError,
    CostLedger,
    HTTPBackend,
    PriceTable,
    ScriptedBackend,
    Usage,
)
from .logs import DialogueLog
from .react_engine import DialogueAborted, make_session, run_dialogue
from .user_simulator import AgendaUser, generate_goal

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_BACKEND = 3


@dataclass
class RunConfig:
    dialogues: int
    seed: int
    backend: str  # "scripted" | "http"
    model: str = "gpt-3.5-turbo-0301"
    exemplar_mode: str = "generic"
    topk: int = 1
    max_steps: int = 8
    max_turns: int = 20
    out_dir: Path = Path("runs/out")
    db_path: Path = FIXTURE_DB_PATH
    prices_path: Path | None = None

    def validate(self) -> None:
        if self.dialogues < 1:
            raise ValueError("dialogue count must be >= 1")
        if self.backend not in ("scripted", "http"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if self.exemplar_mode not in ("generic", "domain"):
            raise ValueError(f"unknown exemplar mode {self.exemplar_mode!r}")
        if not Path(self.db_path).exists():
            raise ValueError(f"database file not found: {self.db_path}")
        if self.prices_path is not None and not Path(self.prices_path).exists():
            raise ValueError(f"price table not found: {self.prices_path}")


@dataclass
class RunManifest:
    config: dict
    seeds: list[int]
    started_at: float
    finished_at: float
    metrics: dict
    total_cost: str
    issue_histogram: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "seeds": self.seeds,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "metrics": self.metrics,
            "total_cost": self.total_cost,
            "issue_histogram": self.issue_histogram,
        }


def _load_prices(config: RunConfig) -> PriceTable:
    if config.prices_path is None:
        return PriceTable()
    data = json.loads(Path(config.prices_path).read_text())
    return PriceTable({model: (r["input"], r["output"]) for model, r in data.items()})


def run_one_dialogue(config: RunConfig, db, seed: int, backend=None) -> DialogueLog:
    """Run dialogue for one seed; independent of every other dialogue."""
    if config.backend == "scripted":
        fixtures = load_fixtures()
        fixture = fixtures[seed % len(fixtures)]
        return replay_fixture(fixture, db, max_turns=config.max_turns)
    goal = generate_goal(db, seed)
    session = make_session(
        db,
        ledger=BookingLedger(),
        exemplar_mode=config.exemplar_mode,
        goal=goal,
        model=config.model,
    )
    user = AgendaUser(goal, db, seed=seed)
    return run_dialogue(
        session, user, backend, max_turns=config.max_turns, max_steps=config.max_steps
    )


def run_batch(config: RunConfig) -> RunManifest:
    config.validate()
    db = load_database(config.db_path)
    prices = _load_prices(config)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    logs_path = out_dir / "logs.jsonl"

    backend = None
    if config.backend == "http":
        backend = HTTPBackend()

    cost = CostLedger()
    seeds = [config.seed + i for i in range(config.dialogues)]
    scores = []
    all_issues = []
    started = time.time()

    with logs_path.open("w") as handle:
        for seed in seeds:
            try:
                log = run_one_dialogue(config, db, seed, backend=backend)
            except DialogueAborted as exc:
                handle.write(json.dumps(exc.partial_log.to_dict()) + "\n")
                handle.flush()
                raise
            handle.write(json.dumps(log.to_dict()) + "\n")
            handle.flush()
            if log.usage.total and config.backend == "http":
                cost.record(config.model, Usage(log.usage.input_tokens, log.usage.output_tokens), prices)
            scores.append(evaluator.score_dialogue(log.goal, log, db))
            all_issues.extend(evaluator.analyze_trace(log, db))

    metrics = evaluator.aggregate(scores, cost)
    histogram = evaluator.issue_histogram(all_issues)

    (out_dir / "metrics.txt").write_text(evaluator.render_metrics_table(metrics) + "\n")
    (out_dir / "metrics.json").write_text(json.dumps(evaluator.metrics_to_dict(metrics), indent=2) + "\n")
    (out_dir / "issues.json").write_text(
        json.dumps(
            {"histogram": histogram, "issues": [i.to_dict() for i in all_issues]}, indent=2
        )
        + "\n"
    )

    manifest = RunManifest(
        config={
            "dialogues": config.dialogues,
            "seed": config.seed,
            "backend": config.backend,
            "model": config.model,
            "exemplar": config.exemplar_mode,
            "db": str(config.db_path),
        },
        seeds=seeds,
        started_at=started,
        finished_at=time.time(),
        metrics=evaluator.metrics_to_dict(metrics),
        total_cost=str(cost.total_cost),
        issue_histogram=histogram,
    )
    (out_dir / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")
    return manifest


def read_logs(path: str | Path) -> list[DialogueLog]:
    logs = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            logs.append(DialogueLog.from_dict(json.loads(line)))
    return logs


def export_traces(logs_path: str | Path, issue_kind: str | None = None) -> str:
    """Human-readable Thought/Action/Input/Observation dump, optionally filtered."""
    db = load_database(FIXTURE_DB_PATH)
    chunks = []
    for index, log in enumerate(read_logs(logs_path)):
        if issue_kind is not None:
            kinds = {i.kind for i in evaluator.analyze_trace(log, db)}
            if issue_kind not in kinds:
                continue
        lines = [f"=== dialogue {index} (goal domains: {', '.join(log.goal.domains)}) ==="]
        for turn_index, turn in enumerate(log.turns):
            lines.append(f"--- turn {turn_index} ---")
            lines.append(f"User: {turn.user_text}")
            for step in turn.trace.rendered_steps:
                lines.append(step)
            lines.append(f"System: {turn.system_text}")
        chunks.append("\n".join(lines))
    return "\n\n".join(chunks) + ("\n" if chunks else "")


def sample_dialogues(logs_path: str | Path, k: int, seed: int, out_path: str | Path) -> int:
    """Seeded uniform sample without replacement, preserving record order."""
    lines = [line for line in Path(logs_path).read_text().splitlines() if line.strip()]
    if k > len(lines):
        raise ValueError(f"cannot sample {k} from {len(lines)} records")
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(lines)), k))
    Path(out_path).write_text("".join(lines[i] + "\n" for i in chosen))
    return k


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="react-tod", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="run a batch of seeded dialogues")
    simulate.add_argument("--db", default=str(FIXTURE_DB_PATH))
    simulate.add_argument("--dialogues", type=int, required=True)
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--backend", choices=["http", "scripted"], default="scripted")
    simulate.add_argument("--model", default="gpt-3.5-turbo-0301")
    simulate.add_argument("--exemplar", choices=["generic", "domain"], default="generic")
    simulate.add_argument("--out", required=True)
    simulate.add_argument("--prices", default=None)
    simulate.add_argument("--max-turns", type=int, default=20)
    simulate.add_argument("--max-steps", type=int, default=8)

    report = commands.add_parser("report", help="recompute metrics from a log file")
    report.add_argument("--logs", required=True)

    traces = commands.add_parser("traces", help="dump readable traces from a log file")
    traces.add_argument("--logs", required=True)
    traces.add_argument("--issue", default=None, choices=list(evaluator.ISSUE_KINDS))

    sample = commands.add_parser("sample", help="seeded sample of dialogue records")
    sample.add_argument("--logs", required=True)
    sample.add_argument("-k", type=int, required=True)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--out", default=None)

    serve = commands.add_parser("serve", help="start the human-evaluation chat service")
    serve.add_argument("--config", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        if args.command == "simulate":
            config = RunConfig(
                dialogues=args.dialogues,
                seed=args.seed,
                backend=args.backend,
                model=args.model,
                exemplar_mode=args.exemplar,
                out_dir=Path(args.out),
                db_path=Path(args.db),
                prices_path=Path(args.prices) if args.prices else None,
                max_turns=args.max_turns,
                max_steps=args.max_steps,
            )
            try:
                config.validate()
            except ValueError as exc:
                parser.error(str(exc))
            manifest = run_batch(config)
            print(json.dumps(manifest.metrics["display"], indent=2))
            print(f"artifacts written to {config.out_dir}")
            return EXIT_OK

        if args.command == "report":
            db = load_database(FIXTURE_DB_PATH)
            logs = read_logs(args.logs)
            if not logs:
                print("no dialogue records found")
                return EXIT_OK
            scores = [evaluator.score_dialogue(log.goal, log, db) for log in logs]
            print(evaluator.render_metrics_table(evaluator.aggregate(scores)))
            return EXIT_OK

        if args.command == "traces":
            print(export_traces(args.logs, issue_kind=args.issue), end="")
            return EXIT_OK

        if args.command == "sample":
            out = args.out or f"{args.logs}.sample-k{args.k}.jsonl"
            try:
                sample_dialogues(args.logs, args.k, args.seed, out)
            except ValueError as exc:
                parser.error(str(exc))
            print(f"wrote {args.k} records to {out}")
            return EXIT_OK

        if args.command == "serve":
            from .eval_service import serve_from_config

            serve_from_config(Path(args.config))
            return EXIT_OK
    except (BackendError, DialogueAborted) as exc:
        print(f"backend failure: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
