"""Operator surface: run tasks and benchmarks, manage fixtures, export instruction data."""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

from . import engine, evaluation, fixtures
from .accounting import cost_per_1k, default_pricing, get_tokenizer
from .engine import Runtime, Task
from .errors import AlmkitError, ConfigError
from .evaluation import BenchConfig, render_table
from .model import HttpBackend, ModelClient, ReplayStore, ScriptedBackend
from .prompting import PromptTemplate, default_exemplars, default_templates, load_exemplars
from .tools import FailureInjection, FixtureToolBackend, build_registry

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


@dataclass
class RunConfig:
    """One declarative document driving a run. Precedence when building it:
    command-line flags, then config file, then environment, then defaults."""

    paradigm: str = "rewoo"
    model_id: str | None = None
    tools: str | None = None          # comma-separated toolset
    exemplars: str | None = None      # path to an exemplar JSONL
    template_dir: str | None = None
    tokenizer: str = "whitespace"
    price: float | None = None
    inject_failure: str = "off"
    replay: str | None = None
    record: str | None = None
    live: bool = False
    scripted_responses: list[str] = field(default_factory=list)
    max_steps: int = engine.DEFAULT_MAX_STEPS
    max_evidence_chars: int | None = None
    parallelism: int = 1
    out: str | None = None
    endpoint: str | None = None
    api_key: str | None = None

    @classmethod
    def build(cls, args: argparse.Namespace) -> "RunConfig":
        cfg = cls()
        cfg.endpoint = os.environ.get("ALMKIT_ENDPOINT")
        cfg.api_key = os.environ.get("ALMKIT_API_KEY") or os.environ.get("OPENAI_API_KEY")
        config_path = getattr(args, "config", None)
        if config_path:
            try:
                document = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config file {config_path}: {exc}") from exc
            known = {f.name for f in fields(cls)}
            for key, value in document.items():
                if key not in known:
                    raise ConfigError(f"unknown config key {key!r}")
                setattr(cfg, key, value)
        for f in fields(cls):
            value = getattr(args, f.name, None)
            if value is not None:
                setattr(cfg, f.name, value)
        return cfg


def _resolve_bundle(cfg: RunConfig) -> fixtures.FixtureBundle | None:
    if not cfg.replay:
        return None
    try:
        return fixtures.load_bundle(cfg.replay)
    except FileNotFoundError as exc:
        # A bare recorded directory (replay.jsonl without bundle metadata)
        # is still replayable; anything else is a configuration problem.
        path = Path(cfg.replay)
        if (path / "replay.jsonl").exists():
            return fixtures.FixtureBundle(
                name=path.name, path=path,
                meta={"name": path.name, "question": "", "toolset": [], "benchmark": path.name})
        raise ConfigError(
            f"replay mode needs a fixture bundle: {exc}. "
            f"Bundled fixtures: {', '.join(fixtures.list_bundles())}"
        ) from exc


def build_runtime(cfg: RunConfig) -> tuple[Runtime, fixtures.FixtureBundle | None, ReplayStore | None]:
    """Assemble the shared runtime for a config. Returns the replay store when
    recording so the caller can persist it afterwards."""
    bundle = _resolve_bundle(cfg)

    toolset: list[str] | None = None
    if cfg.tools:
        toolset = [name.strip() for name in cfg.tools.split(",") if name.strip()]
    elif bundle is not None and bundle.toolset:
        toolset = list(bundle.toolset)

    model_id = cfg.model_id or (bundle.meta.get("model_id") if bundle else None) or "gpt-3.5-turbo"
    tokenizer = get_tokenizer(cfg.tokenizer)

    store: ReplayStore | None = None
    backend = None
    if bundle is not None:
        store = bundle.replay_store("replay")
        tool_backend = (bundle.tool_backend() if (bundle.path / "tools.jsonl").exists()
                        else FixtureToolBackend())
    else:
        tool_backend = None
        if cfg.scripted_responses:
            backend = ScriptedBackend(list(cfg.scripted_responses))
        elif cfg.live:
            backend = HttpBackend(endpoint=cfg.endpoint, api_key=cfg.api_key)
        else:
            raise ConfigError(
                "no model backend configured: pass --replay DIR, set scripted_responses "
                "in the config file, or opt into the network with --live"
            )
        if cfg.record:
            store = ReplayStore(mode="record")

    client = ModelClient(backend=backend, store=store, tokenizer=tokenizer, model_id=model_id)

    templates = PromptTemplate.load(cfg.template_dir) if cfg.template_dir else default_templates()
    exemplars = load_exemplars(cfg.exemplars) if cfg.exemplars else default_exemplars()
    registry = build_registry(toolset, fixture_backend=tool_backend)

    runtime = Runtime(
        model=client,
        registry=registry,
        templates=templates,
        exemplar_sets={"default": exemplars},
        injection=FailureInjection.parse(cfg.inject_failure),
        max_evidence_chars=cfg.max_evidence_chars,
    )
    return runtime, bundle, (store if cfg.record else None)


def _price_for(cfg: RunConfig, model_id: str) -> float:
    if cfg.price is not None:
        return cfg.price
    return default_pricing().price(model_id)


def _check_paradigms(spec: str) -> list[str]:
    paradigms = [p.strip() for p in spec.split(",") if p.strip()]
    unknown = [p for p in paradigms if p not in engine.PARADIGMS]
    if unknown or not paradigms:
        raise ConfigError(f"unknown paradigm {', '.join(unknown) or spec!r}; "
                          f"choose from {', '.join(engine.PARADIGMS)}")
    return paradigms


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = RunConfig.build(args)
    _check_paradigms(cfg.paradigm)
    runtime, bundle, record_store = build_runtime(cfg)

    task = Task(
        id="cli",
        question=args.question,
        toolset=tuple(runtime.registry.names()),
        exemplar_set="default",
    )
    record = engine.run_paradigm(cfg.paradigm, task, runtime, max_steps=cfg.max_steps)

    price = _price_for(cfg, runtime.model.model_id)
    print(f"answer: {record.answer}")
    print(f"steps: {record.steps}")
    print(f"input_tokens: {record.ledger.input_tokens}")
    print(f"output_tokens: {record.ledger.output_tokens}")
    print(f"total_tokens: {record.ledger.total_tokens}")
    print(f"est_cost_per_1k_queries_usd: {cost_per_1k(record.ledger.total_tokens, price):.2f}")
    for warning in record.warnings:
        print(f"warning: {warning}", file=sys.stderr)

    if cfg.out:
        Path(cfg.out).write_text(
            json.dumps(record.to_dict(), ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8")
    if record_store is not None:
        out_dir = Path(cfg.record)
        out_dir.mkdir(parents=True, exist_ok=True)
        record_store.save(out_dir / "replay.jsonl")
    return EXIT_OK


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = RunConfig.build(args)
    paradigms = _check_paradigms(cfg.paradigm)
    runtime, bundle, record_store = build_runtime(cfg)

    dataset_path = Path(args.dataset)
    if not dataset_path.exists() and bundle is not None and args.dataset == "tasks":
        dataset_path = bundle.path / "tasks.jsonl"
    try:
        dataset = evaluation.load_dataset(dataset_path)
    except OSError as exc:
        raise ConfigError(f"cannot read dataset {args.dataset}: {exc}") from exc

    benchmark = bundle.meta.get("benchmark", dataset_path.stem) if bundle else dataset_path.stem
    price = _price_for(cfg, runtime.model.model_id)

    reports, all_scores, all_records = [], [], []
    for paradigm in paradigms:
        bench_config = BenchConfig(
            runtime=runtime,
            benchmark=benchmark,
            toolset=tuple(runtime.registry.names()),
            exemplar_set="default",
            max_steps=cfg.max_steps,
            price_per_1k=price,
            parallelism=cfg.parallelism,
        )
        report, scores, records = evaluation.run_benchmark(dataset, paradigm, bench_config)
        reports.append(report)
        all_scores.extend((paradigm, s) for s in scores)
        all_records.extend(records)

    print(render_table(reports))
    for report in reports:
        for warning in report.warnings:
            print(f"warning [{report.paradigm}]: {warning}", file=sys.stderr)

    out_dir = Path(cfg.out or "bench_out")
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(
        json.dumps([r.to_dict() for r in reports], ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    with open(out_dir / "records.jsonl", "w", encoding="utf-8") as fh:
        for record in all_records:
            fh.write(json.dumps(record.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    with open(out_dir / "scores.jsonl", "w", encoding="utf-8") as fh:
        for paradigm, score in all_scores:
            fh.write(json.dumps({"paradigm": paradigm, **score.to_dict()},
                                ensure_ascii=False, sort_keys=True) + "\n")
    if record_store is not None:
        record_store.save(Path(cfg.record) / "replay.jsonl")
    return EXIT_OK


def cmd_export_instructions(args: argparse.Namespace) -> int:
    cfg = RunConfig.build(args)
    if not cfg.out:
        raise ConfigError("export-instructions needs --out FILE")
    try:
        record_rows = [json.loads(line) for line in Path(args.records).read_text(encoding="utf-8").splitlines() if line.strip()]
        score_rows = [json.loads(line) for line in Path(args.scores).read_text(encoding="utf-8").splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read input files: {exc}") from exc

    try:
        records = [engine.ExecutionRecord.from_dict(row) for row in record_rows]
        scores = [evaluation.ScoredResult.from_dict(row) for row in score_rows]
    except (KeyError, TypeError, AlmkitError) as exc:
        raise ConfigError(f"malformed record or score row: {exc}") from exc

    record_ids = {r.task_id for r in records if r.paradigm == "rewoo"}
    score_ids = {s.task_id for s in scores}
    if not record_ids <= score_ids:
        raise AlmkitError(f"records without scores: {sorted(record_ids - score_ids)}")

    # The export only needs templates and tool descriptions, never a backend.
    toolset: list[str] | None = None
    if cfg.tools:
        toolset = [name.strip() for name in cfg.tools.split(",") if name.strip()]
    elif cfg.replay:
        bundle = _resolve_bundle(cfg)
        if bundle is not None and bundle.toolset:
            toolset = list(bundle.toolset)
    runtime = Runtime(
        model=ModelClient(backend=ScriptedBackend([]), tokenizer=get_tokenizer(cfg.tokenizer)),
        registry=build_registry(toolset),
        templates=PromptTemplate.load(cfg.template_dir) if cfg.template_dir else default_templates(),
        exemplar_sets={"default": default_exemplars()},
    )

    instructions = evaluation.export_planner_instructions(records, scores, runtime)
    out_path = Path(cfg.out)
    with open(out_path, "w", encoding="utf-8") as fh:
        for instruction in instructions:
            fh.write(json.dumps(instruction.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
    print(f"wrote {len(instructions)} instruction records to {out_path}")
    return EXIT_OK


def cmd_fixtures(args: argparse.Namespace) -> int:
    if args.fixtures_command == "list":
        for name in fixtures.list_bundles():
            bundle = fixtures.load_bundle(name)
            react = "rewoo+react" if bundle.react_text() else "rewoo"
            print(f"{name}  [{bundle.meta.get('benchmark')}]  {react}")
        return EXIT_OK
    if args.fixtures_command == "copy":
        src = fixtures.load_bundle(args.name).path
        dest = Path(args.dest) / src.name
        shutil.copytree(src, dest, dirs_exist_ok=True)
        print(f"copied {src.name} to {dest}")
        return EXIT_OK
    raise ConfigError("unknown fixtures command")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--paradigm", help="rewoo, react, direct, or cot (bench accepts a comma list)")
    parser.add_argument("--model", dest="model_id", help="model id for live calls and pricing")
    parser.add_argument("--tools", help="comma-separated toolset (default: replay bundle's toolset)")
    parser.add_argument("--exemplars", help="path to an exemplar JSONL bundle")
    parser.add_argument("--template-dir", dest="template_dir", help="directory with planner/solver/react templates")
    parser.add_argument("--replay", help="fixture bundle directory or bundled fixture name")
    parser.add_argument("--record", help="directory to write recorded model responses into")
    parser.add_argument("--live", action="store_const", const=True, help="allow live HTTP model calls")
    parser.add_argument("--inject-failure", dest="inject_failure",
                        help="off, all, or a comma list of tool names to fail")
    parser.add_argument("--max-steps", dest="max_steps", type=int, help="loop-paradigm step cap")
    parser.add_argument("--tokenizer", help="whitespace or byte_pair[:vocab]")
    parser.add_argument("--price", type=float, help="price per 1k tokens")
    parser.add_argument("--parallelism", type=int, help="concurrent tasks in bench")
    parser.add_argument("--out", help="output file (solve) or directory (bench)")
    parser.add_argument("--config", help="JSON config file mapping run settings")


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="almkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one task and print the answer with token and cost figures")
    solve.add_argument("question")
    _add_run_flags(solve)
    solve.set_defaults(func=cmd_solve)

    bench = sub.add_parser("bench", help="run a JSONL dataset and print a results table")
    bench.add_argument("dataset", help="JSONL dataset of {id, question, answer} (or 'tasks' with --replay)")
    _add_run_flags(bench)
    bench.set_defaults(func=cmd_bench)

    export = sub.add_parser("export-instructions",
                            help="filter correct plan-ahead runs into instruction-tuning data")
    export.add_argument("records", help="records.jsonl from bench")
    export.add_argument("scores", help="scores.jsonl from bench")
    _add_run_flags(export)
    export.set_defaults(func=cmd_export_instructions)

    fixtures_parser = sub.add_parser("fixtures", help="inspect or copy bundled fixtures")
    fixtures_sub = fixtures_parser.add_subparsers(dest="fixtures_command", required=True)
    fixtures_sub.add_parser("list")
    copy = fixtures_sub.add_parser("copy")
    copy.add_argument("name")
    copy.add_argument("dest")
    fixtures_parser.set_defaults(func=cmd_fixtures)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AlmkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
