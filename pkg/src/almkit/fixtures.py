"""Bundled trajectory fixtures: loading, trace splitting, and replay regeneration.

A fixture bundle is a directory holding authored files

    meta.json     name, benchmark, question, gold answer, toolset, answers
    planner.txt   the planner completion (blueprint text)
    evidence.txt  Plan/Evidence pairs in step order
    react.txt     full interleaved trace (optional)

and generated files

    tasks.jsonl   {id, question, answer} dataset rows
    tools.jsonl   {tool, input, output} fixture responses
    replay.jsonl  recorded model responses keyed by prompt digest

``record_bundle`` rebuilds the generated files by actually running both
paradigms against scripted completions, so a bundle that replays is a bundle
whose digests, tool lookups, and evidence all agree end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from . import engine
from .blueprint import Blueprint, parse_blueprint
from .model import ModelClient, ReplayStore, ScriptedBackend
from .accounting import WhitespaceTokenizer
from .prompting import default_exemplars, default_templates
from .tools import FixtureToolBackend, build_registry, substitute_evidence, EvidenceMap

FIXTURE_ROOT = Path(__file__).parent / "data" / "fixtures"


@dataclass
class ReactTurn:
    """One authored trace iteration: the completion the model emitted plus the
    observation that followed (None for the final Finish turn)."""

    completion: str
    action_tool: str
    action_input: str
    observation: str | None


@dataclass
class FixtureBundle:
    name: str
    path: Path
    meta: dict

    @property
    def question(self) -> str:
        return self.meta["question"]

    @property
    def toolset(self) -> tuple[str, ...]:
        return tuple(self.meta["toolset"])

    def planner_text(self) -> str:
        return (self.path / "planner.txt").read_text(encoding="utf-8")

    def blueprint(self) -> Blueprint:
        return parse_blueprint(self.planner_text(), mode="strict")

    def evidence_pairs(self) -> list[tuple[str, str]]:
        return parse_evidence_pairs((self.path / "evidence.txt").read_text(encoding="utf-8"))

    def react_text(self) -> str | None:
        path = self.path / "react.txt"
        return path.read_text(encoding="utf-8") if path.exists() else None

    def react_turns(self) -> list[ReactTurn]:
        text = self.react_text()
        return split_react_trace(text) if text else []

    def tasks(self) -> list[dict]:
        rows = []
        for line in (self.path / "tasks.jsonl").read_text(encoding="utf-8").splitlines():
            if line.strip():
                rows.append(json.loads(line))
        return rows

    def replay_store(self, mode: str = "replay") -> ReplayStore:
        return ReplayStore.load(self.path / "replay.jsonl", mode=mode)

    def tool_backend(self) -> FixtureToolBackend:
        return FixtureToolBackend.load(self.path / "tools.jsonl")


def list_bundles(root: Path | None = None) -> list[str]:
    root = root or FIXTURE_ROOT
    return sorted(p.name for p in root.iterdir() if (p / "meta.json").exists())


def load_bundle(name_or_path: str | Path, root: Path | None = None) -> FixtureBundle:
    """Load a bundle by directory path, or by bundled name."""
    path = Path(name_or_path)
    if not (path / "meta.json").exists():
        path = (root or FIXTURE_ROOT) / str(name_or_path)
    if not (path / "meta.json").exists():
        raise FileNotFoundError(f"no fixture bundle at {name_or_path}")
    meta = json.loads((path / "meta.json").read_text(encoding="utf-8"))
    return FixtureBundle(name=meta["name"], path=path, meta=meta)


def split_react_trace(text: str) -> list[ReactTurn]:
    """Cut an interleaved trace into turns. Each turn's completion is the
    Thought plus Action text exactly as a model would emit it; observations
    run to the next Thought and keep interior blank lines."""
    lines = text.splitlines()
    turns: list[ReactTurn] = []
    i = 0
    while i < len(lines):
        if not lines[i].strip().startswith("Thought:"):
            i += 1
            continue
        completion_lines = [lines[i].rstrip()]
        i += 1
        while i < len(lines) and not lines[i].strip().startswith("Action:"):
            if lines[i].strip():
                completion_lines.append(lines[i].rstrip())
            i += 1
        if i >= len(lines):
            break
        completion_lines.append(lines[i].rstrip())
        action_line = lines[i].strip()[len("Action:"):].strip()
        i += 1
        observation: str | None = None
        if i < len(lines) and lines[i].strip().startswith("Observation:"):
            first = lines[i].strip()[len("Observation:"):].strip()
            obs_lines = [first] if first else []
            i += 1
            while i < len(lines) and not lines[i].strip().startswith("Thought:"):
                obs_lines.append(lines[i].rstrip())
                i += 1
            observation = "\n".join(obs_lines).strip("\n").rstrip()
        from .blueprint import split_tool_call
        tool, tool_input = split_tool_call(action_line)
        turns.append(ReactTurn(
            completion="\n".join(completion_lines),
            action_tool=tool,
            action_input=tool_input,
            observation=observation,
        ))
    return turns


def parse_evidence_pairs(text: str) -> list[tuple[str, str]]:
    """Parse Plan/Evidence pairs: each Plan line, then its evidence either on
    the Evidence line itself or on the following lines up to the next Plan."""
    lines = text.splitlines()
    pairs: list[tuple[str, str]] = []
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if not stripped.startswith("Plan:"):
            i += 1
            continue
        description = stripped[len("Plan:"):].strip()
        i += 1
        while i < len(lines) and not lines[i].strip().startswith("Evidence:"):
            i += 1
        if i >= len(lines):
            raise ValueError(f"plan {description!r} has no Evidence block")
        first = lines[i].strip()[len("Evidence:"):].strip()
        evidence_lines = [first] if first else []
        i += 1
        while i < len(lines) and not lines[i].strip().startswith("Plan:"):
            evidence_lines.append(lines[i].rstrip())
            i += 1
        pairs.append((description, "\n".join(evidence_lines).strip("\n").rstrip()))
    return pairs


def _make_runtime(bundle: FixtureBundle, store: ReplayStore, backend,
                  tool_backend: FixtureToolBackend) -> engine.Runtime:
    client = ModelClient(
        backend=backend,
        store=store,
        tokenizer=WhitespaceTokenizer(),
        model_id=bundle.meta.get("model_id", "gpt-3.5-turbo"),
    )
    registry = build_registry(list(bundle.toolset), fixture_backend=tool_backend)
    return engine.Runtime(
        model=client,
        registry=registry,
        templates=default_templates(),
        exemplar_sets={"default": default_exemplars()},
    )


def replay_runtime(bundle: FixtureBundle) -> engine.Runtime:
    """Hermetic runtime answering every model call and tool lookup from the bundle."""
    return _make_runtime(bundle, bundle.replay_store("replay"), None, bundle.tool_backend())


def task_for(bundle: FixtureBundle) -> engine.Task:
    return engine.Task(
        id=bundle.name,
        question=bundle.question,
        gold_answer=bundle.meta.get("gold_answer"),
        toolset=bundle.toolset,
        exemplar_set="default",
    )


def _derive_tool_entries(bundle: FixtureBundle) -> dict[tuple[str, str], str]:
    """Work out every non-model tool response the bundle's runs will need,
    substituting evidence exactly the way the engine will."""
    registry = build_registry(list(bundle.toolset), fixture_backend=FixtureToolBackend())
    entries: dict[tuple[str, str], str] = {}

    bp = bundle.blueprint()
    pairs = bundle.evidence_pairs()
    if len(pairs) != len(bp.steps):
        raise ValueError(f"{bundle.name}: {len(bp.steps)} plan steps but {len(pairs)} evidence pairs")
    evidence = EvidenceMap()
    for step, (description, evidence_text) in zip(bp.steps, pairs):
        if description != step.description:
            raise ValueError(f"{bundle.name}: evidence pair {description!r} does not match plan")
        resolved, _ = substitute_evidence(step.tool_input, evidence)
        spec = registry.resolve(step.tool_name)
        if spec.kind == "deterministic":
            from .tools import eval_arithmetic
            computed = eval_arithmetic(resolved)
            if computed != evidence_text:
                raise ValueError(f"{bundle.name}: {step.var} computes {computed!r}, authored {evidence_text!r}")
        elif spec.kind != "model_backed":
            entries[(spec.name, resolved)] = evidence_text
        evidence.insert(step.var, evidence_text)

    for turn in bundle.react_turns():
        if turn.action_tool == engine.FINISH or turn.observation is None:
            continue
        spec = registry.resolve(turn.action_tool)
        if spec.kind == "deterministic":
            from .tools import eval_arithmetic
            computed = eval_arithmetic(turn.action_input)
            if computed != turn.observation:
                raise ValueError(f"{bundle.name}: calculator observation mismatch for {turn.action_input!r}")
        elif spec.kind != "model_backed":
            key = (spec.name, turn.action_input)
            if entries.get(key, turn.observation) != turn.observation:
                raise ValueError(f"{bundle.name}: conflicting fixture outputs for {key}")
            entries[key] = turn.observation
    return entries


def record_bundle(bundle: FixtureBundle, write: bool = True) -> dict[str, str]:
    """Re-derive tasks.jsonl, tools.jsonl, and replay.jsonl from the authored
    files by running both paradigms in record mode, verifying evidence,
    observations, and answers along the way. Returns the generated file
    contents keyed by filename."""
    meta = bundle.meta
    entries = _derive_tool_entries(bundle)
    tool_backend = FixtureToolBackend(dict(entries))
    store = ReplayStore(mode="record")

    bp = bundle.blueprint()
    pairs = bundle.evidence_pairs()
    registry = build_registry(list(bundle.toolset), fixture_backend=tool_backend)

    script: list[str] = [bundle.planner_text()]
    evidence = EvidenceMap()
    for step, (_, evidence_text) in zip(bp.steps, pairs):
        if registry.resolve(step.tool_name).kind == "model_backed":
            script.append(evidence_text)
        evidence.insert(step.var, evidence_text)
    script.append(meta["rewoo"]["answer"])

    turns = bundle.react_turns()
    for turn in turns:
        script.append(turn.completion)
        if turn.action_tool != engine.FINISH and registry.resolve(turn.action_tool).kind == "model_backed":
            script.append(turn.observation or "")

    runtime = _make_runtime(bundle, store, ScriptedBackend(script), tool_backend)
    task = task_for(bundle)

    record = engine.run_rewoo(task, runtime)
    if record.answer != meta["rewoo"]["answer"].strip():
        raise ValueError(f"{bundle.name}: recorded answer {record.answer!r} does not match meta")
    for (var, produced), (_, authored) in zip(record.evidence.items(), pairs):
        if produced != authored:
            raise ValueError(f"{bundle.name}: evidence mismatch at {var}: {produced!r}")

    if turns:
        react_record = engine.run_react(task, runtime, max_steps=max(len(turns), 1))
        if react_record.answer != (meta["react"] or {}).get("answer", ""):
            raise ValueError(f"{bundle.name}: react answer {react_record.answer!r} does not match meta")
        for produced, turn in zip(react_record.react_trace, turns):
            if turn.observation is not None and produced.observation != turn.observation:
                raise ValueError(f"{bundle.name}: observation mismatch for {turn.action_tool}")

    tasks_lines = [json.dumps(
        {"id": meta["name"], "question": meta["question"], "answer": meta.get("gold_answer")},
        ensure_ascii=False, sort_keys=True)]
    tool_lines = [
        json.dumps({"tool": tool, "input": input_text, "output": output},
                   ensure_ascii=False, sort_keys=True)
        for (tool, input_text), output in sorted(entries.items())
    ]
    files = {
        "tasks.jsonl": "\n".join(tasks_lines) + "\n",
        "tools.jsonl": ("\n".join(tool_lines) + "\n") if tool_lines else "",
        "replay.jsonl": "",
    }
    if write:
        for filename, content in files.items():
            if filename != "replay.jsonl":
                (bundle.path / filename).write_text(content, encoding="utf-8")
        store.save(bundle.path / "replay.jsonl")
        files["replay.jsonl"] = (bundle.path / "replay.jsonl").read_text(encoding="utf-8")
    else:
        import io
        buffer = io.StringIO()
        records = sorted(store.entries.values(), key=lambda r: r.digest)
        for r in records:
            buffer.write(json.dumps(r.to_dict(), ensure_ascii=False, sort_keys=True) + "\n")
        files["replay.jsonl"] = buffer.getvalue()
    return files
