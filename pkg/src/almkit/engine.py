"""Orchestrates complete task runs: plan-work-solve, interleaved loop, and single-call baselines."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import prompting
from .accounting import TokenLedger
from .blueprint import (
    Blueprint,
    build_dep_graph,
    parse_blueprint,
    split_tool_call,
)
from .errors import BadToolSyntax, GraphError, NoAction, ParseError, PlannerParseFailure
from .model import ModelClient
from .prompting import Exemplar, PromptTemplate
from .tools import (
    EvidenceMap,
    FailureInjection,
    ToolContext,
    ToolRegistry,
    invoke,
    substitute_evidence,
)

FINISH = "Finish"

DEFAULT_MAX_STEPS = 7

PARADIGMS = ("rewoo", "react", "direct", "cot")


@dataclass(frozen=True)
class Task:
    id: str
    question: str
    gold_answer: str | None = None
    toolset: tuple[str, ...] = ()
    exemplar_set: str = "default"

    def __post_init__(self):
        if not self.question.strip():
            raise ValueError("task question must be non-empty")


@dataclass
class ReactStep:
    """One interleaved iteration. A Finish step carries the answer in
    ``action_input`` and has no observation."""

    thought: str
    action_tool: str
    action_input: str
    observation: str = ""

    @property
    def is_finish(self) -> bool:
        return self.action_tool == FINISH

    def action_text(self) -> str:
        return f"{self.action_tool}[{self.action_input}]"

    def to_dict(self) -> dict:
        return {
            "thought": self.thought,
            "action_tool": self.action_tool,
            "action_input": self.action_input,
            "observation": self.observation,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReactStep":
        return cls(d["thought"], d["action_tool"], d["action_input"], d.get("observation", ""))


@dataclass
class ExecutionRecord:
    task_id: str
    paradigm: str
    answer: str
    ledger: TokenLedger
    steps: int
    question: str = ""
    blueprint: Blueprint | None = None
    evidence: EvidenceMap | None = None
    react_trace: list[ReactStep] | None = None
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        from .blueprint import render_blueprint
        return {
            "task_id": self.task_id,
            "paradigm": self.paradigm,
            "question": self.question,
            "answer": self.answer,
            "steps": self.steps,
            "warnings": self.warnings,
            "blueprint": render_blueprint(self.blueprint) if self.blueprint is not None else None,
            "evidence": self.evidence.to_dict() if self.evidence is not None else None,
            "react_trace": [s.to_dict() for s in self.react_trace] if self.react_trace is not None else None,
            "ledger": self.ledger.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExecutionRecord":
        blueprint = None
        if d.get("blueprint") is not None:
            blueprint = parse_blueprint(d["blueprint"], mode="strict")
        evidence = EvidenceMap.from_dict(d["evidence"]) if d.get("evidence") is not None else None
        trace = None
        if d.get("react_trace") is not None:
            trace = [ReactStep.from_dict(s) for s in d["react_trace"]]
        return cls(
            task_id=d["task_id"],
            paradigm=d["paradigm"],
            answer=d["answer"],
            ledger=TokenLedger.from_dict(d["ledger"]),
            steps=d["steps"],
            question=d.get("question", ""),
            blueprint=blueprint,
            evidence=evidence,
            react_trace=trace,
            warnings=list(d.get("warnings", [])),
        )


@dataclass
class Runtime:
    """Shared, read-only dependencies for task runs. Mutable per-run state
    (ledger, evidence, trace) lives inside each run."""

    model: ModelClient
    registry: ToolRegistry
    templates: PromptTemplate = field(default_factory=prompting.default_templates)
    exemplar_sets: dict[str, list[Exemplar]] = field(default_factory=dict)
    injection: FailureInjection = field(default_factory=FailureInjection.off)
    parse_mode: str = "lenient"
    substitution_policy: str = "lenient"
    parallel_steps: bool = False
    max_evidence_chars: int | None = None

    def tools_for(self, task: Task):
        names = list(task.toolset) if task.toolset else self.registry.names()
        return self.registry.describe(names)

    def exemplars_for(self, task: Task) -> list[Exemplar]:
        return self.exemplar_sets.get(task.exemplar_set, [])


def _clip(text: str, limit: int | None) -> str:
    if limit is not None and len(text) > limit:
        return text[:limit]
    return text


def run_rewoo(task: Task, rt: Runtime) -> ExecutionRecord:
    """One planner call, tool execution in dependency order, one solver call.

    The ledger ends up with exactly two primary model entries regardless of
    how many steps the plan has; model-backed tools add their own entries.
    """
    ledger = TokenLedger()
    warnings: list[str] = []
    tools = rt.tools_for(task)
    exemplars = rt.exemplars_for(task)

    planner_prompt = prompting.compose_planner_prompt(rt.templates, tools, exemplars, task.question)
    planner_response = rt.model.complete(
        planner_prompt.text, ledger=ledger, call_kind="planner",
        breakdown=planner_prompt.breakdown(rt.model.tokenizer),
    )

    try:
        bp = parse_blueprint(planner_response.text, mode=rt.parse_mode, warnings=warnings)
    except ParseError as exc:
        raise PlannerParseFailure(str(exc)) from exc

    evidence = EvidenceMap()
    ctx = ToolContext(model=rt.model, ledger=ledger, warnings=warnings)

    try:
        order = build_dep_graph(bp).waves()
    except GraphError as exc:
        if rt.parse_mode == "strict":
            raise PlannerParseFailure(str(exc)) from exc
        warnings.append(f"dependency graph invalid ({exc}); executing in source order")
        order = [[step.var] for step in bp.steps]

    def execute(var) -> str:
        step = bp.step_for(var)
        resolved, sub_warnings = substitute_evidence(step.tool_input, evidence,
                                                     policy=rt.substitution_policy)
        warnings.extend(sub_warnings)
        return _clip(invoke(step.tool_name, resolved, rt.registry, rt.injection, ctx),
                     rt.max_evidence_chars)

    for wave in order:
        if rt.parallel_steps and len(wave) > 1:
            with ThreadPoolExecutor(max_workers=len(wave)) as pool:
                results = list(pool.map(execute, wave))
        else:
            results = [execute(var) for var in wave]
        for var, text in zip(wave, results):
            evidence.insert(var, text)

    pairs = [(step.description, evidence[step.var]) for step in bp.steps]
    solver_prompt = prompting.compose_solver_prompt(rt.templates, task.question, pairs)
    solver_response = rt.model.complete(
        solver_prompt.text, ledger=ledger, call_kind="solver",
        breakdown=solver_prompt.breakdown(rt.model.tokenizer),
    )

    return ExecutionRecord(
        task_id=task.id,
        paradigm="rewoo",
        answer=solver_response.text.strip(),
        ledger=ledger,
        steps=len(bp.steps) + 1,
        question=task.question,
        blueprint=bp,
        evidence=evidence,
        warnings=warnings,
    )


def parse_react_step(completion: str) -> ReactStep:
    """Extract the first Thought and first Action from one loop completion.

    The action is split like a blueprint tool call, so inputs may contain
    brackets; ``Finish[answer]`` marks the final step.
    """
    lines = completion.splitlines()
    action_at = next((i for i, line in enumerate(lines) if line.strip().startswith("Action:")), None)
    if action_at is None:
        raise NoAction(f"no Action line in completion {completion[:80]!r}")

    thought_lines = []
    for line in lines[:action_at]:
        stripped = line.strip()
        if stripped.startswith("Thought:"):
            thought_lines = [stripped[len("Thought:"):].strip()]
        elif stripped:
            thought_lines.append(stripped)
    thought = "\n".join(thought_lines).strip()

    action_text = lines[action_at].strip()[len("Action:"):].strip()
    remainder = [line.rstrip() for line in lines[action_at + 1:]]
    if remainder:
        action_text = "\n".join([action_text, *remainder]).strip()
    tool, tool_input = split_tool_call(action_text)
    return ReactStep(thought=thought, action_tool=tool, action_input=tool_input)


def run_react(task: Task, rt: Runtime, max_steps: int = DEFAULT_MAX_STEPS) -> ExecutionRecord:
    """Interleaved loop: rebuild the full prompt with all history, call the
    model, act, observe, repeat. Stops on Finish or after ``max_steps``
    iterations with an empty answer and a StepLimit warning."""
    if max_steps < 1:
        raise ValueError("max_steps must be positive")
    ledger = TokenLedger()
    warnings: list[str] = []
    tools = rt.tools_for(task)
    exemplars = rt.exemplars_for(task)
    ctx = ToolContext(model=rt.model, ledger=ledger, warnings=warnings)

    trace: list[ReactStep] = []
    answer = ""
    for _ in range(max_steps):
        history = [(s.thought, s.action_text(), s.observation if not s.is_finish else None)
                   for s in trace]
        prompt = prompting.compose_react_prompt(rt.templates, tools, exemplars,
                                                task.question, history)
        response = rt.model.complete(
            prompt.text, ledger=ledger, call_kind="react_step",
            breakdown=prompt.breakdown(rt.model.tokenizer),
        )
        try:
            step = parse_react_step(response.text)
        except (NoAction, BadToolSyntax) as exc:
            warnings.append(f"malformed step ({exc}); continuing")
            trace.append(ReactStep(thought=response.text.strip(), action_tool="",
                                   action_input="", observation="Invalid action"))
            continue
        if step.is_finish:
            answer = step.action_input
            trace.append(step)
            break
        step.observation = _clip(
            invoke(step.action_tool, step.action_input, rt.registry, rt.injection, ctx),
            rt.max_evidence_chars,
        )
        trace.append(step)
    else:
        warnings.append("StepLimit")

    return ExecutionRecord(
        task_id=task.id,
        paradigm="react",
        answer=answer,
        ledger=ledger,
        steps=len(trace),
        question=task.question,
        react_trace=trace,
        warnings=warnings,
    )


def run_single(task: Task, rt: Runtime, style: str = "direct") -> ExecutionRecord:
    """One model call. Direct sends the bare question; chain-of-thought
    prepends the step-by-step instruction and one exemplar, and its step count
    is the number of reasoning lines in the completion."""
    if style not in ("direct", "cot"):
        raise ValueError(f"unknown single-call style {style!r}")
    ledger = TokenLedger()
    warnings: list[str] = []

    if style == "direct":
        prompt = prompting.compose_direct_prompt(task.question)
    else:
        exemplars = rt.exemplars_for(task)
        prompt = prompting.compose_cot_prompt(task.question, exemplars[0] if exemplars else None)

    response = rt.model.complete(
        prompt.text, ledger=ledger, call_kind="single",
        breakdown=prompt.breakdown(rt.model.tokenizer),
    )
    answer = response.text.strip()
    if not answer:
        warnings.append("EmptyAnswer")

    if style == "direct":
        steps = 1
    else:
        steps = sum(1 for line in response.text.splitlines() if line.strip())

    return ExecutionRecord(
        task_id=task.id,
        paradigm=style,
        answer=answer,
        ledger=ledger,
        steps=steps,
        question=task.question,
        warnings=warnings,
    )


def run_paradigm(paradigm: str, task: Task, rt: Runtime,
                 max_steps: int = DEFAULT_MAX_STEPS) -> ExecutionRecord:
    if paradigm == "rewoo":
        return run_rewoo(task, rt)
    if paradigm == "react":
        return run_react(task, rt, max_steps=max_steps)
    if paradigm in ("direct", "cot"):
        return run_single(task, rt, style=paradigm)
    raise ValueError(f"unknown paradigm {paradigm!r}")


def step_count(record: ExecutionRecord) -> int:
    """Plan-ahead runs count their plans plus the extra solver step; loop
    paradigms count thoughts; direct is always one."""
    if record.paradigm == "rewoo":
        return len(record.blueprint.steps) + 1 if record.blueprint is not None else 1
    if record.paradigm == "react":
        return len(record.react_trace or [])
    if record.paradigm == "direct":
        return 1
    return record.steps
