"""Prompt composition for planner, solver, interleaved, and single-call paradigms.

Prompts are assembled from template files with ``{tools}``, ``{exemplars}``,
``{task}``, ``{pairs}`` and ``{history}`` placeholders. Composition returns
both the full text and the text of each input component (question, context,
exemplars, steps) so ledgers can decompose token usage exactly. Default
templates keep every placeholder on its own line; templates that glue a
placeholder to other words would break the component-sum property.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .blueprint import parse_blueprint
from .errors import EmptyTask, MissingPlaceholder

_TEMPLATE_DIR = Path(__file__).parent / "data" / "templates"
_EXEMPLAR_DIR = Path(__file__).parent / "data" / "exemplars"

_PLACEHOLDER_RE = re.compile(r"(\{(?:tools|exemplars|task|pairs|history)\})")

# Which input component each placeholder's text belongs to. Literal template
# text and the tool descriptions count as context.
_PLACEHOLDER_COMPONENT = {
    "{tools}": "context",
    "{exemplars}": "exemplars",
    "{task}": "question",
    "{pairs}": "steps",
    "{history}": "steps",
}

COT_INSTRUCTION = (
    "Solve the following task. Think step by step, then give the final answer."
)


@dataclass(frozen=True)
class ToolDescription:
    """A worker's name and its one-paragraph description (input contract included)."""

    name: str
    description: str


@dataclass(frozen=True)
class Exemplar:
    """One worked demonstration. ``planner_demo`` is blueprint text;
    ``tao_demo`` is interleaved thought/action/observation text."""

    question: str
    planner_demo: str | None = None
    tao_demo: str | None = None
    source_tag: str = ""

    def __post_init__(self):
        if not self.planner_demo and not self.tao_demo:
            raise ValueError("exemplar needs a planner_demo or a tao_demo")
        if self.planner_demo:
            parse_blueprint(self.planner_demo, mode="strict")


@dataclass(frozen=True)
class PromptTemplate:
    planner_context: str
    solver_context: str
    react_context: str

    @classmethod
    def load(cls, directory: str | Path) -> "PromptTemplate":
        directory = Path(directory)
        return cls(
            planner_context=(directory / "planner.txt").read_text(encoding="utf-8"),
            solver_context=(directory / "solver.txt").read_text(encoding="utf-8"),
            react_context=(directory / "react.txt").read_text(encoding="utf-8"),
        )


def default_templates() -> PromptTemplate:
    return PromptTemplate.load(_TEMPLATE_DIR)


def load_exemplars(path: str | Path) -> list["Exemplar"]:
    """Read an exemplar bundle: JSONL rows of
    {question, planner_demo, tao_demo, source_tag}."""
    exemplars = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            row = json.loads(line)
            exemplars.append(Exemplar(
                question=row["question"],
                planner_demo=row.get("planner_demo"),
                tao_demo=row.get("tao_demo"),
                source_tag=row.get("source_tag", ""),
            ))
    return exemplars


def default_exemplars() -> list["Exemplar"]:
    return load_exemplars(_EXEMPLAR_DIR / "default.jsonl")


@dataclass
class ComposedPrompt:
    """A prompt plus the concatenated text of each input component."""

    text: str
    parts: dict[str, str] = field(default_factory=dict)

    def breakdown(self, tokenizer) -> dict[str, int]:
        return {component: tokenizer.count(text) for component, text in self.parts.items()}


def _assemble(template: str, values: dict[str, tuple[str, str]],
              required: tuple[str, ...]) -> ComposedPrompt:
    """Substitute placeholders and record which component each span belongs to.

    Empty placeholder values are dropped along with the blank lines the
    template reserved for them, so e.g. a zero-exemplar prompt has no dangling
    exemplar section.
    """
    for name in required:
        if name not in template:
            raise MissingPlaceholder(f"template lacks required placeholder {name}")

    pieces = _PLACEHOLDER_RE.split(template)
    texts: list[str] = []
    parts: dict[str, list[str]] = {}
    swallow = False
    for piece in pieces:
        if piece in _PLACEHOLDER_COMPONENT:
            if piece not in values:
                raise MissingPlaceholder(f"no value supplied for placeholder {piece}")
            component, text = values[piece]
            if not text:
                swallow = True
                continue
        else:
            component, text = "context", piece
            if swallow:
                text = text.lstrip("\n")
                swallow = False
        if not text:
            continue
        texts.append(text)
        parts.setdefault(component, []).append(text)
    return ComposedPrompt(
        text="".join(texts).strip("\n"),
        parts={component: "".join(chunks).strip("\n") for component, chunks in parts.items()},
    )


def render_tool_list(tools: list[ToolDescription]) -> str:
    return "\n".join(
        f"({i}) {tool.name}[input]: {tool.description}"
        for i, tool in enumerate(tools, start=1)
    )


def _render_exemplars(exemplars: list[Exemplar], demo_of) -> str:
    blocks = []
    for exemplar in exemplars:
        demo = demo_of(exemplar)
        if not demo:
            continue
        blocks.append(f"Task: {exemplar.question}\n\n{demo.strip()}")
    if not blocks:
        return ""
    return "For example,\n\n" + "\n\n".join(blocks)


def render_pair_block(description: str, evidence: str) -> str:
    """One plan/evidence pair as it appears in the solver prompt."""
    return f"Plan: {description}\nEvidence:\n{evidence}"


def render_tao_block(thought: str, action: str, observation: str | None) -> str:
    """One interleaved step as it appears in the rebuilt prompt history."""
    lines = [f"Thought: {thought}", f"Action: {action}"]
    if observation is not None:
        lines.append(f"Observation: {observation}")
    return "\n".join(lines)


def compose_planner_prompt(tpl: PromptTemplate, tools: list[ToolDescription],
                           exemplars: list[Exemplar], question: str) -> ComposedPrompt:
    if not question.strip():
        raise EmptyTask("planner prompt needs a non-empty task")
    if not tools:
        raise ValueError("planner prompt needs at least one tool")
    return _assemble(
        tpl.planner_context,
        {
            "{tools}": ("context", render_tool_list(tools)),
            "{exemplars}": ("exemplars", _render_exemplars(exemplars, lambda e: e.planner_demo)),
            "{task}": ("question", question),
        },
        required=("{tools}", "{exemplars}", "{task}"),
    )


def compose_planner_instruction(tpl: PromptTemplate, tools: list[ToolDescription]) -> str:
    """The zero-shot planner context (tools described, no exemplars, no task),
    used as the instruction field when exporting planning data."""
    composed = _assemble(
        tpl.planner_context,
        {
            "{tools}": ("context", render_tool_list(tools)),
            "{exemplars}": ("exemplars", ""),
            "{task}": ("question", ""),
        },
        required=("{tools}", "{exemplars}", "{task}"),
    )
    return composed.text


def compose_solver_prompt(tpl: PromptTemplate, question: str,
                          pairs: list[tuple[str, str]]) -> ComposedPrompt:
    """``pairs`` holds (plan description, evidence text) in step order.
    Evidence is rendered verbatim, unresolved or failed lookups included."""
    pairs_text = "\n\n".join(render_pair_block(desc, ev) for desc, ev in pairs)
    return _assemble(
        tpl.solver_context,
        {
            "{pairs}": ("steps", pairs_text),
            "{task}": ("question", question),
        },
        required=("{pairs}", "{task}"),
    )


def compose_react_prompt(tpl: PromptTemplate, tools: list[ToolDescription],
                         exemplars: list[Exemplar], question: str,
                         history: list[tuple[str, str, str | None]]) -> ComposedPrompt:
    """Rebuild the full interleaved prompt: context, tools, exemplars, task,
    and every prior thought/action/observation triple. The whole prompt is
    recomposed on every call; nothing is cached between steps."""
    history_text = "\n\n".join(
        render_tao_block(thought, action, observation)
        for thought, action, observation in history
    )
    return _assemble(
        tpl.react_context,
        {
            "{tools}": ("context", render_tool_list(tools)),
            "{exemplars}": ("exemplars", _render_exemplars(exemplars, lambda e: e.tao_demo)),
            "{task}": ("question", question),
            "{history}": ("steps", history_text),
        },
        required=("{tools}", "{exemplars}", "{task}", "{history}"),
    )


def compose_direct_prompt(question: str) -> ComposedPrompt:
    return ComposedPrompt(text=question, parts={"question": question})


def compose_cot_prompt(question: str, exemplar: Exemplar | None) -> ComposedPrompt:
    parts: dict[str, str] = {"context": COT_INSTRUCTION}
    texts = [COT_INSTRUCTION]
    if exemplar is not None:
        demo = exemplar.tao_demo or exemplar.planner_demo or ""
        block = f"For example,\n\nTask: {exemplar.question}\n\n{demo.strip()}"
        parts["exemplars"] = block
        texts.append(block)
    parts["question"] = question
    texts.append(question)
    return ComposedPrompt(text="\n\n".join(texts), parts=parts)
