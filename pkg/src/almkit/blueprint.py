"""Blueprint data model and parser for planner output.

A blueprint is an ordered list of steps, each a descriptive Plan line followed
by one evidence assignment of the form ``#Ek = Tool[input]``. Inputs may
reference evidence variables of earlier steps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    BadToolSyntax,
    CycleDetected,
    DuplicateVar,
    ForwardReference,
    MalformedStep,
    UndefinedReference,
)

# Maximal munch on digits: in "#E12" only #E12 is a reference, never #E1.
VAR_REF_RE = re.compile(r"#E(\d+)")

_TOOL_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9]*")
_ASSIGN_RE = re.compile(r"^#E(\d+)\s*=\s*(.*)$", re.DOTALL)


@dataclass(frozen=True, order=True)
class EvidenceVarId:
    """An evidence variable, the k in ``#Ek``."""

    index: int

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"evidence variable index must be >= 1, got {self.index}")

    def __str__(self) -> str:
        return f"#E{self.index}"


@dataclass(frozen=True)
class PlanStep:
    description: str
    var: EvidenceVarId
    tool_name: str
    tool_input: str

    def references(self) -> list[EvidenceVarId]:
        """Variables referenced in the tool input, in order of appearance."""
        return [EvidenceVarId(int(m)) for m in VAR_REF_RE.findall(self.tool_input)]


@dataclass
class Blueprint:
    """Parsed planner output. Steps are kept in source order; ``source_text``
    is retained for debugging and is ignored by equality."""

    steps: list[PlanStep] = field(default_factory=list)
    source_text: str = field(default="", compare=False)

    def __len__(self) -> int:
        return len(self.steps)

    def step_for(self, var: EvidenceVarId) -> PlanStep:
        for step in self.steps:
            if step.var == var:
                return step
        raise KeyError(str(var))


@dataclass
class DepGraph:
    """Evidence-variable dependencies: edges map each step's variable to the
    set of variables its input references. ``topo_order`` respects the edges
    and preserves source order among independent steps."""

    edges: dict[EvidenceVarId, set[EvidenceVarId]]
    topo_order: list[EvidenceVarId]

    def waves(self) -> list[list[EvidenceVarId]]:
        """Group the topological order into waves whose members are mutually
        independent and only depend on earlier waves."""
        depth: dict[EvidenceVarId, int] = {}
        for var in self.topo_order:
            deps = self.edges[var]
            depth[var] = 1 + max((depth[d] for d in deps), default=-1)
        grouped: dict[int, list[EvidenceVarId]] = {}
        for var in self.topo_order:
            grouped.setdefault(depth[var], []).append(var)
        return [grouped[d] for d in sorted(grouped)]


def split_tool_call(text: str) -> tuple[str, str]:
    """Split ``Tool[input]`` into name and input.

    The input runs from the first ``[`` after the tool name to the *last*
    ``]`` in the statement, so inputs may themselves contain brackets.
    """
    text = text.strip()
    m = _TOOL_NAME_RE.match(text)
    if not m:
        raise BadToolSyntax(f"no tool name in {text!r}")
    name = m.group(0)
    rest = text[m.end():].lstrip()
    if not rest.startswith("["):
        raise BadToolSyntax(f"expected '[' after tool name in {text!r}")
    close = rest.rfind("]")
    if close < 0:
        raise BadToolSyntax(f"unterminated tool input in {text!r}")
    if rest[close + 1:].strip():
        raise BadToolSyntax(f"trailing text after ']' in {text!r}")
    return name, rest[1:close].strip()


def _parse_assignment(statement: str) -> tuple[EvidenceVarId, str, str]:
    m = _ASSIGN_RE.match(statement.strip())
    if not m:
        raise BadToolSyntax(f"not an evidence assignment: {statement.strip()!r}")
    var = EvidenceVarId(int(m.group(1)))
    name, tool_input = split_tool_call(m.group(2))
    return var, name, tool_input


def parse_blueprint(text: str, mode: str = "strict",
                    warnings: list[str] | None = None) -> Blueprint:
    """Parse planner completion text into a Blueprint.

    Plan descriptions may span lines: they accumulate until a line beginning
    with ``#E``. Evidence statements may also span lines; a statement ends at
    the next ``Plan:`` or ``#E`` line or at end of input.

    In strict mode structural problems raise (MalformedStep, DuplicateVar,
    BadToolSyntax). In lenient mode the parser is total: malformed blocks are
    skipped and a note is appended to ``warnings``.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown parse mode {mode!r}")
    strict = mode == "strict"
    notes = warnings if warnings is not None else []

    lines = text.splitlines()
    steps: list[PlanStep] = []
    seen: set[EvidenceVarId] = set()
    pending_desc: list[str] | None = None

    def complain(exc_type, message):
        if strict:
            raise exc_type(message)
        notes.append(message)

    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if not stripped:
            i += 1
            continue
        if stripped.startswith("Plan:"):
            if pending_desc is not None:
                complain(MalformedStep, "Plan line with no following #E assignment")
            pending_desc = [stripped[len("Plan:"):].strip()]
            i += 1
            continue
        if stripped.startswith("#E"):
            statement_lines = [stripped]
            i += 1
            while i < len(lines):
                nxt = lines[i].strip()
                if nxt.startswith("Plan:") or nxt.startswith("#E"):
                    break
                statement_lines.append(lines[i].rstrip())
                i += 1
            statement = "\n".join(statement_lines).strip()
            if pending_desc is None or not "\n".join(pending_desc).strip():
                complain(MalformedStep, f"#E assignment with no preceding Plan line: {statement_lines[0]!r}")
                pending_desc = None
                continue
            description = "\n".join(line for line in pending_desc if line).strip()
            pending_desc = None
            try:
                var, name, tool_input = _parse_assignment(statement)
            except BadToolSyntax as exc:
                complain(BadToolSyntax, str(exc))
                continue
            except ValueError as exc:
                complain(BadToolSyntax, str(exc))
                continue
            if var in seen:
                complain(DuplicateVar, f"{var} assigned more than once")
                continue
            seen.add(var)
            steps.append(PlanStep(description, var, name, tool_input))
            continue
        if pending_desc is not None:
            # Multi-line plan description keeps accumulating.
            pending_desc.append(stripped)
        else:
            complain(MalformedStep, f"unexpected line outside any step: {stripped!r}")
        i += 1

    if pending_desc is not None:
        complain(MalformedStep, "trailing Plan line with no #E assignment")

    return Blueprint(steps=steps, source_text=text)


def build_dep_graph(bp: Blueprint) -> DepGraph:
    """Map each step's variable to the variables its input references and
    compute a source-order-preserving topological order.

    References must point at variables *defined by earlier steps*; later or
    never-defined targets raise ForwardReference/UndefinedReference.
    """
    position = {step.var: idx for idx, step in enumerate(bp.steps)}
    edges: dict[EvidenceVarId, set[EvidenceVarId]] = {}
    for idx, step in enumerate(bp.steps):
        deps = set()
        for ref in step.references():
            if ref not in position:
                raise UndefinedReference(f"{step.var} references undefined {ref}")
            if position[ref] >= idx:
                raise ForwardReference(f"{step.var} references {ref}, which is not defined earlier")
            deps.add(ref)
        edges[step.var] = deps

    # Kahn's algorithm; ready steps are taken in source order. Cycles cannot
    # survive the backward-only check above, but guard anyway for graphs
    # constructed by hand.
    remaining = {var: set(deps) for var, deps in edges.items()}
    order: list[EvidenceVarId] = []
    placed: set[EvidenceVarId] = set()
    while remaining:
        ready = [step.var for step in bp.steps
                 if step.var in remaining and remaining[step.var] <= placed]
        if not ready:
            raise CycleDetected("dependency cycle among evidence variables")
        for var in ready:
            order.append(var)
            placed.add(var)
            del remaining[var]
    return DepGraph(edges=edges, topo_order=order)


def render_blueprint(bp: Blueprint) -> str:
    """Emit canonical blueprint text. Re-parsing the result yields a blueprint
    structurally equal to ``bp``."""
    if not bp.steps:
        return ""
    blocks = [
        f"Plan: {step.description}\n{step.var} = {step.tool_name}[{step.tool_input}]"
        for step in bp.steps
    ]
    return "\n\n".join(blocks) + "\n"
