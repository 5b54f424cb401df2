"""The worker layer: tool registry, evidence substitution, built-ins, failure injection."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

from .blueprint import VAR_REF_RE, EvidenceVarId
from .errors import (
    DivisionByZero,
    DuplicateVar,
    ExpressionError,
    ToolFixtureMiss,
    UnknownTool,
    UnresolvedReference,
)

DEFAULT_FAILURE_TEXT = "No evidence found."

# Directive wrapped around the input of the model-backed LLM tool; evidence
# strings are expected to be terse.
LLM_TOOL_DIRECTIVE = "Respond in short directly with no extra words."

PAL_CALCULATOR_DIRECTIVE = (
    "Turn the following problem into a single arithmetic expression using only "
    "numbers, +, -, *, / and parentheses. Respond with the expression only."
)


# --- evidence map ------------------------------------------------------------

class EvidenceMap:
    """Evidence collected per variable. Each variable is inserted exactly once;
    iteration yields ascending variable index."""

    def __init__(self):
        self._entries: dict[EvidenceVarId, str] = {}
        self._lock = threading.Lock()

    def insert(self, var: EvidenceVarId, text: str) -> None:
        with self._lock:
            if var in self._entries:
                raise DuplicateVar(f"evidence for {var} already recorded")
            self._entries[var] = text

    def __contains__(self, var: EvidenceVarId) -> bool:
        return var in self._entries

    def __getitem__(self, var: EvidenceVarId) -> str:
        return self._entries[var]

    def __len__(self) -> int:
        return len(self._entries)

    def items(self) -> list[tuple[EvidenceVarId, str]]:
        return sorted(self._entries.items(), key=lambda kv: kv[0].index)

    def to_dict(self) -> dict[str, str]:
        return {str(var): text for var, text in self.items()}

    @classmethod
    def from_dict(cls, d: dict[str, str]) -> "EvidenceMap":
        ev = cls()
        for key, text in d.items():
            ev.insert(EvidenceVarId(int(key.removeprefix("#E"))), text)
        return ev


def substitute_evidence(text: str, ev: EvidenceMap,
                        policy: str = "lenient") -> tuple[str, list[str]]:
    """Replace every ``#E<digits>`` occurrence that has evidence with its text.

    Matching is maximal-munch on digits, so ``#E12`` never resolves as ``#E1``.
    Strict policy raises on references with no evidence; lenient leaves them
    verbatim and reports them in the returned warning list.
    """
    if policy not in ("strict", "lenient"):
        raise ValueError(f"unknown substitution policy {policy!r}")
    warnings: list[str] = []

    def replace(match):
        var = EvidenceVarId(int(match.group(1)))
        if var in ev:
            return ev[var]
        if policy == "strict":
            raise UnresolvedReference(f"no evidence for {var}")
        warnings.append(f"unresolved reference {var} left verbatim")
        return match.group(0)

    return VAR_REF_RE.sub(replace, text), warnings


# --- failure injection -------------------------------------------------------

@dataclass(frozen=True)
class FailureInjection:
    """Forces matching tools to return ``failure_text`` without any external call."""

    mode: str = "off"  # off | all | named
    names: tuple[str, ...] = ()
    failure_text: str = DEFAULT_FAILURE_TEXT

    def __post_init__(self):
        if self.mode not in ("off", "all", "named"):
            raise ValueError(f"unknown injection mode {self.mode!r}")

    @classmethod
    def off(cls) -> "FailureInjection":
        return cls(mode="off")

    @classmethod
    def all_fail(cls, failure_text: str = DEFAULT_FAILURE_TEXT) -> "FailureInjection":
        return cls(mode="all", failure_text=failure_text)

    @classmethod
    def named(cls, names, failure_text: str = DEFAULT_FAILURE_TEXT) -> "FailureInjection":
        return cls(mode="named", names=tuple(names), failure_text=failure_text)

    @classmethod
    def parse(cls, spec: str) -> "FailureInjection":
        spec = (spec or "off").strip()
        if spec == "off":
            return cls.off()
        if spec == "all":
            return cls.all_fail()
        return cls.named(n.strip() for n in spec.split(",") if n.strip())

    def matches(self, tool_name: str) -> bool:
        if self.mode == "off":
            return False
        if self.mode == "all":
            return True
        return tool_name in self.names


# --- arithmetic evaluator ----------------------------------------------------

class _ExprParser:
    """Recursive-descent evaluator for +, -, *, / and parentheses with standard
    precedence. Integer literals stay integers so pure-integer arithmetic
    renders without a decimal point, while division always yields a decimal."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def parse(self):
        value = self.expr()
        self.skip_ws()
        if self.pos < len(self.text):
            raise ExpressionError(f"unexpected {self.text[self.pos]!r} at position {self.pos}")
        return value

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expr(self):
        value = self.term()
        while (op := self.peek()) and op in "+-":
            self.pos += 1
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def term(self):
        value = self.factor()
        while (op := self.peek()) and op in "*/":
            self.pos += 1
            rhs = self.factor()
            if op == "*":
                value = value * rhs
            else:
                if rhs == 0:
                    raise DivisionByZero(f"division by zero in {self.text!r}")
                value = value / rhs
        return value

    def factor(self):
        ch = self.peek()
        if ch == "(":
            self.pos += 1
            value = self.expr()
            if self.peek() != ")":
                raise ExpressionError("missing closing parenthesis")
            self.pos += 1
            return value
        if ch == "-":
            self.pos += 1
            return -self.factor()
        if ch == "+":
            self.pos += 1
            return self.factor()
        return self.number()

    def number(self):
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            self.pos += 1
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
        token = self.text[start:self.pos]
        if not token or token == ".":
            found = self.text[start] if start < len(self.text) else "end of input"
            raise ExpressionError(f"expected a number, found {found!r}")
        return float(token) if "." in token else int(token)


def eval_arithmetic(expr: str) -> str:
    """Evaluate an arithmetic expression and render the result.

    ``"50 * 4"`` gives ``"200"`` while ``"(50 * 4) / 20"`` gives ``"10.0"``:
    division always produces decimal form, integer ops keep integer form.
    """
    value = _ExprParser(expr).parse()
    return repr(value)


# --- registry and built-in tools ----------------------------------------------

@dataclass
class ToolContext:
    """Per-invocation dependencies: the model client and run ledger for
    model-backed tools, plus a sink for non-fatal warnings."""

    model: object = None
    ledger: object = None
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class ToolSpec:
    name: str
    description: str
    kind: str  # deterministic | http | model_backed | stub
    handler: Callable[[str, ToolContext], str]

    def __post_init__(self):
        if self.kind not in ("deterministic", "http", "model_backed", "stub"):
            raise ValueError(f"unknown tool kind {self.kind!r}")


class ToolRegistry:
    """Named tools plus aliases. Frozen after construction; handlers must be
    safe to call concurrently."""

    def __init__(self):
        self._specs: dict[str, ToolSpec] = {}
        self._aliases: dict[str, str] = {}

    def register(self, spec: ToolSpec, aliases: tuple[str, ...] = ()) -> None:
        if spec.name in self._specs or spec.name in self._aliases:
            raise ValueError(f"tool {spec.name!r} already registered")
        self._specs[spec.name] = spec
        for alias in aliases:
            if alias in self._specs or alias in self._aliases:
                raise ValueError(f"alias {alias!r} already registered")
            self._aliases[alias] = spec.name

    def resolve(self, name: str) -> ToolSpec:
        canonical = self._aliases.get(name, name)
        try:
            return self._specs[canonical]
        except KeyError:
            raise UnknownTool(f"Unknown tool: {name}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._specs or name in self._aliases

    def names(self) -> list[str]:
        return list(self._specs)

    def describe(self, names: list[str]) -> list:
        from .prompting import ToolDescription
        return [ToolDescription(name=n, description=self.resolve(n).description) for n in names]


def invoke(name: str, input_text: str, registry: ToolRegistry,
           injection: FailureInjection | None = None,
           ctx: ToolContext | None = None, policy: str = "lenient") -> str:
    """Dispatch one tool call and always come back with evidence text.

    Active injection short-circuits before the handler runs. In lenient policy
    every failure (unknown tool, handler exception) becomes evidence text and a
    warning; strict policy raises unknown-tool errors.
    """
    ctx = ctx or ToolContext()
    injection = injection or FailureInjection.off()
    if injection.matches(name):
        return injection.failure_text
    try:
        spec = registry.resolve(name)
    except UnknownTool:
        if policy == "strict":
            raise
        ctx.warnings.append(f"unknown tool {name!r}")
        return f"Unknown tool: {name}"
    try:
        return spec.handler(input_text, ctx)
    except Exception as exc:  # tool failures must never abort a run
        ctx.warnings.append(f"tool {name} failed: {exc}")
        return injection.failure_text


# --- handlers ----------------------------------------------------------------

class FixtureToolBackend:
    """Serves tool responses from a JSONL file of {tool, input, output} rows,
    the hermetic stand-in for live search endpoints."""

    def __init__(self, entries: dict[tuple[str, str], str] | None = None):
        self.entries = entries or {}

    @classmethod
    def load(cls, path: str | Path) -> "FixtureToolBackend":
        entries: dict[tuple[str, str], str] = {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.strip():
                row = json.loads(line)
                entries[(row["tool"], row["input"])] = row["output"]
        return cls(entries)

    def lookup(self, tool: str, input_text: str) -> str:
        try:
            return self.entries[(tool, input_text)]
        except KeyError:
            raise ToolFixtureMiss(f"no fixture for {tool}[{input_text!r}]") from None


def calculator_handler(input_text: str, ctx: ToolContext) -> str:
    return eval_arithmetic(input_text)


def pal_calculator_handler(input_text: str, ctx: ToolContext) -> str:
    """Program-aided mode: the model writes the expression, the evaluator runs it."""
    if ctx.model is None:
        raise ValueError("program-aided calculator needs a model client")
    prompt = f"{PAL_CALCULATOR_DIRECTIVE}\n\n{input_text}"
    response = ctx.model.complete(prompt, ledger=ctx.ledger, call_kind="tool_model",
                                  breakdown={"steps": ctx.model.tokenizer.count(prompt)})
    return eval_arithmetic(response.text.strip())


def llm_tool_handler(input_text: str, ctx: ToolContext) -> str:
    if ctx.model is None:
        raise ValueError("LLM tool needs a model client")
    prompt = f"{input_text}\n\n{LLM_TOOL_DIRECTIVE}"
    response = ctx.model.complete(prompt, ledger=ctx.ledger, call_kind="tool_model",
                                  breakdown={"steps": ctx.model.tokenizer.count(prompt)})
    return response.text.strip()


def fixture_handler(tool_name: str, backend: FixtureToolBackend):
    def handler(input_text: str, ctx: ToolContext) -> str:
        return backend.lookup(tool_name, input_text)
    return handler


def stub_handler(tool_name: str, backend: FixtureToolBackend | None,
                 canned: str = DEFAULT_FAILURE_TEXT):
    def handler(input_text: str, ctx: ToolContext) -> str:
        if backend is not None:
            try:
                return backend.lookup(tool_name, input_text)
            except ToolFixtureMiss:
                pass
        return canned
    return handler


def http_search_handler(tool_name: str, endpoint: str, timeout: float = 30.0):
    """GET the configured endpoint with the input as the query parameter and
    return the body. Any transport error surfaces as an exception for invoke()
    to convert into failure text."""
    def handler(input_text: str, ctx: ToolContext) -> str:
        response = httpx.get(endpoint, params={"q": input_text}, timeout=timeout)
        response.raise_for_status()
        return response.text
    return handler


# Descriptions shipped with the default catalog; the enumerated form in
# prompts is "(i) Name[input]: description".
CATALOG_DESCRIPTIONS = {
    "Google": "Worker that searches results from Google. Useful when you need to find short and succinct answers about a specific topic. The input should be a search query.",
    "Wikipedia": "Worker that search for similar page contents from Wikipedia. Useful when you need to get holistic knowledge about people, places, companies, historical events, or other subjects. The response is long and might contain some irrelevant information. The input should be a search query.",
    "WolframAlpha": "Useful when you need to solve a Mathematical or Algebraic equation. Input should be an equation or function.",
    "Calculator": "A calculator that can compute arithmetic expressions. Useful when you need to perform math calculations. Input should be a mathematical expression",
    "LLM": "A pretrained LLM like yourself. Useful when you need to act with general world knowledge and common sense. Prioritize it when you are confident in solving the problem yourself. Input can be any instruction.",
    "SearchDoc": "A vector store that searches for similar and related content in a private document collection. The result is a huge chunk of text related to your search but can also contain irrelevant info. The input should be a search query.",
    "SearchSOTU": "A vector store that searches for similar and related content in a document: state_of_the_union. The result is a huge chunk of text related to your search but can also contain irrelevant info. The input should be a search query.",
    "Yelp": "Worker that gives restaurant information including reviews, ratings and prices from Yelp. Input should be a search query.",
    "Twitter": "Worker that searches results from Twitter. Useful when you need to find tweets about a topic. Input should be a search query.",
    "Location": "Worker that retrieves user's current location. Input should be empty",
    "Time": "Worker that retrieves current time. Input should be empty",
    "Email": "Worker that can send Emails. Useful when you need to send someone email. Input should be in three parts: the target email address, subject and body, separated by a semicolon.",
    "Stock": "Worker that retrieves current stock market analysis and recommendations. Input should be empty.",
    "TradeStock": "Worker that connects to BackTrader to operate a trading strategy. Input should be in two parts, Stock ticker and indicator level, separated by semicolon.",
    "Draw": "Worker that can draw and save a picture based on your prompt. Input should be a descriptive prompt for your picture.",
}

_HTTP_TOOLS = ("Google", "Wikipedia", "WolframAlpha", "SearchDoc", "SearchSOTU")
_STUB_TOOLS = ("Yelp", "Twitter", "Location", "Time", "Email", "Stock", "TradeStock", "Draw")


def build_registry(toolset: list[str] | None = None,
                   fixture_backend: FixtureToolBackend | None = None,
                   endpoints: dict[str, str] | None = None,
                   pal_calculator: bool = False,
                   timeout: float = 30.0) -> ToolRegistry:
    """Build a registry for a toolset (default: the full catalog).

    Search tools use the fixture backend when one is given, otherwise live
    endpoints from ``endpoints``. "Search" answers as an alias of Wikipedia,
    matching the action name interleaved traces use for it.
    """
    registry = ToolRegistry()
    endpoints = endpoints or {}
    names = toolset if toolset is not None else list(CATALOG_DESCRIPTIONS)
    for name in names:
        if name == "Search" or name in registry:
            continue
        description = CATALOG_DESCRIPTIONS.get(name, f"Worker named {name}.")
        aliases = ("Search",) if name == "Wikipedia" else ()
        if name == "Calculator":
            handler = pal_calculator_handler if pal_calculator else calculator_handler
            kind = "model_backed" if pal_calculator else "deterministic"
            registry.register(ToolSpec(name, description, kind, handler))
        elif name == "LLM":
            registry.register(ToolSpec(name, description, "model_backed", llm_tool_handler))
        elif name in _HTTP_TOOLS:
            if fixture_backend is not None:
                handler = fixture_handler(name, fixture_backend)
            elif name in endpoints:
                handler = http_search_handler(name, endpoints[name], timeout=timeout)
            else:
                handler = fixture_handler(name, FixtureToolBackend())
            registry.register(ToolSpec(name, description, "http", handler), aliases=aliases)
        elif name in _STUB_TOOLS:
            registry.register(ToolSpec(name, description, "stub",
                                       stub_handler(name, fixture_backend)))
        else:
            registry.register(ToolSpec(name, description, "stub",
                                       stub_handler(name, fixture_backend)))
    return registry
