"""Exception hierarchy shared across the package."""


class AlmkitError(Exception):
    """Base class for all almkit errors."""


# --- parsing ---------------------------------------------------------------

class ParseError(AlmkitError):
    """A piece of model output could not be parsed in strict mode."""


class MalformedStep(ParseError):
    """A Plan line without its evidence assignment, or vice versa."""


class DuplicateVar(ParseError):
    """The same evidence variable is assigned more than once."""


class BadToolSyntax(ParseError):
    """A statement does not have the Tool[input] shape."""


class NoAction(ParseError):
    """A reasoning-step completion contains no Action line."""


class ExpressionError(ParseError):
    """An arithmetic expression is malformed."""


class DivisionByZero(AlmkitError):
    """Arithmetic evaluation divided by zero."""


# --- dependency graph ------------------------------------------------------

class GraphError(AlmkitError):
    """Base class for blueprint dependency-graph errors."""


class ForwardReference(GraphError):
    """A tool input references a variable defined by a later step."""


class UndefinedReference(GraphError):
    """A tool input references a variable no step defines."""


class CycleDetected(GraphError):
    """The dependency graph contains a cycle."""


# --- prompting -------------------------------------------------------------

class TemplateError(AlmkitError):
    """Base class for prompt template errors."""


class MissingPlaceholder(TemplateError):
    """A template lacks a placeholder the composer needs."""


class EmptyTask(TemplateError):
    """The task question is empty after trimming."""


# --- model backends --------------------------------------------------------

class ModelError(AlmkitError):
    """Base class for model call failures."""


class NetworkError(ModelError):
    """Transport-level failure talking to a live endpoint."""


class RateLimited(ModelError):
    """The endpoint asked us to back off and retries were exhausted."""


class ReplayMiss(ModelError):
    """Replay mode saw a prompt with no recorded response."""


class ContextLimit(ModelError):
    """Prompt plus requested output would exceed the context window."""


# --- tools -----------------------------------------------------------------

class ToolError(AlmkitError):
    """Base class for worker-layer errors."""


class UnknownTool(ToolError):
    """A tool name is not registered."""


class UnresolvedReference(ToolError):
    """Strict substitution found a reference with no evidence."""


class ToolFixtureMiss(ToolError):
    """The fixture backend has no entry for (tool, input)."""


# --- accounting ------------------------------------------------------------

class UnknownVocabulary(AlmkitError):
    """A byte-pair tokenizer was asked for a vocabulary that is not vendored."""


class MissingBreakdown(AlmkitError):
    """A ledger entry lacks the component breakdown needed to decompose it."""


# --- engine / cli ----------------------------------------------------------

class PlannerParseFailure(AlmkitError):
    """Strict-mode run could not parse the planner completion."""


class ConfigError(AlmkitError):
    """Invalid run configuration."""
