"""Tool-augmented language model orchestration with exact token accounting."""

__version__ = "0.1.0"

from .blueprint import (
    Blueprint,
    DepGraph,
    EvidenceVarId,
    PlanStep,
    build_dep_graph,
    parse_blueprint,
    render_blueprint,
)
from .engine import (
    ExecutionRecord,
    ReactStep,
    Runtime,
    Task,
    parse_react_step,
    run_paradigm,
    run_react,
    run_rewoo,
    run_single,
    step_count,
)
from .accounting import (
    TokenLedger,
    WhitespaceTokenizer,
    cost_per_1k,
    count_tokens,
    decompose_ledger,
    predict_rewoo_tokens,
    predict_tao_tokens,
)
from .model import ModelClient, ReplayStore, ScriptedBackend, digest
from .prompting import (
    Exemplar,
    PromptTemplate,
    ToolDescription,
    compose_planner_prompt,
    compose_react_prompt,
    compose_solver_prompt,
    default_templates,
)
from .tools import (
    EvidenceMap,
    FailureInjection,
    ToolRegistry,
    build_registry,
    eval_arithmetic,
    invoke,
    substitute_evidence,
)
from .evaluation import (
    BenchmarkReport,
    ScoredResult,
    char_f1,
    exact_match,
    export_planner_instructions,
    normalize_answer,
    run_benchmark,
    token_f1,
)
