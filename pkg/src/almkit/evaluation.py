"""Scoring, dataset loading, benchmark aggregation, and planner-instruction export."""

from __future__ import annotations

import json
import logging
import string
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import engine
from .accounting import cost_per_1k
from .blueprint import parse_blueprint, render_blueprint
from .engine import ExecutionRecord, Runtime, Task
from .errors import AlmkitError
from .prompting import compose_planner_instruction

log = logging.getLogger(__name__)

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)
_ARTICLES = ("a", "an", "the")

JUDGE_PROMPT = (
    "Question: {question}\n"
    "Gold answer: {gold}\n"
    "Predicted answer: {pred}\n\n"
    "Is the predicted answer semantically equivalent to the gold answer for this "
    "question? Reply with Yes or No only."
)


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace, drop a leading article."""
    words = text.lower().translate(_PUNCT_TABLE).split()
    if words and words[0] in _ARTICLES:
        words = words[1:]
    return " ".join(words)


def exact_match(pred: str, gold: str) -> int:
    return int(normalize_answer(pred) == normalize_answer(gold))


def _bag_f1(pred_bag: Counter, gold_bag: Counter) -> float:
    if not pred_bag and not gold_bag:
        return 1.0
    if not pred_bag or not gold_bag:
        return 0.0
    overlap = sum((pred_bag & gold_bag).values())
    if overlap == 0:
        return 0.0
    precision = overlap / sum(pred_bag.values())
    recall = overlap / sum(gold_bag.values())
    return 2 * precision * recall / (precision + recall)


def char_f1(pred: str, gold: str) -> float:
    """F1 over the multisets of non-space characters of the normalized strings."""
    return _bag_f1(Counter(normalize_answer(pred).replace(" ", "")),
                   Counter(normalize_answer(gold).replace(" ", "")))


def token_f1(pred: str, gold: str) -> float:
    """Word-level variant of the same bag-of-items F1, for comparison."""
    return _bag_f1(Counter(normalize_answer(pred).split()),
                   Counter(normalize_answer(gold).split()))


def judge_accuracy(question: str, pred: str, gold: str, model) -> int:
    """Ask a judge model for a yes/no semantic-equivalence verdict.

    The leading token of the reply decides, case-insensitively. Verdicts that
    parse as neither score 0 and log a warning.
    """
    prompt = JUDGE_PROMPT.format(question=question, gold=gold, pred=pred)
    response = model.complete(prompt, call_kind="single")
    verdict = response.text.strip().split()[0].strip(string.punctuation).lower() if response.text.strip() else ""
    if verdict == "yes":
        return 1
    if verdict == "no":
        return 0
    log.warning("unparseable judge verdict %r; scoring 0", response.text[:40])
    return 0


@dataclass
class ScoredResult:
    task_id: str
    em: int
    f1: float
    tokens: int
    steps: int
    judge_acc: int | None = None

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "em": self.em,
            "f1": self.f1,
            "tokens": self.tokens,
            "steps": self.steps,
            "judge_acc": self.judge_acc,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScoredResult":
        return cls(d["task_id"], d["em"], d["f1"], d["tokens"], d["steps"], d.get("judge_acc"))


@dataclass
class BenchmarkReport:
    """One row shaped like the results table: accuracy metrics as percentages,
    mean tokens and steps per query, and the projected cost of 1000 queries."""

    benchmark: str
    paradigm: str
    n_tools: int
    n_exemplars: int
    acc: float
    f1: float
    em: float
    avg_tokens: float
    avg_steps: float
    cost_1k: float
    n_tasks: int = 0
    warnings: list[str] = field(default_factory=list)

    COLUMNS = ("Benchmark", "Paradigm", "#Tools", "n", "Acc", "F1", "EM",
               "#Tokens", "#Steps", "$Cost_1k")

    def row(self) -> tuple:
        return (
            self.benchmark, self.paradigm, str(self.n_tools), str(self.n_exemplars),
            f"{self.acc:.1f}", f"{self.f1:.1f}", f"{self.em:.1f}",
            f"{self.avg_tokens:.1f}", f"{self.avg_steps:.2f}", f"{self.cost_1k:.2f}",
        )

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark,
            "paradigm": self.paradigm,
            "n_tools": self.n_tools,
            "n_exemplars": self.n_exemplars,
            "acc": self.acc,
            "f1": self.f1,
            "em": self.em,
            "avg_tokens": self.avg_tokens,
            "avg_steps": self.avg_steps,
            "cost_1k": self.cost_1k,
            "n_tasks": self.n_tasks,
            "warnings": self.warnings,
        }


def render_table(reports: list[BenchmarkReport]) -> str:
    rows = [BenchmarkReport.COLUMNS] + [r.row() for r in reports]
    widths = [max(len(row[i]) for row in rows) for i in range(len(BenchmarkReport.COLUMNS))]
    lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
             for row in rows]
    return "\n".join(lines)


def load_dataset(path: str | Path) -> list[dict]:
    """Read a JSONL dataset of {id, question, answer} rows."""
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


@dataclass
class BenchConfig:
    """Everything a benchmark run needs besides the dataset and paradigm."""

    runtime: Runtime
    benchmark: str = "dataset"
    toolset: tuple[str, ...] = ()
    exemplar_set: str = "default"
    max_steps: int = engine.DEFAULT_MAX_STEPS
    price_per_1k: float = 0.002
    parallelism: int = 1
    f1_variant: str = "char"  # char | token
    judge_model = None


def score_record(record: ExecutionRecord, gold: str | None,
                 question: str = "", judge_model=None,
                 f1_variant: str = "char") -> ScoredResult:
    gold = gold or ""
    f1_fn = token_f1 if f1_variant == "token" else char_f1
    em = exact_match(record.answer, gold) if gold else 0
    f1 = f1_fn(record.answer, gold) if gold else 0.0
    judge = None
    if judge_model is not None:
        judge = judge_accuracy(question, record.answer, gold, judge_model)
    return ScoredResult(
        task_id=record.task_id,
        em=em,
        f1=f1,
        tokens=record.ledger.total_tokens,
        steps=record.steps,
        judge_acc=judge,
    )


def run_benchmark(dataset: list[dict], paradigm: str,
                  config: BenchConfig) -> tuple[BenchmarkReport, list[ScoredResult], list[ExecutionRecord]]:
    """Run every task, score it, and aggregate one report row.

    A task that raises is scored zero (with a warning on the report) and the
    run continues; aggregation is a deterministic fold over task ids.
    """
    rt = config.runtime
    warnings: list[str] = []

    def one(row: dict) -> tuple[ExecutionRecord | None, ScoredResult]:
        task = Task(
            id=str(row["id"]),
            question=row["question"],
            gold_answer=row.get("answer"),
            toolset=tuple(config.toolset),
            exemplar_set=config.exemplar_set,
        )
        try:
            record = engine.run_paradigm(paradigm, task, rt, max_steps=config.max_steps)
        except AlmkitError as exc:
            warnings.append(f"task {task.id} failed: {exc}")
            return None, ScoredResult(task_id=task.id, em=0, f1=0.0, tokens=0, steps=0)
        return record, score_record(record, task.gold_answer, task.question,
                                    config.judge_model, config.f1_variant)

    ordered = sorted(dataset, key=lambda row: str(row["id"]))
    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            outcomes = list(pool.map(one, ordered))
    else:
        outcomes = [one(row) for row in ordered]

    records = [record for record, _ in outcomes if record is not None]
    scores = [score for _, score in outcomes]

    n = len(scores)
    mean = lambda values: (sum(values) / n) if n else 0.0
    em_pct = 100.0 * mean([s.em for s in scores])
    f1_pct = 100.0 * mean([s.f1 for s in scores])
    judged = [s.judge_acc for s in scores if s.judge_acc is not None]
    # Semantic accuracy needs a judge; without one the row mirrors exact match.
    acc_pct = 100.0 * (sum(judged) / n) if judged else em_pct
    avg_tokens = mean([s.tokens for s in scores])

    report = BenchmarkReport(
        benchmark=config.benchmark,
        paradigm=paradigm,
        n_tools=len(config.toolset) if config.toolset else len(rt.registry.names()),
        n_exemplars=len(rt.exemplar_sets.get(config.exemplar_set, [])),
        acc=acc_pct,
        f1=f1_pct,
        em=em_pct,
        avg_tokens=avg_tokens,
        avg_steps=mean([s.steps for s in scores]),
        cost_1k=cost_per_1k(avg_tokens, config.price_per_1k),
        n_tasks=n,
        warnings=warnings,
    )
    return report, scores, records


@dataclass
class InstructionRecord:
    """An instruction-tuning triple whose output is validated blueprint text."""

    instruction: str
    input: str
    output: str

    def __post_init__(self):
        parse_blueprint(self.output, mode="strict")

    def to_dict(self) -> dict:
        return {"instruction": self.instruction, "input": self.input, "output": self.output}


def export_planner_instructions(records: list[ExecutionRecord],
                                scores: list[ScoredResult],
                                runtime: Runtime,
                                toolset: tuple[str, ...] = (),
                                use_judge: bool = False) -> list[InstructionRecord]:
    """Keep the plan of every correctly answered run as instruction data.

    Records and scores must align by task id. The instruction field is the
    zero-shot planner context; the output is the canonical rendering of the
    run's blueprint, which must re-parse strictly.
    """
    by_id = {s.task_id: s for s in scores}
    out: list[InstructionRecord] = []
    names = list(toolset) if toolset else runtime.registry.names()
    instruction = compose_planner_instruction(runtime.templates, runtime.registry.describe(names))
    for record in records:
        if record.paradigm != "rewoo" or record.blueprint is None:
            continue
        score = by_id.get(record.task_id)
        if score is None:
            raise ValueError(f"no score aligned with record {record.task_id}")
        correct = (score.judge_acc == 1) if use_judge else (score.em == 1)
        if not correct:
            continue
        out.append(InstructionRecord(
            instruction=instruction,
            input=record.question,
            output=render_blueprint(record.blueprint),
        ))
    return out
