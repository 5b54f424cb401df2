"""Token counting, per-call ledgers, closed-form input-token predictors, and cost estimation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import MissingBreakdown, UnknownVocabulary

_DATA_DIR = Path(__file__).parent / "data"

# Input-token components tracked per model call.
COMPONENTS = ("question", "context", "exemplars", "steps")

DEFAULT_PRICE_PER_1K = 0.002


class WhitespaceTokenizer:
    """Counts whitespace-separated words. Deterministic and additive across
    segments joined by whitespace, which is what the exactness checks rely on."""

    scheme = "whitespace"

    def count(self, text: str) -> int:
        return len(text.split())


class BytePairTokenizer:
    """Byte-pair token counter over a small vendored merge table.

    Gives more realistic counts than word splitting; the vendored vocabulary is
    trained on the bundled trajectory corpus, not on any provider's data.
    """

    def __init__(self, vocab_id: str = "default"):
        self.scheme = f"byte_pair:{vocab_id}"
        self.vocab_id = vocab_id
        path = _DATA_DIR / "bpe" / f"{vocab_id}.json"
        if not path.exists():
            raise UnknownVocabulary(f"no vendored byte-pair vocabulary named {vocab_id!r}")
        merges = json.loads(path.read_text(encoding="utf-8"))["merges"]
        self._ranks = {(tuple(a), tuple(b)): rank for rank, (a, b) in enumerate(merges)}

    def encode(self, text: str) -> list[tuple[int, ...]]:
        tokens = [(b,) for b in text.encode("utf-8")]
        ranks = self._ranks
        while len(tokens) > 1:
            best = None
            best_rank = None
            for i in range(len(tokens) - 1):
                rank = ranks.get((tokens[i], tokens[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best, best_rank = i, rank
            if best is None:
                break
            merged = tokens[best] + tokens[best + 1]
            tokens[best:best + 2] = [merged]
        return tokens

    def count(self, text: str) -> int:
        if not text:
            return 0
        return len(self.encode(text))


def train_byte_pair_merges(corpus: str, n_merges: int = 512) -> list[list]:
    """Learn a merge table from a corpus by repeatedly fusing the most frequent
    adjacent token pair. Ties break lexicographically so training is deterministic."""
    tokens = [(b,) for b in corpus.encode("utf-8")]
    merges: list[list] = []
    for _ in range(n_merges):
        counts: dict[tuple, int] = {}
        for a, b in zip(tokens, tokens[1:]):
            counts[(a, b)] = counts.get((a, b), 0) + 1
        if not counts:
            break
        (a, b), freq = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if freq < 2:
            break
        merges.append([list(a), list(b)])
        merged = a + b
        out = []
        i = 0
        while i < len(tokens):
            if i + 1 < len(tokens) and tokens[i] == a and tokens[i + 1] == b:
                out.append(merged)
                i += 2
            else:
                out.append(tokens[i])
                i += 1
        tokens = out
    return merges


def get_tokenizer(scheme: str):
    """Build a tokenizer from a scheme string: "whitespace" or "byte_pair[:vocab]"."""
    if scheme == "whitespace":
        return WhitespaceTokenizer()
    if scheme == "byte_pair" or scheme.startswith("byte_pair:"):
        _, _, vocab = scheme.partition(":")
        return BytePairTokenizer(vocab or "default")
    raise UnknownVocabulary(f"unknown tokenizer scheme {scheme!r}")


def count_tokens(text: str, tokenizer) -> int:
    return tokenizer.count(text)


@dataclass
class LedgerEntry:
    """One model call: token counts plus the input's per-component breakdown."""

    call_kind: str  # planner | solver | react_step | tool_model | single
    input_tokens: int
    output_tokens: int
    breakdown: dict[str, int] | None = None

    def to_dict(self) -> dict:
        return {
            "call_kind": self.call_kind,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "breakdown": self.breakdown,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerEntry":
        return cls(d["call_kind"], d["input_tokens"], d["output_tokens"], d.get("breakdown"))


@dataclass
class TokenLedger:
    """Append-only record of every model call made during one run."""

    entries: list[LedgerEntry] = field(default_factory=list)

    def add(self, call_kind: str, input_tokens: int, output_tokens: int,
            breakdown: dict[str, int] | None = None) -> LedgerEntry:
        entry = LedgerEntry(call_kind, input_tokens, output_tokens, breakdown)
        self.entries.append(entry)
        return entry

    @property
    def input_tokens(self) -> int:
        return sum(e.input_tokens for e in self.entries)

    @property
    def output_tokens(self) -> int:
        return sum(e.output_tokens for e in self.entries)

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens

    def count_calls(self, *call_kinds: str) -> int:
        if not call_kinds:
            return len(self.entries)
        return sum(1 for e in self.entries if e.call_kind in call_kinds)

    def to_dict(self) -> dict:
        return {
            "entries": [e.to_dict() for e in self.entries],
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "total_tokens": self.total_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TokenLedger":
        return cls(entries=[LedgerEntry.from_dict(e) for e in d.get("entries", [])])


def predict_tao_tokens(q: int, c: int, s: int, tao_sizes: list[int]) -> int:
    """Total input tokens for an interleaved thought/action/observation run.

    The full prompt (context, exemplars, question, and every earlier step)
    is re-sent on each of the k calls, so step j's text is charged k-j times:

        k*q + k*c + k*s + sum_{j=1..k-1} (k-j) * tao_sizes[j-1]
    """
    k = len(tao_sizes)
    if k < 1:
        raise ValueError("at least one step required")
    total = k * (q + c + s)
    for j in range(1, k):
        total += (k - j) * tao_sizes[j - 1]
    return total


def predict_rewoo_tokens(q: int, c_planner: int, c_solver: int, s: int,
                         pe_sizes: list[int]) -> int:
    """Total input tokens for a plan-ahead run: one planner call plus one
    solver call, so every component is sent at most twice regardless of k:

        (c_planner + s + q) + (c_solver + q + sum(pe_sizes))
    """
    return (c_planner + s + q) + (c_solver + q + sum(pe_sizes))


def cost_per_1k(avg_tokens_per_query: float, price_per_1k_tokens: float) -> float:
    """Dollar cost of 1000 queries: 1000 queries x avg tokens x price per 1000 tokens."""
    if avg_tokens_per_query < 0 or price_per_1k_tokens < 0:
        raise ValueError("inputs must be non-negative")
    return avg_tokens_per_query * price_per_1k_tokens


@dataclass
class PricingTable:
    """Per-model price in currency units per 1000 tokens."""

    prices: dict[str, float] = field(default_factory=dict)
    default: float = DEFAULT_PRICE_PER_1K

    def price(self, model_id: str) -> float:
        return self.prices.get(model_id, self.default)

    @classmethod
    def load(cls, path: str | Path) -> "PricingTable":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        default = raw.pop("default", DEFAULT_PRICE_PER_1K)
        for model_id, value in raw.items():
            if value < 0:
                raise ValueError(f"negative price for {model_id}")
        return cls(prices=raw, default=default)


def default_pricing() -> PricingTable:
    return PricingTable.load(_DATA_DIR / "pricing.json")


# Call kinds whose prompts are composed by the prompting module and therefore
# must carry a component breakdown.
_COMPOSED_KINDS = {"planner", "solver", "react_step", "single"}


def decompose_ledger(record) -> dict[str, int]:
    """Aggregate input tokens per component across all calls of a run.

    Components of repeated prompts (an interleaved run re-sends exemplars on
    every call) accumulate once per call, which is exactly the repetition the
    decomposition is meant to surface.
    """
    totals = {component: 0 for component in COMPONENTS}
    for entry in record.ledger.entries:
        if entry.breakdown is None:
            if entry.call_kind in _COMPOSED_KINDS:
                raise MissingBreakdown(f"{entry.call_kind} entry has no breakdown")
            continue
        for component, count in entry.breakdown.items():
            totals[component] = totals.get(component, 0) + count
    return totals
