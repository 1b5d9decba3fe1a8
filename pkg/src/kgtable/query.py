"""Chain execution as an in-memory path query, plus SPARQL text rendering.

Evaluation is breadth-wise frontier expansion per hop with per-hop
deduplication of bindings, so memory is bounded by distinct entities (or
distinct (x, node) bindings in the second segment) rather than by path
multiplicity. A deterministic node-expansion budget stands in for a
wall-clock timeout; exceeding it discards all partial results.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

from .graph import KnowledgeGraph, PredicateToken
from .paths import ChainPair, MetaPath

SPARQL_PREFIX = "prefix a: <http://rdf.basekb.com/ns/>"


@dataclass(frozen=True)
class QueryBudget:
    max_rows: int = 10000
    max_steps: int = 1_000_000

    def __post_init__(self):
        if self.max_rows <= 0 or self.max_steps <= 0:
            raise ValueError("budget limits must be positive")


@dataclass(frozen=True)
class BudgetExceeded:
    """Marker result: the query ran over budget and its partial output was discarded."""

    reason: str  # "rows" or "steps"


@dataclass(frozen=True)
class TupleSet:
    pairs: frozenset[tuple[int, int]]

    def ordered(self) -> list[tuple[int, int]]:
        return sorted(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __contains__(self, pair: tuple[int, int]) -> bool:
        return pair in self.pairs

    def __iter__(self) -> Iterator[tuple[int, int]]:
        return iter(self.pairs)


class _StepCounter:
    __slots__ = ("left",)

    def __init__(self, budget: QueryBudget | None):
        self.left = budget.max_steps if budget else None

    def spend(self) -> bool:
        """Charge one node expansion; False once the budget is gone."""
        if self.left is None:
            return True
        if self.left <= 0:
            return False
        self.left -= 1
        return True


def _walk_frontier(
    g: KnowledgeGraph,
    frontier: set[int],
    tokens: tuple[PredicateToken, ...],
    steps: _StepCounter,
) -> set[int] | BudgetExceeded:
    cur = frontier
    for tok in tokens:
        nxt: set[int] = set()
        for e in cur:
            if not steps.spend():
                return BudgetExceeded("steps")
            for t, nbr in g.adjacency(e):
                if t == tok:
                    nxt.add(nbr)
        cur = nxt
        if not cur:
            break
    return cur


def execute_prefix(
    g: KnowledgeGraph,
    se: int,
    p1: MetaPath,
    budget: QueryBudget | None = None,
) -> set[int] | BudgetExceeded:
    """Distinct entities reached from ``se`` via ``p1``."""
    g._check(se)
    steps = _StepCounter(budget)
    xs = _walk_frontier(g, {se}, p1.tokens, steps)
    if isinstance(xs, BudgetExceeded):
        return xs
    if budget is not None and len(xs) > budget.max_rows:
        return BudgetExceeded("rows")
    return xs


def execute_chain(
    g: KnowledgeGraph,
    se: int,
    chain: ChainPair,
    budget: QueryBudget | None = None,
) -> TupleSet | BudgetExceeded:
    """All distinct (x, y) pairs with x reached via P1 from ``se`` and y via P2 from x."""
    g._check(se)
    steps = _StepCounter(budget)

    xs = _walk_frontier(g, {se}, chain.p1.tokens, steps)
    if isinstance(xs, BudgetExceeded):
        return xs

    # Second segment tracks (x, node) bindings, deduplicated per hop.
    bindings = {(x, x) for x in xs}
    for tok in chain.p2.tokens:
        nxt: set[tuple[int, int]] = set()
        for x, node in bindings:
            if not steps.spend():
                return BudgetExceeded("steps")
            for t, nbr in g.adjacency(node):
                if t == tok:
                    nxt.add((x, nbr))
        bindings = nxt
        if not bindings:
            break

    if budget is not None and len(bindings) > budget.max_rows:
        return BudgetExceeded("rows")
    return TupleSet(frozenset(bindings))


def _render_segment(path: MetaPath) -> str:
    return "/".join(
        ("^a:" + t.name) if t.inverse else ("a:" + t.name) for t in path.tokens
    )


def render_sparql(se_mid: str, chain: ChainPair) -> str:
    """Render the chain as SPARQL text selecting distinct (?x, ?y) pairs.

    The five-line template is fixed and golden-file tested byte for byte;
    inverse tokens use the property-path inverse operator ``^``.
    """
    return (
        f"{SPARQL_PREFIX}\n"
        "SELECT DISTINCT ?x ?y WHERE{\n"
        f"a:{se_mid} {_render_segment(chain.p1)} ?x .\n"
        f"?x {_render_segment(chain.p2)} ?y.\n"
        "}\n"
    )
