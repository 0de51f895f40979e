"""Set evaluation of hypotheses over a graph, plus an independent oracle.

The fast path (:func:`conclusion_set`) evaluates the operator tree bottom-up
with set algebra: anchors are singletons, projections are relation images,
intersection/union merge branch sets, and a negated branch is subtracted at
its merge point rather than ever materializing a bare complement.

The oracle (:func:`brute_force_conclusion`) decides membership one candidate
entity at a time by enumerating assignments for internal variables against
raw edge membership. It shares no set machinery with the fast path, which is
what makes agreement between the two a meaningful check.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ForeignSymbolError, InvalidHypothesisError, OracleBudgetError
from .graph import KnowledgeGraph
from .hypothesis import ANCHOR, INTERSECTION, NEGATION, PROJECTION, UNION, Hypothesis

ORACLE_BUDGET = 10_000


@dataclass(frozen=True)
class Conclusion:
    """Entities satisfying a hypothesis on one graph, tagged with its split."""

    entities: frozenset[int]
    graph_tag: str

    @property
    def size(self) -> int:
        return len(self.entities)


def _check_symbols(h: Hypothesis, graph: KnowledgeGraph) -> None:
    for node in h.nodes:
        if node.kind == ANCHOR and not (0 <= (node.entity or 0) < graph.num_entities):
            raise ForeignSymbolError(f"entity {node.entity} not in graph ({graph.num_entities} entities)")
    for e in h.edges:
        if e.label == PROJECTION and not (0 <= (e.relation or 0) < graph.num_relations):
            raise ForeignSymbolError(f"relation {e.relation} not in graph ({graph.num_relations} relations)")


def conclusion_set(h: Hypothesis, graph: KnowledgeGraph) -> set[int]:
    """Entities the hypothesis concludes on ``graph``. Requires a valid ``h``."""
    _check_symbols(h, graph)
    return _eval(h, graph, h.root)


def conclusion(h: Hypothesis, graph: KnowledgeGraph) -> Conclusion:
    return Conclusion(frozenset(conclusion_set(h, graph)), graph.tag)


def _eval(h: Hypothesis, graph: KnowledgeGraph, nid: int) -> set[int]:
    in_edges = h.children(nid)
    if not in_edges:
        return {h.node(nid).entity}
    op = in_edges[0].label
    if op == PROJECTION:
        return graph.out_image(_eval(h, graph, in_edges[0].child), in_edges[0].relation)
    if op == NEGATION:
        # Valid hypotheses only negate merge branches; those are consumed below.
        raise InvalidHypothesisError([f"node {nid}: negation outside a merge"])
    positive: list[set[int]] = []
    negative: list[set[int]] = []
    for e in in_edges:
        if h.operator(e.child) == NEGATION:
            inner = h.children(e.child)[0].child
            negative.append(_eval(h, graph, inner))
        else:
            positive.append(_eval(h, graph, e.child))
    if op == INTERSECTION:
        base = set.intersection(*positive) if positive else set(range(graph.num_entities))
    else:
        base = set.union(*positive) if positive else set()
        for neg in negative:
            # Not reachable through the admitted grammars (no negated union
            # branches); kept correct for defence in depth.
            base |= set(range(graph.num_entities)) - neg
        return base
    for neg in negative:
        base -= neg
    return base


def jaccard(a: set[int] | frozenset[int], b: set[int] | frozenset[int]) -> float:
    """|a & b| / |a | b|, with 0.0 when both sides are empty."""
    union = len(a | b)
    if union == 0:
        return 0.0
    return len(a & b) / union


def existential_count(h: Hypothesis) -> int:
    """Internal variables that range over the full domain during brute force."""
    return sum(
        1
        for e in h.edges
        if e.label == PROJECTION and h.node(e.child).kind != ANCHOR
    )


def brute_force_conclusion(h: Hypothesis, graph: KnowledgeGraph) -> set[int]:
    """Per-candidate truth evaluation; exponential in variable count.

    Refuses to run when the assignment space ``|V| ** (1 + existentials)``
    exceeds ``ORACLE_BUDGET``.
    """
    _check_symbols(h, graph)
    n = graph.num_entities
    space = n ** (1 + existential_count(h))
    if space > ORACLE_BUDGET:
        raise OracleBudgetError(f"{space} assignments exceed the oracle budget of {ORACLE_BUDGET}")
    edges = graph.edges
    memo: dict[tuple[int, int], bool] = {}

    def sat(nid: int, val: int) -> bool:
        key = (nid, val)
        if key in memo:
            return memo[key]
        in_edges = h.children(nid)
        if not in_edges:
            out = h.node(nid).entity == val
        else:
            op = in_edges[0].label
            if op == PROJECTION:
                r = in_edges[0].relation
                child = in_edges[0].child
                if h.node(child).kind == ANCHOR:
                    out = (h.node(child).entity, r, val) in edges
                else:
                    out = any((u, r, val) in edges and sat(child, u) for u in range(n))
            elif op == INTERSECTION:
                out = all(branch_sat(e.child, val) for e in in_edges)
            else:
                out = any(branch_sat(e.child, val) for e in in_edges)
        memo[key] = out
        return out

    def branch_sat(nid: int, val: int) -> bool:
        # Negation scopes over the whole branch, existentials included.
        if h.operator(nid) == NEGATION:
            return not sat(h.children(nid)[0].child, val)
        return sat(nid, val)

    return {val for val in range(n) if sat(h.root, val)}
