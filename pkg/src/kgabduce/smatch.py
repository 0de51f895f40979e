"""Structural similarity between hypotheses, smatch-style.

A hypothesis is viewed as a logical-atom graph: one node per logical variable
(the target plus each existential), one shared virtual concept node that every
variable points at through an ``instance`` triple, attribute triples from a
variable to an anchor entity, and relation triples between variables. Negated
atoms keep their relation label but carry a polarity marker, so a negated atom
never matches a positive one.

The score is the triple-match F1 under the best injective mapping from the
prediction's variables to the gold's, found by greedy hill-climbing from one
heuristic start plus a fixed number of seeded random restarts. Instance
triples match whenever both endpoints are mapped, which deliberately gives any
two mappable hypotheses a small baseline overlap: two structurally unrelated
one-hop hypotheses score exactly 0.5.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass

from .hypothesis import ANCHOR, INTERSECTION, NEGATION, PROJECTION, UNION, Hypothesis, ensure_valid

DEFAULT_RESTARTS = 10

# (variable, (negated, relation), entity) and (variable, (negated, relation), variable)
AttributeTriple = tuple[int, tuple[bool, int], int]
RelationTriple = tuple[int, tuple[bool, int], int]


@dataclass(frozen=True)
class AmrView:
    num_variables: int
    attributes: tuple[AttributeTriple, ...]
    relations: tuple[RelationTriple, ...]

    @property
    def triple_count(self) -> int:
        # Every variable contributes one instance triple to the virtual node.
        return self.num_variables + len(self.attributes) + len(self.relations)


def to_amr_view(h: Hypothesis) -> AmrView:
    """Flatten a valid hypothesis into its logical-atom graph."""
    ensure_valid(h)
    attributes: list[AttributeTriple] = []
    relations: list[RelationTriple] = []
    counter = itertools.count(1)

    def visit(nid: int, var: int, negated: bool) -> None:
        op = h.operator(nid)
        if op in (INTERSECTION, UNION):
            for e in h.children(nid):
                visit(e.child, var, False)
        elif op == NEGATION:
            visit(h.children(nid)[0].child, var, True)
        elif op == PROJECTION:
            edge = h.children(nid)[0]
            label = (negated, edge.relation)
            if h.node(edge.child).kind == ANCHOR:
                attributes.append((var, label, h.node(edge.child).entity))
            else:
                child_var = next(counter)
                relations.append((var, label, child_var))
                visit(edge.child, child_var, False)

    visit(h.root, 0, False)
    return AmrView(next(counter), tuple(attributes), tuple(relations))


def _match_count(pred: AmrView, gold: AmrView, mapping: dict[int, int | None]) -> int:
    matched = sum(1 for v in range(pred.num_variables) if mapping.get(v) is not None)
    pred_attrs = Counter(
        (mapping[v], label, ent)
        for v, label, ent in pred.attributes
        if mapping.get(v) is not None
    )
    matched += sum((pred_attrs & Counter(gold.attributes)).values())
    pred_rels = Counter(
        (mapping[a], label, mapping[b])
        for a, label, b in pred.relations
        if mapping.get(a) is not None and mapping.get(b) is not None
    )
    matched += sum((pred_rels & Counter(gold.relations)).values())
    return matched


def _f1(match: int, pred: AmrView, gold: AmrView) -> float:
    total = pred.triple_count + gold.triple_count
    return 2.0 * match / total if total else 0.0


def _greedy_start(pred: AmrView, gold: AmrView) -> dict[int, int | None]:
    """Assign variables one by one, locally maximizing the match count."""
    mapping: dict[int, int | None] = {v: None for v in range(pred.num_variables)}
    used: set[int] = set()
    for v in range(pred.num_variables):
        best_target: int | None = None
        best_score = _match_count(pred, gold, mapping)
        for g in range(gold.num_variables):
            if g in used:
                continue
            mapping[v] = g
            score = _match_count(pred, gold, mapping)
            if score > best_score:
                best_score, best_target = score, g
        mapping[v] = best_target
        if best_target is not None:
            used.add(best_target)
    return mapping


def _random_start(pred: AmrView, gold: AmrView, rng: random.Random) -> dict[int, int | None]:
    targets: list[int | None] = list(range(gold.num_variables))
    rng.shuffle(targets)
    while len(targets) < pred.num_variables:
        targets.append(None)
    return {v: targets[v] for v in range(pred.num_variables)}


def _climb(pred: AmrView, gold: AmrView, mapping: dict[int, int | None]) -> int:
    """Greedy local search over remap and swap moves; returns the match count."""
    current = _match_count(pred, gold, mapping)
    improved = True
    while improved:
        improved = False
        best_move: dict[int, int | None] | None = None
        best_score = current
        used = {g for g in mapping.values() if g is not None}
        for v in range(pred.num_variables):
            original = mapping[v]
            for g in [*range(gold.num_variables), None]:
                if g == original:
                    continue
                if g is not None and g in used and g != original:
                    # Swap with the variable currently holding g.
                    other = next(u for u, t in mapping.items() if t == g)
                    trial = dict(mapping)
                    trial[v], trial[other] = g, original
                else:
                    trial = dict(mapping)
                    trial[v] = g
                score = _match_count(pred, gold, trial)
                if score > best_score:
                    best_score, best_move = score, trial
        if best_move is not None:
            mapping.clear()
            mapping.update(best_move)
            current = best_score
            improved = True
    return current


def smatch_score(
    pred: Hypothesis,
    gold: Hypothesis,
    restarts: int = DEFAULT_RESTARTS,
    seed: int = 0,
) -> float:
    """Best-mapping triple F1 between two valid hypotheses."""
    pv, gv = to_amr_view(pred), to_amr_view(gold)
    rng = random.Random(seed)
    best = _climb(pv, gv, _greedy_start(pv, gv))
    for _ in range(restarts):
        best = max(best, _climb(pv, gv, _random_start(pv, gv, rng)))
    return _f1(best, pv, gv)


def exhaustive_smatch_score(pred: Hypothesis, gold: Hypothesis) -> float:
    """Exact best-mapping F1 by enumerating injective mappings. Test oracle."""
    pv, gv = to_amr_view(pred), to_amr_view(gold)
    targets: list[int | None] = [*range(gv.num_variables), *([None] * pv.num_variables)]
    best = 0
    for combo in itertools.permutations(targets, pv.num_variables):
        mapping = dict(enumerate(combo))
        best = max(best, _match_count(pv, gv, mapping))
    return _f1(best, pv, gv)
