"""One-hop hypothesis search."""

from __future__ import annotations

import random

from kgabduce.executor import conclusion_set, jaccard
from kgabduce.graph import KnowledgeGraph
from kgabduce.hypothesis import make_pattern, pattern_of
from kgabduce.search import one_hop_search

from conftest import make_random_graph


def test_returns_best_one_hop_by_exhaustive_rescan():
    rng = random.Random(0)
    for _ in range(50):
        g = make_random_graph(rng, n_entities=20, n_relations=3, n_edges=60)
        obs = set(rng.sample(range(g.num_entities), rng.randrange(1, 6)))
        found = one_hop_search(obs, g)
        best = 0.0
        for r in range(g.num_relations):
            for h in range(g.num_entities):
                image = g.out_image([h], r)
                if image:
                    best = max(best, jaccard(image, obs))
        if found is None:
            assert best == 0.0
        else:
            assert pattern_of(found) == "1p"
            got = jaccard(conclusion_set(found, g), obs)
            assert got == best


def test_exact_cover_wins(gadget_graph):
    found = one_hop_search({1, 2, 3}, gadget_graph)
    assert found is not None
    assert conclusion_set(found, gadget_graph) == {1, 2, 3}


def test_tie_break_prefers_smallest_relation_then_head():
    # Two relations produce the same image; relation 0 must win.
    g = KnowledgeGraph(
        ("a", "b", "x"),
        ("r0", "r1"),
        frozenset({(0, 0, 2), (0, 1, 2), (1, 1, 2)}),
    )
    found = one_hop_search({2}, g)
    rels = [e.relation for e in found.edges if e.relation is not None]
    anchors = [n.entity for n in found.nodes if n.entity is not None]
    assert rels == [0] and anchors == [0]


def test_no_candidates_returns_none():
    g = KnowledgeGraph(("a", "b"), ("r",), frozenset({(0, 0, 1)}))
    assert one_hop_search({0}, g) is None


def test_candidates_come_from_incoming_edges_only(gadget_graph):
    # Observation {5} has no incoming edges on the gadget graph.
    assert one_hop_search({5}, gadget_graph) is None
    # {1} is reachable three ways; Brand(Apple) covers {1,2,3} -> 1/3,
    # Type(Phone) covers exactly {1} -> 1.0 and wins.
    found = one_hop_search({1}, gadget_graph)
    assert conclusion_set(found, gadget_graph) == {1}
