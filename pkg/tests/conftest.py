"""Shared fixtures: a small worked-example graph and random generators."""

from __future__ import annotations

import random

import pytest

from kgabduce.errors import SamplingError
from kgabduce.graph import KnowledgeGraph
from kgabduce.hypothesis import Hypothesis, make_pattern, template_slots
from kgabduce.sampler import ground_type

# Gadget-shop toy: Apple branded three devices, two of them released in 2010,
# one of those is typed as a phone. Mirrors the worked negation example.
GADGET_ENTITIES = ("Apple", "iPhone4", "MacBook", "iPad", "Y2010", "Phone")
GADGET_RELATIONS = ("Brand", "Release", "Type")
GADGET_EDGES = frozenset(
    {
        (0, 0, 1),  # Apple Brand iPhone4
        (0, 0, 2),  # Apple Brand MacBook
        (0, 0, 3),  # Apple Brand iPad
        (4, 1, 1),  # Y2010 Release iPhone4
        (4, 1, 2),  # Y2010 Release MacBook
        (4, 1, 3),  # Y2010 Release iPad
        (5, 2, 1),  # Phone Type iPhone4
    }
)


@pytest.fixture()
def gadget_graph() -> KnowledgeGraph:
    return KnowledgeGraph(GADGET_ENTITIES, GADGET_RELATIONS, GADGET_EDGES)


def make_random_graph(
    rng: random.Random,
    n_entities: int = 30,
    n_relations: int = 4,
    n_edges: int = 90,
) -> KnowledgeGraph:
    edges = set()
    for _ in range(n_edges):
        edges.add((rng.randrange(n_entities), rng.randrange(n_relations), rng.randrange(n_entities)))
    return KnowledgeGraph(
        tuple(f"e{i}" for i in range(n_entities)),
        tuple(f"r{j}" for j in range(n_relations)),
        frozenset(edges),
    )


def random_hypothesis(rng: random.Random, graph: KnowledgeGraph, pattern: str) -> Hypothesis:
    """A valid pattern instance: grounded from the graph when possible, else
    filled with uniform ids (which may conclude nothing, on purpose)."""
    if rng.random() < 0.5:
        for _ in range(8):
            try:
                return ground_type(graph, pattern, rng, rng.randrange(graph.num_entities))
            except SamplingError:
                continue
    n_rel, n_ent = template_slots(pattern)
    return make_pattern(
        pattern,
        [rng.randrange(graph.num_relations) for _ in range(n_rel)],
        [rng.randrange(graph.num_entities) for _ in range(n_ent)],
    )
