"""Explainable one-hop hypothesis search baseline.

Candidates are every ``(head, relation)`` pair with at least one training edge
into an observed entity; the winner maximizes training-graph Jaccard against
the observation. Ties go to the smallest ``(relation id, head id)`` pair.
"""

from __future__ import annotations

from typing import Iterable

from .executor import jaccard
from .graph import KnowledgeGraph
from .hypothesis import Hypothesis, make_pattern


def one_hop_search(observation: Iterable[int], graph: KnowledgeGraph) -> Hypothesis | None:
    """Best single-projection hypothesis for an observation, or None.

    None only happens when no training edge points at any observed entity.
    """
    obs = set(observation)
    candidates = sorted({(r, h) for t in obs for (h, r) in graph.in_edges(t)})
    best: tuple[int, int] | None = None
    best_score = -1.0
    for rel, head in candidates:
        score = jaccard(graph.out_image((head,), rel), obs)
        if score > best_score:
            best_score, best = score, (rel, head)
    if best is None:
        return None
    return make_pattern("1p", [best[0]], [best[1]])
