"""Hypothesis ASTs: rooted operator trees over a knowledge graph's id space.

A hypothesis is a tree of nodes (one target root, internal variables, anchor
leaves) whose edges point child -> parent and carry the *parent's* operator:
a relation projection, an intersection or union merge, or a negation marker.
Thirteen named patterns are admitted; everything else fails validation.

Edge label semantics, by example: the two-hop chain ``r2(V1, V?)`` with
``r1(e1, V1)`` is target <- var <- anchor where the (var, target) edge is
labeled projection(r2) and the (anchor, var) edge projection(r1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import InvalidHypothesisError

ANCHOR = "anchor"
VARIABLE = "variable"
TARGET = "target"
NODE_KINDS = (ANCHOR, VARIABLE, TARGET)

PROJECTION = "projection"
INTERSECTION = "intersection"
UNION = "union"
NEGATION = "negation"
EDGE_LABELS = (PROJECTION, INTERSECTION, UNION, NEGATION)

# How many in-edges a node with the given operator takes.
OPERATOR_ARITY = {PROJECTION: 1, NEGATION: 1, INTERSECTION: 2, UNION: 2}

PATTERNS = ("1p", "2p", "2i", "3i", "ip", "pi", "2u", "up", "2in", "3in", "inp", "pin", "pni")
EPFO_PATTERNS = PATTERNS[:8]
NEGATION_PATTERNS = PATTERNS[8:]


@dataclass(frozen=True)
class Node:
    id: int
    kind: str
    entity: int | None = None


@dataclass(frozen=True)
class Edge:
    child: int
    parent: int
    label: str
    relation: int | None = None


@dataclass(frozen=True)
class Hypothesis:
    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    pattern: str | None = None

    # Adjacency indexes; tolerant of malformed graphs so validate() can report
    # violations instead of crashing at construction time.
    _in_edges: dict = field(init=False, repr=False, compare=False)
    _parent_edges: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        inc: dict[int, list[Edge]] = {}
        par: dict[int, list[Edge]] = {}
        for e in self.edges:
            inc.setdefault(e.parent, []).append(e)
            par.setdefault(e.child, []).append(e)
        object.__setattr__(self, "_in_edges", inc)
        object.__setattr__(self, "_parent_edges", par)

    def children(self, node_id: int) -> tuple[Edge, ...]:
        """In-edges of ``node_id`` (the subtrees merged or projected into it)."""
        return tuple(self._in_edges.get(node_id, ()))

    def parent_edges(self, node_id: int) -> tuple[Edge, ...]:
        return tuple(self._parent_edges.get(node_id, ()))

    def node(self, node_id: int) -> Node:
        return self.nodes[node_id]

    @property
    def root(self) -> int:
        """The unique parentless node. Only meaningful on validated graphs."""
        for n in self.nodes:
            if n.id not in self._parent_edges:
                return n.id
        raise InvalidHypothesisError(["no root node"])

    def operator(self, node_id: int) -> str | None:
        """The operator computing ``node_id``, or None for leaves."""
        edges = self._in_edges.get(node_id)
        return edges[0].label if edges else None


def validate(h: Hypothesis) -> list[str]:
    """Structural and grammar checks. Returns violations; empty means valid."""
    v: list[str] = []
    n = len(h.nodes)
    if n == 0:
        return ["hypothesis has no nodes"]
    if [node.id for node in h.nodes] != list(range(n)):
        return ["node ids must be 0..n-1 in positional order"]

    for node in h.nodes:
        if node.kind not in NODE_KINDS:
            v.append(f"node {node.id}: unknown kind {node.kind!r}")
        if node.kind == ANCHOR:
            if not isinstance(node.entity, int) or node.entity < 0:
                v.append(f"node {node.id}: anchor needs a non-negative entity id")
        elif node.entity is not None:
            v.append(f"node {node.id}: only anchors carry an entity")

    for e in h.edges:
        if not (0 <= e.child < n and 0 <= e.parent < n):
            return v + [f"edge ({e.child}, {e.parent}) references a missing node"]
        if e.child == e.parent:
            v.append(f"edge ({e.child}, {e.parent}): self-loop")
        if e.label not in EDGE_LABELS:
            v.append(f"edge ({e.child}, {e.parent}): unknown label {e.label!r}")
        elif e.label == PROJECTION:
            if not isinstance(e.relation, int) or e.relation < 0:
                v.append(f"edge ({e.child}, {e.parent}): projection needs a relation id")
        elif e.relation is not None:
            v.append(f"edge ({e.child}, {e.parent}): only projections carry a relation")
    if v:
        return v

    roots = [node.id for node in h.nodes if not h.parent_edges(node.id)]
    if len(roots) != 1:
        return [f"expected exactly one root, found {len(roots)}"]
    root = roots[0]
    if h.node(root).kind != TARGET:
        v.append("root must be the target node")
    for node in h.nodes:
        parents = h.parent_edges(node.id)
        if node.id != root and len(parents) != 1:
            v.append(f"node {node.id}: expected exactly one parent, found {len(parents)}")
        if node.id != root and node.kind == TARGET:
            v.append(f"node {node.id}: extra target node")

    # Reachability from the root; with single parents this also rules out cycles.
    seen = {root}
    frontier = [root]
    while frontier:
        nid = frontier.pop()
        for e in h.children(nid):
            if e.child not in seen:
                seen.add(e.child)
                frontier.append(e.child)
    if len(seen) != n:
        v.append(f"{n - len(seen)} node(s) unreachable from the root")
    if v:
        return v

    for node in h.nodes:
        in_edges = h.children(node.id)
        if node.kind == ANCHOR:
            if in_edges:
                v.append(f"node {node.id}: anchors must be leaves")
            continue
        if not in_edges:
            v.append(f"node {node.id}: non-anchor without children")
            continue
        labels = {e.label for e in in_edges}
        if len(labels) != 1:
            v.append(f"node {node.id}: mixed in-edge labels {sorted(labels)}")
            continue
        op = in_edges[0].label
        if len(in_edges) != OPERATOR_ARITY[op]:
            v.append(f"node {node.id}: {op} takes {OPERATOR_ARITY[op]} children, found {len(in_edges)}")
        if op == NEGATION:
            if node.id == root:
                v.append("negation cannot be the root operator")
            else:
                parent_label = h.parent_edges(node.id)[0].label
                if parent_label not in (INTERSECTION, UNION):
                    v.append(f"node {node.id}: negation must be a merge branch, not under {parent_label}")
    if v:
        return v

    if match_pattern(h, root) is None:
        v.append("does not match any admitted hypothesis pattern")
    return v


def ensure_valid(h: Hypothesis) -> Hypothesis:
    """Raise :class:`InvalidHypothesisError` unless ``h`` validates cleanly."""
    violations = validate(h)
    if violations:
        raise InvalidHypothesisError(violations)
    return h


def _shape(h: Hypothesis, node_id: int) -> str:
    """Operator-tree signature with merge branches sorted, e.g. ``i(n(p(e)),p(e))``."""
    in_edges = h.children(node_id)
    if not in_edges:
        return "e"
    op = in_edges[0].label
    kids = sorted(_shape(h, e.child) for e in in_edges)
    if op == PROJECTION:
        return f"p({kids[0]})"
    if op == NEGATION:
        return f"n({kids[0]})"
    tag = "i" if op == INTERSECTION else "u"
    return f"{tag}({','.join(kids)})"


PATTERN_SHAPES = {
    "1p": "p(e)",
    "2p": "p(p(e))",
    "2i": "i(p(e),p(e))",
    "3i": "i(i(p(e),p(e)),p(e))",
    "ip": "p(i(p(e),p(e)))",
    "pi": "i(p(e),p(p(e)))",
    "2u": "u(p(e),p(e))",
    "up": "p(u(p(e),p(e)))",
    "2in": "i(n(p(e)),p(e))",
    "3in": "i(i(p(e),p(e)),n(p(e)))",
    "inp": "p(i(n(p(e)),p(e)))",
    "pin": "i(n(p(e)),p(p(e)))",
    "pni": "i(n(p(p(e))),p(e))",
}
_SHAPE_TO_PATTERN = {shape: name for name, shape in PATTERN_SHAPES.items()}


def match_pattern(h: Hypothesis, root: int) -> str | None:
    """Pattern lookup for an already structurally-checked hypothesis."""
    return _SHAPE_TO_PATTERN.get(_shape(h, root))


def pattern_of(h: Hypothesis) -> str:
    """The unique pattern name ``h`` instantiates."""
    violations = validate(h)
    if violations:
        raise InvalidHypothesisError(violations)
    name = match_pattern(h, h.root)
    assert name is not None  # validate() already checked grammar membership
    return name


# Pattern templates as nested tuples: ("p", sub) projection, ("i"/"u", a, b)
# merge, ("n", sub) negation, "e" anchor leaf.
TEMPLATES: dict[str, object] = {
    "1p": ("p", "e"),
    "2p": ("p", ("p", "e")),
    "2i": ("i", ("p", "e"), ("p", "e")),
    "3i": ("i", ("i", ("p", "e"), ("p", "e")), ("p", "e")),
    "ip": ("p", ("i", ("p", "e"), ("p", "e"))),
    "pi": ("i", ("p", ("p", "e")), ("p", "e")),
    "2u": ("u", ("p", "e"), ("p", "e")),
    "up": ("p", ("u", ("p", "e"), ("p", "e"))),
    "2in": ("i", ("p", "e"), ("n", ("p", "e"))),
    "3in": ("i", ("i", ("p", "e"), ("p", "e")), ("n", ("p", "e"))),
    "inp": ("p", ("i", ("p", "e"), ("n", ("p", "e")))),
    "pin": ("i", ("p", ("p", "e")), ("n", ("p", "e"))),
    "pni": ("i", ("n", ("p", ("p", "e"))), ("p", "e")),
}


def template_slots(pattern: str) -> tuple[int, int]:
    """(relation count, anchor count) consumed by :func:`make_pattern`."""
    rels = anchors = 0
    stack = [TEMPLATES[pattern]]
    while stack:
        t = stack.pop()
        if t == "e":
            anchors += 1
        else:
            if t[0] == "p":
                rels += 1
            stack.extend(t[1:])
    return rels, anchors


def make_pattern(pattern: str, relations: Sequence[int], entities: Sequence[int]) -> Hypothesis:
    """Instantiate a pattern template.

    Relation and entity slots are consumed in root-outward depth-first order,
    i.e. the order the symbols appear in the action-token serialization before
    branch sorting. For ``2p`` that means ``relations[0]`` is the hop into the
    target and ``relations[1]`` the hop out of the anchor.
    """
    if pattern not in TEMPLATES:
        raise InvalidHypothesisError([f"unknown pattern {pattern!r}"])
    n_rel, n_ent = template_slots(pattern)
    if len(relations) != n_rel or len(entities) != n_ent:
        raise InvalidHypothesisError(
            [f"pattern {pattern} takes {n_rel} relations and {n_ent} entities, "
             f"got {len(relations)} and {len(entities)}"]
        )
    rels = iter(relations)
    ents = iter(entities)
    nodes: list[Node] = []
    edges: list[Edge] = []

    def build(tmpl: object, parent: int | None) -> int:
        nid = len(nodes)
        if tmpl == "e":
            nodes.append(Node(nid, ANCHOR, next(ents)))
            return nid
        nodes.append(Node(nid, TARGET if parent is None else VARIABLE))
        op = tmpl[0]
        if op == "p":
            rel = next(rels)
            child = build(tmpl[1], nid)
            edges.append(Edge(child, nid, PROJECTION, rel))
        elif op == "n":
            child = build(tmpl[1], nid)
            edges.append(Edge(child, nid, NEGATION))
        else:
            label = INTERSECTION if op == "i" else UNION
            for sub in tmpl[1:]:
                child = build(sub, nid)
                edges.append(Edge(child, nid, label))
        return nid

    build(TEMPLATES[pattern], None)
    return ensure_valid(Hypothesis(tuple(nodes), tuple(edges), pattern))


def to_dict(h: Hypothesis) -> dict:
    """Plain-JSON form: ``{"pattern", "nodes", "edges"}`` preserving node order."""
    nodes = []
    for node in h.nodes:
        d: dict = {"id": node.id, "kind": node.kind}
        if node.entity is not None:
            d["entity"] = node.entity
        nodes.append(d)
    edges = []
    for e in h.edges:
        d = {"child": e.child, "parent": e.parent, "label": e.label}
        if e.relation is not None:
            d["relation"] = e.relation
        edges.append(d)
    return {"pattern": h.pattern, "nodes": nodes, "edges": edges}


def from_dict(data: Mapping) -> Hypothesis:
    """Inverse of :func:`to_dict`; validates and recomputes the pattern."""
    try:
        nodes = tuple(
            Node(int(nd["id"]), str(nd["kind"]), nd.get("entity"))
            for nd in data["nodes"]
        )
        edges = tuple(
            Edge(int(ed["child"]), int(ed["parent"]), str(ed["label"]), ed.get("relation"))
            for ed in data["edges"]
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidHypothesisError([f"malformed hypothesis JSON: {exc}"]) from None
    h = ensure_valid(Hypothesis(nodes, edges))
    pattern = match_pattern(h, h.root)
    declared = data.get("pattern")
    if declared is not None and declared != pattern:
        raise InvalidHypothesisError(
            [f"declared pattern {declared!r} but structure is {pattern!r}"]
        )
    return Hypothesis(nodes, edges, pattern)
