"""Action-token serialization of hypotheses and the inverse stack parser.

Serialization walks the tree from the root: a merge emits ``[I]`` or ``[U]``
then its branches (sorted, negated branch last), a negation emits ``[N]`` then
its branch, a projection emits its relation token then its subtree, and an
anchor emits its entity token. Parsing rebuilds the tree with an explicit
stack of unfilled operator slots: operators push themselves with their arity
(two for merges, one otherwise) and each completed anchor pays off arities
upward until a slot remains open.

The vocabulary is fixed by the graph: seven specials first, then one token
per relation, then one per entity, each label wrapped in brackets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ActionParseError, VocabularyError
from .graph import KnowledgeGraph
from .hypothesis import (
    ANCHOR,
    INTERSECTION,
    NEGATION,
    PROJECTION,
    TARGET,
    UNION,
    VARIABLE,
    Edge,
    Hypothesis,
    Node,
    match_pattern,
    ensure_valid,
    to_dict,
    validate,
)

PAD, BOS, EOS, SEP = "[PAD]", "[BOS]", "[EOS]", "[SEP]"
TOK_I, TOK_U, TOK_N = "[I]", "[U]", "[N]"
SPECIAL_TOKENS = (PAD, BOS, EOS, SEP, TOK_I, TOK_U, TOK_N)

# Children each operator token still expects when pushed on the parse stack.
OPERATOR_DEGREE = {TOK_I: 2, TOK_U: 2, TOK_N: 1}

_MERGE_LABEL = {TOK_I: INTERSECTION, TOK_U: UNION}
_MERGE_TOKEN = {INTERSECTION: TOK_I, UNION: TOK_U}


@dataclass(frozen=True)
class Vocabulary:
    """Token table: specials, then relations, then entities."""

    tokens: tuple[str, ...]
    num_relations: int
    num_entities: int

    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.tokens[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise VocabularyError("vocabulary must start with the special tokens")
        if len(self.tokens) != len(SPECIAL_TOKENS) + self.num_relations + self.num_entities:
            raise VocabularyError("vocabulary length disagrees with relation/entity counts")
        index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(index) != len(self.tokens):
            raise VocabularyError("token collision: relation/entity labels overlap specials or each other")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.tokens)

    def token_id(self, token: str) -> int:
        try:
            return self._index[token]
        except KeyError:
            raise VocabularyError(f"unknown token {token!r}") from None

    def relation_token(self, relation: int) -> str:
        if not (0 <= relation < self.num_relations):
            raise VocabularyError(f"relation id {relation} out of range")
        return self.tokens[len(SPECIAL_TOKENS) + relation]

    def entity_token(self, entity: int) -> str:
        if not (0 <= entity < self.num_entities):
            raise VocabularyError(f"entity id {entity} out of range")
        return self.tokens[len(SPECIAL_TOKENS) + self.num_relations + entity]

    def classify(self, token: str) -> tuple[str, int | None]:
        """(kind, payload): ('relation', rid), ('entity', eid), ('special', id), or ('unknown', None)."""
        idx = self._index.get(token)
        if idx is None:
            return "unknown", None
        if idx < len(SPECIAL_TOKENS):
            return "special", idx
        idx -= len(SPECIAL_TOKENS)
        if idx < self.num_relations:
            return "relation", idx
        return "entity", idx - self.num_relations


def build_vocabulary(graph: KnowledgeGraph) -> Vocabulary:
    """Deterministic vocabulary for a graph; collisions are a hard error."""
    tokens = (
        SPECIAL_TOKENS
        + tuple(f"[{lbl}]" for lbl in graph.relation_labels)
        + tuple(f"[{lbl}]" for lbl in graph.entity_labels)
    )
    return Vocabulary(tokens, graph.num_relations, graph.num_entities)


def save_vocabulary(vocab: Vocabulary, path: str | Path) -> None:
    """One token per line; the line number (0-based) is the token id."""
    Path(path).write_text("".join(f"{tok}\n" for tok in vocab.tokens), encoding="utf-8")


def load_vocabulary(path: str | Path, num_relations: int, num_entities: int) -> Vocabulary:
    tokens = tuple(Path(path).read_text(encoding="utf-8").splitlines())
    return Vocabulary(tokens, num_relations, num_entities)


def _branch_tokens(h: Hypothesis, vocab: Vocabulary, nid: int) -> list[str]:
    in_edges = h.children(nid)
    if not in_edges:
        return [vocab.entity_token(h.node(nid).entity)]
    op = in_edges[0].label
    if op == PROJECTION:
        return [vocab.relation_token(in_edges[0].relation)] + _branch_tokens(h, vocab, in_edges[0].child)
    if op == NEGATION:
        return [TOK_N] + _branch_tokens(h, vocab, in_edges[0].child)
    branches = sorted(
        (_branch_tokens(h, vocab, e.child) for e in in_edges),
        key=lambda toks: (toks[0] == TOK_N, toks),
    )
    out = [_MERGE_TOKEN[op]]
    for b in branches:
        out.extend(b)
    return out


def hypothesis_to_actions(h: Hypothesis, vocab: Vocabulary) -> list[str]:
    """Canonical action tokens for a valid hypothesis.

    Merge branches are ordered (negated last, then lexicographically by their
    own token tuples), so equal hypotheses serialize identically.
    """
    ensure_valid(h)
    return _branch_tokens(h, vocab, h.root)


def actions_to_hypothesis(tokens: Sequence[str], vocab: Vocabulary) -> Hypothesis:
    """Parse an action sequence; any failure raises :class:`ActionParseError`.

    Error reasons: ``empty``, ``unknown-token``, ``unexpected-token`` (a
    framing special mid-sequence), ``trailing-tokens``, ``incomplete``, and
    ``malformed`` (parsed but failed hypothesis validation).
    """
    if not tokens:
        raise ActionParseError("empty", "empty action sequence")
    nodes: list[Node] = []
    edges: list[Edge] = []
    # Stack rows: [node id, edge label, relation id or None, remaining arity].
    stack: list[list] = []
    for pos, tok in enumerate(tokens):
        kind, payload = vocab.classify(tok)
        if kind == "unknown":
            raise ActionParseError("unknown-token", f"position {pos}: unknown token {tok!r}")
        if kind == "special" and tok not in OPERATOR_DEGREE:
            raise ActionParseError("unexpected-token", f"position {pos}: {tok} is not an action token")
        if nodes and not stack:
            raise ActionParseError(
                "trailing-tokens", f"position {pos}: sequence continues after the tree closed"
            )
        nid = len(nodes)
        if kind == "entity":
            nodes.append(Node(nid, ANCHOR, payload))
        else:
            nodes.append(Node(nid, TARGET if nid == 0 else VARIABLE))
        if stack:
            top = stack[-1]
            edges.append(Edge(nid, top[0], top[1], top[2]))
        if kind == "entity":
            while stack:
                stack[-1][3] -= 1
                if stack[-1][3] == 0:
                    stack.pop()
                else:
                    break
        elif kind == "relation":
            stack.append([nid, PROJECTION, payload, 1])
        else:
            stack.append([nid, _MERGE_LABEL.get(tok, NEGATION), None, OPERATOR_DEGREE[tok]])
    if stack:
        raise ActionParseError("incomplete", f"{len(stack)} operator(s) left unfilled")
    h = Hypothesis(tuple(nodes), tuple(edges))
    violations = validate(h)
    if violations:
        raise ActionParseError("malformed", "; ".join(violations))
    return Hypothesis(h.nodes, h.edges, match_pattern(h, h.root))


def canonicalize(h: Hypothesis, vocab: Vocabulary) -> Hypothesis:
    """Renumber ``h`` into canonical (serialization) node order."""
    return actions_to_hypothesis(hypothesis_to_actions(h, vocab), vocab)


def to_canonical_json(h: Hypothesis, vocab: Vocabulary) -> str:
    """Byte-stable JSON: canonical node order, sorted keys, compact separators."""
    return json.dumps(to_dict(canonicalize(h, vocab)), sort_keys=True, separators=(",", ":"))


def encode_observation(entities: Iterable[int], vocab: Vocabulary) -> list[int]:
    """Token ids for an observation, deduplicated and ascending."""
    ids = sorted(set(entities))
    return [vocab.token_id(vocab.entity_token(e)) for e in ids]


def encode_training_sequence(observation: Iterable[int], actions: Sequence[str], vocab: Vocabulary) -> list[int]:
    """`obs tokens, [SEP], action tokens, [EOS]` as one id sequence."""
    ids = encode_observation(observation, vocab)
    ids.append(vocab.token_id(SEP))
    ids.extend(vocab.token_id(t) for t in actions)
    ids.append(vocab.token_id(EOS))
    return ids
