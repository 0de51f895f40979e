"""Immutable knowledge-graph store and deterministic train/valid/test splitting.

A graph is a set of ``(head, relation, tail)`` edges over dense integer ids
plus bijective label tables. Splits are cumulative: the valid graph contains
every train edge and the test graph contains every valid edge, which is the
shape downstream sampling expects (facts only ever get added, never removed).
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .errors import GraphFormatError, TripleParseError

Triple = tuple[int, int, int]

SPLIT_NAMES = ("train", "valid", "test")
DEFAULT_RATIOS = (8, 1, 1)


@dataclass(frozen=True)
class KnowledgeGraph:
    """A fixed edge set with O(1) forward and inverse adjacency lookups."""

    entity_labels: tuple[str, ...]
    relation_labels: tuple[str, ...]
    edges: frozenset[Triple]
    tag: str = "other"

    _out: dict = field(init=False, repr=False, compare=False)
    _in: dict = field(init=False, repr=False, compare=False)
    _entity_index: dict = field(init=False, repr=False, compare=False)
    _relation_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        n_ent = len(self.entity_labels)
        n_rel = len(self.relation_labels)
        if len(set(self.entity_labels)) != n_ent:
            raise GraphFormatError("duplicate entity labels")
        if len(set(self.relation_labels)) != n_rel:
            raise GraphFormatError("duplicate relation labels")
        out: dict[tuple[int, int], set[int]] = {}
        inc: dict[int, set[tuple[int, int]]] = {}
        for h, r, t in self.edges:
            if not (0 <= h < n_ent and 0 <= t < n_ent):
                raise GraphFormatError(f"edge ({h}, {r}, {t}) references an unknown entity")
            if not (0 <= r < n_rel):
                raise GraphFormatError(f"edge ({h}, {r}, {t}) references an unknown relation")
            out.setdefault((h, r), set()).add(t)
            inc.setdefault(t, set()).add((h, r))
        object.__setattr__(self, "_out", {k: frozenset(v) for k, v in out.items()})
        object.__setattr__(self, "_in", {k: frozenset(v) for k, v in inc.items()})
        object.__setattr__(self, "_entity_index", {lbl: i for i, lbl in enumerate(self.entity_labels)})
        object.__setattr__(self, "_relation_index", {lbl: i for i, lbl in enumerate(self.relation_labels)})

    @property
    def num_entities(self) -> int:
        return len(self.entity_labels)

    @property
    def num_relations(self) -> int:
        return len(self.relation_labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def has_edge(self, h: int, r: int, t: int) -> bool:
        return (h, r, t) in self.edges

    def out_image(self, heads: Iterable[int], relation: int) -> set[int]:
        """All tails reachable from ``heads`` through ``relation``."""
        if not (0 <= relation < self.num_relations):
            raise GraphFormatError(f"unknown relation id {relation}")
        image: set[int] = set()
        for h in heads:
            tails = self._out.get((h, relation))
            if tails:
                image.update(tails)
        return image

    def in_edges(self, tail: int) -> frozenset[tuple[int, int]]:
        """All ``(head, relation)`` pairs with an edge into ``tail``."""
        return self._in.get(tail, frozenset())

    def entity_id(self, label: str) -> int:
        try:
            return self._entity_index[label]
        except KeyError:
            raise GraphFormatError(f"unknown entity label {label!r}") from None

    def relation_id(self, label: str) -> int:
        try:
            return self._relation_index[label]
        except KeyError:
            raise GraphFormatError(f"unknown relation label {label!r}") from None

    def with_tag(self, tag: str) -> "KnowledgeGraph":
        return KnowledgeGraph(self.entity_labels, self.relation_labels, self.edges, tag)


@dataclass(frozen=True)
class GraphSplit:
    """Cumulative train/valid/test graphs sharing one id space."""

    train: KnowledgeGraph
    valid: KnowledgeGraph
    test: KnowledgeGraph
    seed: int
    ratios: tuple[int, int, int] = DEFAULT_RATIOS

    def __post_init__(self) -> None:
        if not (self.train.edges <= self.valid.edges <= self.test.edges):
            raise GraphFormatError("splits must be cumulative: train <= valid <= test")

    def graph(self, name: str) -> KnowledgeGraph:
        if name not in SPLIT_NAMES:
            raise GraphFormatError(f"unknown split name {name!r}")
        return getattr(self, name)

    @property
    def counts(self) -> dict[str, int]:
        inc_valid = self.valid.num_edges - self.train.num_edges
        inc_test = self.test.num_edges - self.valid.num_edges
        return {"train": self.train.num_edges, "valid": inc_valid, "test": inc_test}


def load_triples(path: str | Path, fmt: str = "label-tsv", tag: str = "other") -> KnowledgeGraph:
    """Read a TSV triple file into a graph.

    ``label-tsv`` lines are ``head<TAB>relation<TAB>tail`` strings; ids are
    assigned in first-appearance order (head before tail within a line).
    ``id-tsv`` lines are three non-negative integers; labels are synthesized
    as ``e{i}`` / ``r{j}`` and counts are ``max id + 1``.
    """
    path = Path(path)
    if fmt not in ("label-tsv", "id-tsv"):
        raise TripleParseError(f"unknown triple format {fmt!r}")
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TripleParseError(f"cannot read {path}: {exc}") from None

    entity_ids: dict[str, int] = {}
    relation_ids: dict[str, int] = {}
    triples: list[Triple] = []
    max_ent = -1
    max_rel = -1

    def ent(label: str) -> int:
        if label not in entity_ids:
            entity_ids[label] = len(entity_ids)
        return entity_ids[label]

    def rel(label: str) -> int:
        if label not in relation_ids:
            relation_ids[label] = len(relation_ids)
        return relation_ids[label]

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise TripleParseError(f"expected 3 tab-separated fields, got {len(parts)}", line_no)
        if fmt == "label-tsv":
            h_s, r_s, t_s = (p.strip() for p in parts)
            if not h_s or not r_s or not t_s:
                raise TripleParseError("empty field", line_no)
            triples.append((ent(h_s), rel(r_s), ent(t_s)))
        else:
            try:
                h, r, t = (int(p) for p in parts)
            except ValueError:
                raise TripleParseError("expected integer ids", line_no) from None
            if h < 0 or r < 0 or t < 0:
                raise TripleParseError("negative id", line_no)
            triples.append((h, r, t))
            max_ent = max(max_ent, h, t)
            max_rel = max(max_rel, r)

    if not triples:
        raise TripleParseError(f"{path}: no triples found")

    if fmt == "label-tsv":
        entity_labels = tuple(entity_ids)
        relation_labels = tuple(relation_ids)
    else:
        entity_labels = tuple(f"e{i}" for i in range(max_ent + 1))
        relation_labels = tuple(f"r{j}" for j in range(max_rel + 1))
    return KnowledgeGraph(entity_labels, relation_labels, frozenset(triples), tag)


def planned_split_sizes(n_edges: int, ratios: Sequence[int] = DEFAULT_RATIOS) -> tuple[int, int, int]:
    """Edge counts per split for a given total.

    Valid and test take ``round(n * ratio / total)`` each (half rounds up);
    train is the remainder. Matches the published dataset tables exactly.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise GraphFormatError(f"bad split ratios {tuple(ratios)!r}")
    total = sum(ratios)
    n_valid = int(n_edges * ratios[1] / total + 0.5)
    n_test = int(n_edges * ratios[2] / total + 0.5)
    n_train = n_edges - n_valid - n_test
    if n_train < 0:
        raise GraphFormatError(f"ratios {tuple(ratios)!r} leave no training edges")
    return n_train, n_valid, n_test


def split_edges(
    graph: KnowledgeGraph,
    seed: int,
    ratios: Sequence[int] = DEFAULT_RATIOS,
) -> GraphSplit:
    """Shuffle edges with a seeded RNG and slice into cumulative splits."""
    n_train, n_valid, _ = planned_split_sizes(graph.num_edges, ratios)
    order = sorted(graph.edges)
    random.Random(seed).shuffle(order)
    def mk(edges: frozenset[Triple], tag: str) -> KnowledgeGraph:
        return KnowledgeGraph(graph.entity_labels, graph.relation_labels, edges, tag)

    return GraphSplit(
        train=mk(frozenset(order[:n_train]), "train"),
        valid=mk(frozenset(order[: n_train + n_valid]), "valid"),
        test=mk(frozenset(order), "test"),
        seed=seed,
        ratios=tuple(ratios),
    )


def save_split(split: GraphSplit, out_dir: str | Path) -> None:
    """Write a split as a graph directory.

    Layout: ``manifest.json``, ``entities.txt`` / ``relations.txt`` (line
    number = id), and ``train.tsv`` / ``valid.tsv`` / ``test.tsv`` holding the
    disjoint id-triple increments in sorted order.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    increments = {
        "train": sorted(split.train.edges),
        "valid": sorted(split.valid.edges - split.train.edges),
        "test": sorted(split.test.edges - split.valid.edges),
    }
    manifest = {
        "kind": "graph-split",
        "seed": split.seed,
        "ratios": list(split.ratios),
        "entities": split.test.num_entities,
        "relations": split.test.num_relations,
        "edges": {name: len(rows) for name, rows in increments.items()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    (out / "entities.txt").write_text("".join(f"{lbl}\n" for lbl in split.test.entity_labels), encoding="utf-8")
    (out / "relations.txt").write_text("".join(f"{lbl}\n" for lbl in split.test.relation_labels), encoding="utf-8")
    for name, rows in increments.items():
        (out / f"{name}.tsv").write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in rows), encoding="utf-8")


def _read_id_triples(path: Path, n_ent: int, n_rel: int) -> list[Triple]:
    triples: list[Triple] = []
    for line_no, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not raw.strip():
            continue
        parts = raw.split("\t")
        if len(parts) != 3:
            raise TripleParseError(f"{path.name}: expected 3 fields", line_no)
        try:
            h, r, t = (int(p) for p in parts)
        except ValueError:
            raise TripleParseError(f"{path.name}: expected integer ids", line_no) from None
        if not (0 <= h < n_ent and 0 <= t < n_ent and 0 <= r < n_rel):
            raise TripleParseError(f"{path.name}: id out of range", line_no)
        triples.append((h, r, t))
    return triples


def load_split(split_dir: str | Path) -> GraphSplit:
    """Load a graph directory written by :func:`save_split`."""
    root = Path(split_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise GraphFormatError(f"{root}: not a graph directory (missing manifest.json)")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("kind") != "graph-split":
        raise GraphFormatError(f"{root}: manifest kind {manifest.get('kind')!r} is not 'graph-split'")
    entity_labels = tuple(_read_label_file(root / "entities.txt"))
    relation_labels = tuple(_read_label_file(root / "relations.txt"))
    if len(entity_labels) != manifest["entities"] or len(relation_labels) != manifest["relations"]:
        raise GraphFormatError(f"{root}: label file sizes disagree with manifest")
    n_ent, n_rel = len(entity_labels), len(relation_labels)
    cumulative: set[Triple] = set()
    graphs: dict[str, KnowledgeGraph] = {}
    for name in SPLIT_NAMES:
        rows = _read_id_triples(root / f"{name}.tsv", n_ent, n_rel)
        if len(rows) != manifest["edges"][name]:
            raise GraphFormatError(f"{root}: {name}.tsv row count disagrees with manifest")
        cumulative.update(rows)
        graphs[name] = KnowledgeGraph(entity_labels, relation_labels, frozenset(cumulative), name)
    return GraphSplit(
        train=graphs["train"],
        valid=graphs["valid"],
        test=graphs["test"],
        seed=manifest.get("seed", 0),
        ratios=tuple(manifest.get("ratios", DEFAULT_RATIOS)),
    )


def _read_label_file(path: Path) -> Iterator[str]:
    if not path.is_file():
        raise GraphFormatError(f"missing label file {path}")
    for raw in path.read_text(encoding="utf-8").splitlines():
        yield raw


def resolve_graph_arg(path: str | Path, fmt: str = "label-tsv") -> KnowledgeGraph:
    """Turn a ``--graph`` argument into one graph to run on.

    Accepts a raw triple file, a graph directory (defaults to the train
    graph), or ``<dir>/<split-name>`` to pick a cumulative split graph.
    """
    p = Path(path)
    if p.is_file():
        return load_triples(p, fmt=fmt)
    if p.name in SPLIT_NAMES and (p.parent / "manifest.json").is_file():
        return load_split(p.parent).graph(p.name)
    if (p / "manifest.json").is_file():
        return load_split(p).train
    raise GraphFormatError(f"{p}: not a triple file, graph directory, or <dir>/<split>")
