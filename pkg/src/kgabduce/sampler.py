"""Observation/hypothesis pair sampling.

Grounding walks a pattern template backwards from a seed entity: projections
pick a random incoming edge of the current target, intersections ground every
branch at the same target, unions ground the first branch at the target and
the rest at random entities, and negated branches are grounded at a uniformly
random entity (then re-grounded if they knock the seed out of the conclusion).
The observation is the full conclusion of the grounded hypothesis on the
sampling graph; attempts whose conclusion is empty or larger than the cap are
rejected and retried under a shared budget.

Valid/test sampling additionally requires the conclusion to be a strict
superset of the same hypothesis' conclusion on the preceding (smaller) graph,
so held-out pairs always owe something to the held-out edges.

Sampling is chunked: chunk ``c`` of a (split, pattern) stream always runs on
an RNG seeded from SHA-256 of ``(seed, split, pattern, c)``, so results are
identical for any worker count.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import SamplingError
from .executor import conclusion_set
from .graph import GraphSplit, KnowledgeGraph, load_split
from .hypothesis import NEGATION_PATTERNS, PATTERNS, TEMPLATES, Hypothesis, make_pattern, to_dict
from .tokenizer import Vocabulary, actions_to_hypothesis, build_vocabulary, hypothesis_to_actions, save_vocabulary

RETRY_BUDGET = 128
CHUNK_SIZE = 64
DEFAULT_MAX_OBSERVATION = 32


class _DeadEnd(Exception):
    """A grounding step found no incoming edges to walk."""


@dataclass(frozen=True)
class PairSample:
    hypothesis: Hypothesis
    observation: tuple[int, ...]
    pattern: str
    seed_entity: int

    def to_record(self, vocab: Vocabulary, split_name: str) -> dict:
        actions = hypothesis_to_actions(self.hypothesis, vocab)
        canonical = actions_to_hypothesis(actions, vocab)
        return {
            "split": split_name,
            "pattern": self.pattern,
            "seed_entity": self.seed_entity,
            "observation": list(self.observation),
            "actions": actions,
            "hypothesis": to_dict(canonical),
        }


def _derive_seed(*parts: object) -> int:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


class _Grounder:
    """Template grounding against one graph with a per-chunk adjacency cache."""

    def __init__(self, graph: KnowledgeGraph, rng: random.Random) -> None:
        self.graph = graph
        self.rng = rng
        self._in_sorted: dict[int, list[tuple[int, int]]] = {}

    def _in_edges(self, tail: int) -> list[tuple[int, int]]:
        cached = self._in_sorted.get(tail)
        if cached is None:
            cached = sorted(self.graph.in_edges(tail))
            self._in_sorted[tail] = cached
        return cached

    def _random_groundable(self, tmpl: object) -> object:
        """Ground ``tmpl`` at a random entity, redrawing on dead ends."""
        for _ in range(RETRY_BUDGET):
            target = self.rng.randrange(self.graph.num_entities)
            try:
                return self.ground(tmpl, target)
            except _DeadEnd:
                continue
        raise _DeadEnd(f"no groundable entity for sub-template {tmpl!r}")

    def ground(self, tmpl: object, target: int) -> object:
        """Fill a template at ``target``; returns the filled mirror structure."""
        if tmpl == "e":
            return ("e", target)
        op = tmpl[0]
        if op == "p":
            candidates = self._in_edges(target)
            if not candidates:
                raise _DeadEnd(f"entity {target} has no incoming edges")
            head, rel = self.rng.choice(candidates)
            return ("p", rel, self.ground(tmpl[1], head))
        if op == "n":
            # Negated branches are grounded at their own random entity.
            return ("n", self._random_groundable(tmpl[1]))
        if op == "u":
            # Only the first union branch must pass through the target.
            branches = [self.ground(tmpl[1], target)]
            branches.extend(self._random_groundable(sub) for sub in tmpl[2:])
        else:
            branches = [self.ground(sub, target) for sub in tmpl[1:]]
        return (op, *branches)

    def reground_negated(self, filled: object) -> object:
        """Redraw every negated branch, keeping the positive structure."""
        if not isinstance(filled, tuple) or filled[0] == "e":
            return filled
        if filled[0] == "n":
            return ("n", self._random_groundable(_skeleton(filled[1])))
        if filled[0] == "p":
            return ("p", filled[1], self.reground_negated(filled[2]))
        return (filled[0], *(self.reground_negated(sub) for sub in filled[1:]))


def _skeleton(filled: object) -> object:
    """Strip fills back to a template."""
    if filled[0] == "e":
        return "e"
    if filled[0] == "p":
        return ("p", _skeleton(filled[2]))
    return (filled[0], *(_skeleton(sub) for sub in filled[1:]))


def _flatten(filled: object, rels: list[int], ents: list[int]) -> None:
    if filled[0] == "e":
        ents.append(filled[1])
        return
    if filled[0] == "p":
        rels.append(filled[1])
        _flatten(filled[2], rels, ents)
        return
    for sub in filled[1:]:
        _flatten(sub, rels, ents)


def _build(pattern: str, filled: object) -> Hypothesis:
    rels: list[int] = []
    ents: list[int] = []
    _flatten(filled, rels, ents)
    return make_pattern(pattern, rels, ents)


def ground_type(graph: KnowledgeGraph, pattern: str, rng: random.Random, seed_entity: int) -> Hypothesis:
    """Ground one pattern at a seed entity; raises SamplingError on dead ends."""
    grounder = _Grounder(graph, rng)
    try:
        return _build(pattern, grounder.ground(TEMPLATES[pattern], seed_entity))
    except _DeadEnd as exc:
        raise SamplingError(str(exc)) from None


def sample_pair(
    graph: KnowledgeGraph,
    pattern: str,
    rng: random.Random,
    max_obs: int = DEFAULT_MAX_OBSERVATION,
    growth_base: KnowledgeGraph | None = None,
    _grounder: _Grounder | None = None,
) -> PairSample:
    """Draw one accepted observation/hypothesis pair.

    Raises :class:`SamplingError` when the retry budget runs out, which on a
    reasonable graph signals an unsatisfiable pattern/cap combination.
    """
    if pattern not in TEMPLATES:
        raise SamplingError(f"unknown pattern {pattern!r}")
    grounder = _grounder if _grounder is not None and _grounder.rng is rng else _Grounder(graph, rng)
    n = graph.num_entities
    attempts = 0
    while attempts < RETRY_BUDGET:
        attempts += 1
        seed = rng.randrange(n)
        try:
            filled = grounder.ground(TEMPLATES[pattern], seed)
        except _DeadEnd:
            continue
        h = _build(pattern, filled)
        obs = conclusion_set(h, graph)
        while seed not in obs and pattern in NEGATION_PATTERNS and attempts < RETRY_BUDGET:
            attempts += 1
            try:
                filled = grounder.reground_negated(filled)
            except _DeadEnd:
                break
            h = _build(pattern, filled)
            obs = conclusion_set(h, graph)
        if seed not in obs:
            continue
        if not (1 <= len(obs) <= max_obs):
            continue
        if growth_base is not None and not obs > conclusion_set(h, growth_base):
            continue
        return PairSample(h, tuple(sorted(obs)), pattern, seed)
    raise SamplingError(f"retry budget ({RETRY_BUDGET}) exhausted sampling pattern {pattern}")


def sample_pairs(
    graph: KnowledgeGraph,
    pattern: str,
    count: int,
    seed: int,
    split_name: str = "train",
    max_obs: int = DEFAULT_MAX_OBSERVATION,
    growth_base: KnowledgeGraph | None = None,
    chunk_range: tuple[int, int] | None = None,
) -> list[PairSample]:
    """Deterministic chunked sampling; ``chunk_range`` selects a chunk slice."""
    n_chunks = (count + CHUNK_SIZE - 1) // CHUNK_SIZE
    lo, hi = chunk_range if chunk_range is not None else (0, n_chunks)
    out: list[PairSample] = []
    for chunk_idx in range(lo, min(hi, n_chunks)):
        k = min(CHUNK_SIZE, count - chunk_idx * CHUNK_SIZE)
        rng = random.Random(_derive_seed(seed, split_name, pattern, chunk_idx))
        grounder = _Grounder(graph, rng)
        for _ in range(k):
            out.append(
                sample_pair(graph, pattern, rng, max_obs=max_obs, growth_base=growth_base, _grounder=grounder)
            )
    return out


_WORKER_SPLIT: GraphSplit | None = None


def _init_worker(split_dir: str) -> None:
    global _WORKER_SPLIT
    _WORKER_SPLIT = load_split(split_dir)


def _worker_chunk(args: tuple) -> list[dict]:
    split_name, pattern, count, seed, max_obs, lo, hi = args
    assert _WORKER_SPLIT is not None
    graph, base = _graph_and_base(_WORKER_SPLIT, split_name)
    vocab = build_vocabulary(graph)
    samples = sample_pairs(
        graph, pattern, count, seed,
        split_name=split_name, max_obs=max_obs, growth_base=base, chunk_range=(lo, hi),
    )
    return [s.to_record(vocab, split_name) for s in samples]


def _graph_and_base(split: GraphSplit, split_name: str) -> tuple[KnowledgeGraph, KnowledgeGraph | None]:
    if split_name == "train":
        return split.train, None
    if split_name == "valid":
        return split.valid, split.train
    if split_name == "test":
        return split.test, split.valid
    raise SamplingError(f"unknown split {split_name!r}")


def sample_split_datasets(
    split: GraphSplit,
    count_per_pattern: int | Mapping[str, int],
    seed: int,
    out_dir: str | Path,
    patterns: Sequence[str] = PATTERNS,
    splits: Sequence[str] = ("train", "valid", "test"),
    max_obs: int = DEFAULT_MAX_OBSERVATION,
    workers: int = 1,
    split_dir: str | Path | None = None,
) -> dict:
    """Write ``<split>_pairs.jsonl`` files plus the vocabulary; returns a manifest.

    ``count_per_pattern`` is either one integer for every pattern or a mapping
    pattern -> count. Parallel runs (``workers > 1``) need ``split_dir`` so
    subprocesses can load the graph themselves; output is byte-identical to a
    single-worker run.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if isinstance(count_per_pattern, int):
        counts = {p: count_per_pattern for p in patterns}
    else:
        counts = dict(count_per_pattern)
    unknown = [p for p in counts if p not in TEMPLATES]
    if unknown:
        raise SamplingError(f"unknown patterns: {unknown}")

    vocab = build_vocabulary(split.test)
    save_vocabulary(vocab, out / "vocabulary.txt")

    tasks: list[tuple] = []
    for split_name in splits:
        for pattern in patterns:
            count = counts.get(pattern, 0)
            n_chunks = (count + CHUNK_SIZE - 1) // CHUNK_SIZE
            for c in range(n_chunks):
                tasks.append((split_name, pattern, count, seed, max_obs, c, c + 1))

    results: dict[tuple, list[dict]] = {}
    if workers > 1:
        if split_dir is None:
            raise SamplingError("parallel sampling needs the graph directory path")
        with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=(str(split_dir),)) as pool:
            for task, recs in zip(tasks, pool.map(_worker_chunk, tasks, chunksize=1)):
                results[task] = recs
    else:
        for task in tasks:
            split_name, pattern, count, task_seed, task_max_obs, lo, hi = task
            graph, base = _graph_and_base(split, split_name)
            samples = sample_pairs(
                graph, pattern, count, task_seed,
                split_name=split_name, max_obs=task_max_obs, growth_base=base, chunk_range=(lo, hi),
            )
            results[task] = [s.to_record(vocab, split_name) for s in samples]

    manifest: dict = {
        "seed": seed,
        "max_observation": max_obs,
        "entities": split.test.num_entities,
        "relations": split.test.num_relations,
        "files": {},
        "counts": {},
    }
    for split_name in splits:
        path = out / f"{split_name}_pairs.jsonl"
        n_written = 0
        with path.open("w", encoding="utf-8") as fh:
            for pattern in patterns:
                for task in tasks:
                    if task[0] == split_name and task[1] == pattern:
                        for rec in results[task]:
                            fh.write(json.dumps(rec, sort_keys=True) + "\n")
                            n_written += 1
        manifest["files"][split_name] = str(path)
        manifest["counts"][split_name] = n_written
    (out / "sample_manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest
