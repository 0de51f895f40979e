"""Per-pattern metric aggregation for prediction files and search baselines.

A prediction record is one JSON object with an ``observation`` (entity ids)
and either ``actions`` (token strings) or a ``hypothesis`` (structural JSON);
an optional ``reference`` hypothesis enables structural scoring and an
optional ``pattern`` pins the aggregation bucket. Invalid predictions count
as zero rather than being dropped, mirroring how the reward environment
treats them.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .errors import ActionParseError, InvalidHypothesisError, KgabduceError
from .executor import conclusion_set, jaccard
from .graph import GraphSplit, KnowledgeGraph, load_split
from .hypothesis import Hypothesis, from_dict, pattern_of
from .search import one_hop_search
from .smatch import smatch_score
from .tokenizer import Vocabulary, actions_to_hypothesis, build_vocabulary

_EVAL_CHUNK = 256


def load_records(path: str | Path) -> list[dict]:
    """Read a JSONL prediction/pair file."""
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise KgabduceError(f"{path}:{line_no}: bad JSON: {exc}") from None
    return records


def _decode_prediction(record: Mapping, vocab: Vocabulary) -> Hypothesis | None:
    try:
        if record.get("actions") is not None:
            return actions_to_hypothesis(record["actions"], vocab)
        if record.get("hypothesis") is not None:
            return from_dict(record["hypothesis"])
    except (ActionParseError, InvalidHypothesisError):
        return None
    return None


def _decode_reference(record: Mapping) -> Hypothesis | None:
    ref = record.get("reference")
    if ref is None:
        return None
    try:
        return from_dict(ref)
    except InvalidHypothesisError:
        return None


def _bucket(record: Mapping, pred: Hypothesis | None, ref: Hypothesis | None) -> str:
    if record.get("pattern"):
        return str(record["pattern"])
    if ref is not None:
        return pattern_of(ref)
    if pred is not None:
        return pattern_of(pred)
    return "unknown"


def _score_one(record: Mapping, graph: KnowledgeGraph, vocab: Vocabulary, seed: int) -> dict:
    pred = _decode_prediction(record, vocab)
    ref = _decode_reference(record)
    obs = set(int(e) for e in record.get("observation", ()))
    row = {"pattern": _bucket(record, pred, ref), "valid": pred is not None, "jaccard": 0.0}
    if pred is not None and obs:
        row["jaccard"] = jaccard(conclusion_set(pred, graph), obs)
    if ref is not None:
        row["smatch"] = smatch_score(pred, ref, seed=seed) if pred is not None else 0.0
    return row


def _aggregate(rows: Iterable[dict]) -> dict:
    buckets: dict[str, dict] = {}
    for row in rows:
        b = buckets.setdefault(
            row["pattern"], {"count": 0, "invalid": 0, "jaccard_sum": 0.0, "smatch_sum": 0.0, "smatch_n": 0}
        )
        b["count"] += 1
        if not row["valid"]:
            b["invalid"] += 1
        b["jaccard_sum"] += row["jaccard"]
        if "smatch" in row:
            b["smatch_sum"] += row["smatch"]
            b["smatch_n"] += 1

    per_pattern: dict[str, dict] = {}
    for name in sorted(buckets):
        b = buckets[name]
        entry = {
            "count": b["count"],
            "invalid": b["invalid"],
            "jaccard": b["jaccard_sum"] / b["count"] if b["count"] else 0.0,
        }
        if b["smatch_n"]:
            entry["smatch"] = b["smatch_sum"] / b["smatch_n"]
        per_pattern[name] = entry

    summary: dict = {"per_pattern": per_pattern, "records": sum(b["count"] for b in buckets.values())}
    if per_pattern:
        summary["average"] = {"jaccard": sum(e["jaccard"] for e in per_pattern.values()) / len(per_pattern)}
        smatch_entries = [e["smatch"] for e in per_pattern.values() if "smatch" in e]
        if smatch_entries:
            summary["average"]["smatch"] = sum(smatch_entries) / len(smatch_entries)
    return summary


_WORKER_GRAPH: KnowledgeGraph | None = None
_WORKER_VOCAB: Vocabulary | None = None


def _init_eval_worker(split_dir: str, split_name: str) -> None:
    global _WORKER_GRAPH, _WORKER_VOCAB
    _WORKER_GRAPH = load_split(split_dir).graph(split_name)
    _WORKER_VOCAB = build_vocabulary(_WORKER_GRAPH)


def _eval_chunk(args: tuple) -> list[dict]:
    records, seed = args
    assert _WORKER_GRAPH is not None and _WORKER_VOCAB is not None
    return [_score_one(r, _WORKER_GRAPH, _WORKER_VOCAB, seed) for r in records]


def evaluate_records(
    records: Sequence[Mapping],
    graph: KnowledgeGraph,
    seed: int = 0,
    workers: int = 1,
    split_dir: str | None = None,
    split_name: str = "train",
) -> dict:
    """Per-pattern mean Jaccard (and smatch where references exist)."""
    vocab = build_vocabulary(graph)
    if workers > 1 and split_dir is not None:
        chunks = [
            (records[i : i + _EVAL_CHUNK], seed) for i in range(0, len(records), _EVAL_CHUNK)
        ]
        rows: list[dict] = []
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_eval_worker, initargs=(split_dir, split_name)
        ) as pool:
            for part in pool.map(_eval_chunk, chunks, chunksize=1):
                rows.extend(part)
    else:
        rows = [_score_one(r, graph, vocab, seed) for r in records]
    return _aggregate(rows)


def search_records(
    records: Sequence[Mapping],
    split: GraphSplit,
    eval_split: str = "test",
    seed: int = 0,
) -> dict:
    """One-hop search over each record's observation, scored on a held-out graph.

    Search only ever sees the training graph; Jaccard is computed on
    ``eval_split`` and smatch against the record's own hypothesis (the
    reference that generated the observation), where present.
    """
    eval_graph = split.graph(eval_split)
    rows = []
    for record in records:
        obs = set(int(e) for e in record.get("observation", ()))
        found = one_hop_search(obs, split.train)
        ref = None
        for key in ("reference", "hypothesis"):
            if record.get(key) is not None:
                try:
                    ref = from_dict(record[key])
                except InvalidHypothesisError:
                    ref = None
                break
        row = {
            "pattern": _bucket(record, None, ref),
            "valid": found is not None,
            "jaccard": jaccard(conclusion_set(found, eval_graph), obs) if found is not None and obs else 0.0,
        }
        if ref is not None:
            row["smatch"] = smatch_score(found, ref, seed=seed) if found is not None else 0.0
        rows.append(row)
    return _aggregate(rows)
