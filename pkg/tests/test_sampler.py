"""Pair sampling: soundness, determinism, and dataset files."""

from __future__ import annotations

import json
import random

import pytest

from kgabduce.errors import SamplingError
from kgabduce.executor import conclusion_set
from kgabduce.graph import KnowledgeGraph, save_split, split_edges
from kgabduce.hypothesis import PATTERNS, pattern_of
from kgabduce.sampler import (
    DEFAULT_MAX_OBSERVATION,
    ground_type,
    sample_pair,
    sample_pairs,
    sample_split_datasets,
)
from kgabduce.tokenizer import actions_to_hypothesis, build_vocabulary

from conftest import make_random_graph


@pytest.fixture(scope="module")
def dense_graph():
    return make_random_graph(random.Random(42), n_entities=40, n_relations=5, n_edges=300)


def test_ground_type_produces_each_pattern(dense_graph):
    rng = random.Random(0)
    for pattern in PATTERNS:
        for _ in range(10):
            seed = rng.randrange(dense_graph.num_entities)
            try:
                h = ground_type(dense_graph, pattern, rng, seed)
            except SamplingError:
                continue
            assert pattern_of(h) == pattern
            break
        else:
            pytest.fail(f"never grounded {pattern}")


def test_sample_pair_soundness(dense_graph):
    rng = random.Random(1)
    for pattern in PATTERNS:
        for _ in range(20):
            pair = sample_pair(dense_graph, pattern, rng)
            obs = set(pair.observation)
            assert pair.pattern == pattern
            assert pattern_of(pair.hypothesis) == pattern
            assert obs == conclusion_set(pair.hypothesis, dense_graph)
            assert pair.seed_entity in obs
            assert 1 <= len(obs) <= DEFAULT_MAX_OBSERVATION
            assert pair.observation == tuple(sorted(obs))


def test_sample_pair_respects_max_obs(dense_graph):
    rng = random.Random(2)
    pair = sample_pair(dense_graph, "2u", rng, max_obs=4)
    assert len(pair.observation) <= 4


def test_growth_constraint(dense_graph):
    split = split_edges(dense_graph, seed=3)
    rng = random.Random(4)
    for _ in range(30):
        pair = sample_pair(split.valid, "1p", rng, growth_base=split.train)
        full = conclusion_set(pair.hypothesis, split.valid)
        base = conclusion_set(pair.hypothesis, split.train)
        assert full > base


def test_retry_budget_exhaustion():
    # No edges at all: nothing is groundable.
    g = KnowledgeGraph(("a", "b"), ("r",), frozenset({(0, 0, 1)}))
    with pytest.raises(SamplingError):
        sample_pair(g, "2p", random.Random(0))


def test_unknown_pattern_rejected(dense_graph):
    with pytest.raises(SamplingError):
        sample_pair(dense_graph, "4p", random.Random(0))


def test_sample_pairs_deterministic(dense_graph):
    a = sample_pairs(dense_graph, "2i", 10, seed=7)
    b = sample_pairs(dense_graph, "2i", 10, seed=7)
    assert a == b
    c = sample_pairs(dense_graph, "2i", 10, seed=8)
    assert a != c


def test_chunk_ranges_compose(dense_graph):
    # 130 pairs = chunks (64, 64, 2); slicing by chunk must equal one pass.
    whole = sample_pairs(dense_graph, "2p", 130, seed=9)
    parts = []
    for c in range(3):
        parts.extend(sample_pairs(dense_graph, "2p", 130, seed=9, chunk_range=(c, c + 1)))
    assert whole == parts
    assert len(whole) == 130


def test_records_round_trip_through_vocab(dense_graph):
    vocab = build_vocabulary(dense_graph)
    for pair in sample_pairs(dense_graph, "pni", 5, seed=11):
        rec = pair.to_record(vocab, "train")
        assert rec["split"] == "train" and rec["pattern"] == "pni"
        parsed = actions_to_hypothesis(rec["actions"], vocab)
        assert conclusion_set(parsed, dense_graph) == set(rec["observation"])


def _write_split(tmp_path, graph, seed=1):
    split = split_edges(graph, seed=seed)
    split_dir = tmp_path / "graph"
    save_split(split, split_dir)
    return split, split_dir


def test_sample_split_datasets_files(tmp_path, dense_graph):
    split, _ = _write_split(tmp_path, dense_graph)
    out = tmp_path / "pairs"
    manifest = sample_split_datasets(split, 3, seed=5, out_dir=out, patterns=["1p", "2i"])
    assert (out / "vocabulary.txt").exists()
    assert manifest["counts"] == {"train": 6, "valid": 6, "test": 6}
    lines = (out / "valid_pairs.jsonl").read_text().splitlines()
    assert len(lines) == 6
    for line in lines:
        rec = json.loads(line)
        assert rec["split"] == "valid"
        h = actions_to_hypothesis(rec["actions"], build_vocabulary(split.test))
        valid_set = conclusion_set(h, split.valid)
        assert valid_set == set(rec["observation"])
        assert valid_set > conclusion_set(h, split.train)


def test_parallel_sampling_matches_serial(tmp_path, dense_graph):
    split, split_dir = _write_split(tmp_path, dense_graph)
    out1 = tmp_path / "serial"
    out2 = tmp_path / "parallel"
    sample_split_datasets(split, 70, seed=6, out_dir=out1, patterns=["2in"], splits=("train",))
    sample_split_datasets(
        split, 70, seed=6, out_dir=out2, patterns=["2in"], splits=("train",),
        workers=3, split_dir=split_dir,
    )
    assert (out1 / "train_pairs.jsonl").read_bytes() == (out2 / "train_pairs.jsonl").read_bytes()


def test_parallel_sampling_requires_graph_dir(tmp_path, dense_graph):
    split, _ = _write_split(tmp_path, dense_graph)
    with pytest.raises(SamplingError):
        sample_split_datasets(split, 2, seed=1, out_dir=tmp_path / "x", workers=2)
