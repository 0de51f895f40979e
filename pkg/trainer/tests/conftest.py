"""Shared fixtures: a sampled toy corpus built through the engine CLI.

The trainer's only ties to the reasoning engine are files, sockets, and the
``kgabduce`` executable, so the fixtures shell out the same way users do.
Tests that need the engine skip when it is not on PATH.
"""

from __future__ import annotations

import random
import shutil
import subprocess
from pathlib import Path

import pytest

from kgtrainer.data import Vocab


def run_kgabduce(*args: str) -> subprocess.CompletedProcess:
    proc = subprocess.run(["kgabduce", *args], capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"kgabduce {' '.join(args)} failed:\n{proc.stderr}")
    return proc


def write_random_triples(path: Path, entities: int, relations: int, edges: int, seed: int) -> None:
    rng = random.Random(seed)
    # Pin the id ranges so the graph has exactly the requested counts.
    triples = {(entities - 1, relations - 1, 0)}
    while len(triples) < edges:
        triples.add((rng.randrange(entities), rng.randrange(relations), rng.randrange(entities)))
    path.write_text("".join(f"{h}\t{r}\t{t}\n" for h, r, t in sorted(triples)), encoding="utf-8")


def build_corpus(
    root: Path, entities: int = 120, relations: int = 6, edges: int = 1400, count: int = 25, seed: int = 7
) -> dict:
    """Split a random graph and sample pairs from it; returns the dir layout."""
    triples = root / "triples.tsv"
    write_random_triples(triples, entities, relations, edges, seed)
    graph = root / "graph"
    run_kgabduce("split", "--input", str(triples), "--format", "id-tsv", "--seed", "0", "--out", str(graph))
    data = root / "data"
    run_kgabduce(
        "sample", "--graph", str(graph), "--out", str(data),
        "--count", str(count), "--seed", "0", "--max-obs", "16",
    )
    return {"graph": graph, "data": data}


@pytest.fixture(scope="session")
def engine() -> str:
    path = shutil.which("kgabduce")
    if path is None:
        pytest.skip("kgabduce CLI not on PATH")
    return path


@pytest.fixture(scope="session")
def corpus(engine, tmp_path_factory) -> dict:
    return build_corpus(tmp_path_factory.mktemp("corpus"))


def tiny_vocab(num_relations: int = 2, num_entities: int = 5) -> Vocab:
    """Hand-built vocabulary for unit tests that need no engine."""
    tokens = list(("[PAD]", "[BOS]", "[EOS]", "[SEP]", "[I]", "[U]", "[N]"))
    tokens += [f"[R{j}]" for j in range(num_relations)]
    tokens += [f"[E{i}]" for i in range(num_entities)]
    return Vocab(tokens, num_relations, num_entities)
