"""Command-line interface, exercised through click's runner plus one real
subprocess for the socket service."""

from __future__ import annotations

import json
import random
import socket
import subprocess
import sys
import time

import pytest
from click.testing import CliRunner

from kgabduce.cli import cli
from kgabduce.graph import load_split
from kgabduce.hypothesis import make_pattern, to_dict

from conftest import make_random_graph


@pytest.fixture(scope="module")
def triples_file(tmp_path_factory):
    g = make_random_graph(random.Random(42), n_entities=40, n_relations=5, n_edges=300)
    path = tmp_path_factory.mktemp("data") / "triples.tsv"
    with path.open("w") as fh:
        for h, r, t in sorted(g.edges):
            fh.write(f"{g.entity_labels[h]}\t{g.relation_labels[r]}\t{g.entity_labels[t]}\n")
    return path


@pytest.fixture(scope="module")
def graph_dir(tmp_path_factory, triples_file):
    out = tmp_path_factory.mktemp("graph") / "split"
    result = CliRunner().invoke(cli, [
        "split", "--input", str(triples_file), "--out", str(out), "--seed", "3",
    ])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def pairs_dir(tmp_path_factory, graph_dir):
    out = tmp_path_factory.mktemp("pairs") / "d"
    result = CliRunner().invoke(cli, [
        "sample", "--graph", str(graph_dir), "--out", str(out),
        "--count", "5", "--patterns", "1p,2i,pni", "--seed", "2",
    ])
    assert result.exit_code == 0, result.output
    return out


def _tsv_stats(path):
    lines = path.read_text().splitlines()
    names = {f.split("\t")[0] for f in lines} | {f.split("\t")[2] for f in lines}
    return len(lines), len(names)


def test_split_outputs(graph_dir, triples_file):
    assert (graph_dir / "manifest.json").is_file()
    assert (graph_dir / "vocabulary.txt").is_file()
    split = load_split(graph_dir)
    assert split.train.num_edges < split.valid.num_edges < split.test.num_edges
    assert split.test.num_edges == _tsv_stats(triples_file)[0]


def test_split_summary_json(triples_file, tmp_path):
    result = CliRunner().invoke(cli, [
        "split", "--input", str(triples_file), "--out", str(tmp_path / "s"),
    ])
    payload = json.loads(result.output)
    n_edges, n_entities = _tsv_stats(triples_file)
    assert payload["entities"] == n_entities
    # Edge counts are per-split increments; together they cover the file.
    assert sum(payload["edges"].values()) == n_edges


def test_split_bad_ratios_json_error(triples_file, tmp_path):
    result = CliRunner().invoke(cli, [
        "split", "--input", str(triples_file), "--out", str(tmp_path / "s"),
        "--ratios", "a,b",
    ])
    assert result.exit_code == 1
    envelope = json.loads(result.stderr)
    assert envelope["error"]


def test_seed_from_environment(triples_file, tmp_path):
    result = CliRunner().invoke(
        cli,
        ["split", "--input", str(triples_file), "--out", str(tmp_path / "s")],
        env={"KGABDUCE_SPLIT_SEED": "9"},
        auto_envvar_prefix="KGABDUCE",
    )
    assert json.loads(result.output)["seed"] == 9


def test_sample_outputs(pairs_dir):
    manifest = json.loads((pairs_dir / "sample_manifest.json").read_text())
    assert manifest["counts"] == {"train": 15, "valid": 15, "test": 15}
    assert (pairs_dir / "vocabulary.txt").is_file()
    lines = (pairs_dir / "train_pairs.jsonl").read_text().splitlines()
    assert len(lines) == 15
    patterns = {json.loads(l)["pattern"] for l in lines}
    assert patterns == {"1p", "2i", "pni"}


def test_sample_deterministic(graph_dir, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        result = CliRunner().invoke(cli, [
            "sample", "--graph", str(graph_dir), "--out", str(out),
            "--count", "4", "--patterns", "2in", "--splits", "train", "--seed", "7",
        ])
        assert result.exit_code == 0, result.output
        outs.append((out / "train_pairs.jsonl").read_bytes())
    assert outs[0] == outs[1]


def test_evaluate_pairs_as_perfect_predictions(pairs_dir, graph_dir):
    result = CliRunner().invoke(cli, [
        "evaluate", "--predictions", str(pairs_dir / "train_pairs.jsonl"),
        "--graph", str(graph_dir / "train"),
    ])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    for name, entry in summary["per_pattern"].items():
        assert entry["jaccard"] == 1.0, name


def test_evaluate_pretty_table(pairs_dir, graph_dir):
    result = CliRunner().invoke(cli, [
        "evaluate", "--predictions", str(pairs_dir / "train_pairs.jsonl"),
        "--graph", str(graph_dir / "train"), "--pretty",
    ])
    assert "pattern" in result.output and "jaccard" in result.output


def test_search_command(pairs_dir, graph_dir):
    result = CliRunner().invoke(cli, [
        "search", "--pairs", str(pairs_dir / "test_pairs.jsonl"),
        "--graph", str(graph_dir), "--eval-split", "test",
    ])
    assert result.exit_code == 0, result.output
    summary = json.loads(result.output)
    assert summary["records"] == 15
    assert set(summary["per_pattern"]) == {"1p", "2i", "pni"}


def test_smatch_command(tmp_path):
    a = to_dict(make_pattern("1p", [0], [0]))
    b = to_dict(make_pattern("1p", [1], [2]))
    pred = tmp_path / "pred.jsonl"
    gold = tmp_path / "gold.jsonl"
    pred.write_text(json.dumps({"hypothesis": a}) + "\n" + json.dumps(b) + "\n")
    gold.write_text(json.dumps(a) + "\n" + json.dumps(b) + "\n")
    result = CliRunner().invoke(cli, ["smatch", "--pred", str(pred), "--gold", str(gold)])
    payload = json.loads(result.output)
    assert payload["count"] == 2
    assert payload["scores"] == [1.0, 1.0]

    gold.write_text(json.dumps(a) + "\n")
    mismatch = CliRunner().invoke(cli, ["smatch", "--pred", str(pred), "--gold", str(gold)])
    assert mismatch.exit_code == 1


def test_smatch_command_action_records(graph_dir, pairs_dir, tmp_path):
    record = json.loads((pairs_dir / "train_pairs.jsonl").read_text().splitlines()[0])
    pred = tmp_path / "pred.jsonl"
    gold = tmp_path / "gold.jsonl"
    pred.write_text(
        json.dumps({"actions": record["actions"]}) + "\n"
        + json.dumps({"actions": ["[I]"]}) + "\n"
    )
    gold.write_text(json.dumps({"hypothesis": record["hypothesis"]}) + "\n"
                    + json.dumps({"hypothesis": record["hypothesis"]}) + "\n")

    no_graph = CliRunner().invoke(cli, ["smatch", "--pred", str(pred), "--gold", str(gold)])
    assert no_graph.exit_code == 1
    assert "action tokens" in json.loads(no_graph.stderr)["message"]

    result = CliRunner().invoke(cli, [
        "smatch", "--pred", str(pred), "--gold", str(gold), "--graph", str(graph_dir / "train"),
    ])
    assert result.exit_code == 0, result.output
    payload = json.loads(result.output)
    # Unparseable action lines score zero instead of failing the run.
    assert payload["scores"] == [1.0, 0.0]


def test_score_command_local(graph_dir, pairs_dir, tmp_path):
    vocab_relative = json.loads((pairs_dir / "train_pairs.jsonl").read_text().splitlines()[0])
    requests = tmp_path / "requests.ndjson"
    requests.write_text(
        json.dumps({"id": 1, "obs": vocab_relative["observation"],
                    "actions": vocab_relative["actions"]}) + "\n"
        + "garbage\n"
        + json.dumps({"id": 3, "obs": [0], "actions": ["[I]"]}) + "\n"
    )
    result = CliRunner().invoke(cli, [
        "score", "--graph", str(graph_dir / "train"), "--requests", str(requests),
    ])
    assert result.exit_code == 0, result.output
    replies = [json.loads(l) for l in result.output.splitlines()]
    assert [r["id"] for r in replies] == [1, -1, 3]
    assert replies[0]["reward"] == 1.0
    assert replies[1]["err"] == "bad-request"
    assert replies[2]["err"] == "incomplete"


def test_score_command_against_http_server(graph_dir, pairs_dir, tmp_path):
    import threading

    import uvicorn

    from kgabduce.service import create_app

    app = create_app(load_split(graph_dir))
    config = uvicorn.Config(app, host="127.0.0.1", port=0, log_level="error")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 15
    while not server.started:
        if time.time() > deadline:
            pytest.fail("http service did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    try:
        rec = json.loads((pairs_dir / "train_pairs.jsonl").read_text().splitlines()[0])
        requests = tmp_path / "requests.ndjson"
        requests.write_text(
            json.dumps({"id": 1, "obs": rec["observation"], "actions": rec["actions"]}) + "\n"
            + "garbage\n"
        )
        local = CliRunner().invoke(cli, [
            "score", "--graph", str(graph_dir / "train"), "--requests", str(requests),
        ])
        remote = CliRunner().invoke(cli, [
            "score", "--graph", str(graph_dir / "train"), "--requests", str(requests),
            "--server", f"http://127.0.0.1:{port}",
        ])
        assert remote.exit_code == 0, remote.output
        assert remote.output == local.output
    finally:
        server.should_exit = True
        thread.join(timeout=10)


def test_serve_env_subprocess(graph_dir, pairs_dir, tmp_path):
    sock_path = str(tmp_path / "env.sock")
    proc = subprocess.Popen(
        [sys.executable, "-m", "kgabduce.cli", "serve-env",
         "--graph", str(graph_dir / "train"), "--listen", f"unix:{sock_path}"],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE,
    )
    try:
        deadline = time.time() + 15
        while True:
            try:
                conn = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
                conn.connect(sock_path)
                break
            except OSError:
                if proc.poll() is not None or time.time() > deadline:
                    pytest.fail(f"service never came up: {proc.stderr.read()}")
                time.sleep(0.05)
        rec = json.loads((pairs_dir / "train_pairs.jsonl").read_text().splitlines()[0])
        with conn:
            f = conn.makefile("rw", encoding="utf-8")
            f.write(json.dumps({"id": 5, "obs": rec["observation"],
                                "actions": rec["actions"]}) + "\n")
            f.flush()
            reply = json.loads(f.readline())
        assert reply["id"] == 5 and reply["valid"] and reply["reward"] == 1.0
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_version_flag():
    result = CliRunner().invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "0.1.0" in result.output
