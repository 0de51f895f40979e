"""Command-line interface.

Every command prints a single JSON document (or NDJSON stream) on stdout so
output is scriptable; ``--pretty`` switches the summary commands to aligned
tables. Failures exit nonzero with a machine-readable JSON envelope on
stderr. Any flag can also be set through ``KGABDUCE_<COMMAND>_<FLAG>``
environment variables.
"""

from __future__ import annotations

import functools
import json
import sys
import urllib.request
from pathlib import Path

import click

from .errors import ActionParseError, KgabduceError
from .evaluation import evaluate_records, load_records, search_records
from .env import EnvServer, RewardScorer, score_requests_file
from .graph import (
    SPLIT_NAMES,
    GraphSplit,
    load_split,
    load_triples,
    resolve_graph_arg,
    save_split,
    split_edges,
)
from .hypothesis import PATTERNS, from_dict
from .sampler import sample_split_datasets
from .smatch import smatch_score
from .tokenizer import Vocabulary, actions_to_hypothesis, build_vocabulary, save_vocabulary


def _echo_json(payload: object, pretty: bool = False) -> None:
    click.echo(json.dumps(payload, sort_keys=True, indent=2 if pretty else None))


def _json_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except KgabduceError as exc:
            click.echo(json.dumps(exc.to_json(), sort_keys=True), err=True)
            sys.exit(1)

    return wrapper


def _summary_table(summary: dict) -> str:
    has_smatch = any("smatch" in e for e in summary.get("per_pattern", {}).values())
    header = f"{'pattern':<10}{'count':>8}{'invalid':>9}{'jaccard':>10}" + ("{:>10}".format("smatch") if has_smatch else "")
    lines = [header, "-" * len(header)]
    for name, entry in summary.get("per_pattern", {}).items():
        row = f"{name:<10}{entry['count']:>8}{entry['invalid']:>9}{entry['jaccard']:>10.4f}"
        if has_smatch:
            row += f"{entry.get('smatch', float('nan')):>10.4f}"
        lines.append(row)
    avg = summary.get("average")
    if avg:
        row = f"{'average':<10}{summary.get('records', 0):>8}{'':>9}{avg['jaccard']:>10.4f}"
        if has_smatch and "smatch" in avg:
            row += f"{avg['smatch']:>10.4f}"
        lines.append(row)
    return "\n".join(lines)


def _split_dir_and_name(path: str) -> tuple[str | None, str]:
    p = Path(path)
    if p.name in SPLIT_NAMES and (p.parent / "manifest.json").is_file():
        return str(p.parent), p.name
    if (p / "manifest.json").is_file():
        return str(p), "train"
    return None, "train"


@click.group()
@click.version_option(package_name="kgabduce")
def cli() -> None:
    """Abductive reasoning over knowledge graphs."""


@cli.command()
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Triple TSV file.")
@click.option("--format", "fmt", default="label-tsv", type=click.Choice(["label-tsv", "id-tsv"]), show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--ratios", default="8,1,1", show_default=True, help="train,valid,test ratio integers.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--pretty", is_flag=True, default=False)
@_json_errors
def split(input_path: str, fmt: str, seed: int, ratios: str, out_dir: str, pretty: bool) -> None:
    """Split a triple file into a cumulative graph directory."""
    try:
        ratio_tuple = tuple(int(x) for x in ratios.split(","))
    except ValueError:
        raise KgabduceError(f"--ratios must be comma-separated integers, got {ratios!r}") from None
    graph = load_triples(input_path, fmt=fmt)
    result = split_edges(graph, seed=seed, ratios=ratio_tuple)
    save_split(result, out_dir)
    save_vocabulary(build_vocabulary(result.test), Path(out_dir) / "vocabulary.txt")
    _echo_json(
        {
            "out": out_dir,
            "entities": graph.num_entities,
            "relations": graph.num_relations,
            "edges": result.counts,
            "seed": seed,
        },
        pretty,
    )


@cli.command()
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Graph directory from `split`.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--count", default=100, show_default=True, type=int, help="Pairs per pattern per split.")
@click.option("--patterns", default="all", show_default=True, help="'all' or comma-separated pattern names.")
@click.option("--splits", default="train,valid,test", show_default=True)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--max-obs", default=32, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--pretty", is_flag=True, default=False)
@_json_errors
def sample(
    graph_dir: str,
    out_dir: str,
    count: int,
    patterns: str,
    splits: str,
    seed: int,
    max_obs: int,
    workers: int,
    pretty: bool,
) -> None:
    """Sample observation/hypothesis pair datasets."""
    split_obj = load_split(graph_dir)
    names = PATTERNS if patterns == "all" else tuple(p.strip() for p in patterns.split(","))
    split_names = tuple(s.strip() for s in splits.split(","))
    bad = [s for s in split_names if s not in SPLIT_NAMES]
    if bad:
        raise KgabduceError(f"unknown splits: {bad}")
    manifest = sample_split_datasets(
        split_obj,
        count,
        seed,
        out_dir,
        patterns=names,
        splits=split_names,
        max_obs=max_obs,
        workers=workers,
        split_dir=graph_dir,
    )
    _echo_json(manifest, pretty)


@cli.command()
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False), help="JSONL prediction records.")
@click.option("--graph", "graph_path", required=True, help="Triple file, graph dir, or <dir>/<split>.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--workers", default=1, show_default=True, type=int)
@click.option("--pretty", is_flag=True, default=False)
@_json_errors
def evaluate(pred_path: str, graph_path: str, seed: int, workers: int, pretty: bool) -> None:
    """Score a prediction file: per-pattern Jaccard (and smatch vs references)."""
    records = load_records(pred_path)
    graph = resolve_graph_arg(graph_path)
    split_dir, split_name = _split_dir_and_name(graph_path)
    if workers > 1 and split_dir is None:
        raise KgabduceError("--workers > 1 needs a graph directory, not a bare triple file")
    summary = evaluate_records(
        records, graph, seed=seed, workers=workers, split_dir=split_dir, split_name=split_name
    )
    if pretty:
        click.echo(_summary_table(summary))
    else:
        _echo_json(summary)


@cli.command()
@click.option("--pairs", "pairs_path", required=True, type=click.Path(exists=True, dir_okay=False), help="JSONL pair records with observations.")
@click.option("--graph", "graph_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--eval-split", default="test", show_default=True, type=click.Choice(list(SPLIT_NAMES)))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--pretty", is_flag=True, default=False)
@_json_errors
def search(pairs_path: str, graph_dir: str, eval_split: str, seed: int, pretty: bool) -> None:
    """One-hop search baseline over pair observations."""
    records = load_records(pairs_path)
    split_obj = load_split(graph_dir)
    summary = search_records(records, split_obj, eval_split=eval_split, seed=seed)
    if pretty:
        click.echo(_summary_table(summary))
    else:
        _echo_json(summary)


def _load_hypothesis_lines(path: str, vocab: Vocabulary | None = None) -> list:
    """One hypothesis per JSONL line: structural JSON (strict) or action tokens.

    Action-token records need a vocabulary and decode to None on parse
    failure, matching how evaluation treats model output; structural records
    must be valid.
    """
    out = []
    for record in load_records(path):
        if isinstance(record, dict) and "hypothesis" not in record and record.get("actions") is not None:
            if vocab is None:
                raise KgabduceError(f"{path}: records carry action tokens; pass --graph to decode them")
            try:
                out.append(actions_to_hypothesis(record["actions"], vocab))
            except ActionParseError:
                out.append(None)
            continue
        if isinstance(record, dict) and "hypothesis" in record:
            record = record["hypothesis"]
        out.append(from_dict(record))
    return out


@cli.command()
@click.option("--pred", "pred_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--gold", "gold_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--graph", "graph_path", default=None, help="Graph for decoding records that carry action tokens.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--pretty", is_flag=True, default=False)
@_json_errors
def smatch(pred_path: str, gold_path: str, graph_path: str | None, seed: int, pretty: bool) -> None:
    """Structural similarity between two hypothesis JSONL files, line by line.

    Lines carry structural hypothesis JSON or, with --graph, action tokens;
    a line whose action sequence fails to parse scores 0.0.
    """
    vocab = build_vocabulary(resolve_graph_arg(graph_path)) if graph_path else None
    preds = _load_hypothesis_lines(pred_path, vocab)
    golds = _load_hypothesis_lines(gold_path, vocab)
    if len(preds) != len(golds):
        raise KgabduceError(f"pred has {len(preds)} hypotheses but gold has {len(golds)}")
    scores = [0.0 if p is None or g is None else smatch_score(p, g, seed=seed) for p, g in zip(preds, golds)]
    payload = {
        "count": len(scores),
        "mean": sum(scores) / len(scores) if scores else 0.0,
        "scores": scores,
    }
    _echo_json(payload, pretty)


@cli.command()
@click.option("--graph", "graph_path", required=True, help="Triple file, graph dir, or <dir>/<split>.")
@click.option("--requests", "requests_path", required=True, type=click.Path(exists=True, dir_okay=False), help="NDJSON reward requests.")
@click.option("--server", default=None, help="Score through a running HTTP service instead of locally.")
@_json_errors
def score(graph_path: str, requests_path: str, server: str | None) -> None:
    """Score reward requests; responses stream out as NDJSON."""
    lines = Path(requests_path).read_text(encoding="utf-8").splitlines()
    if server is None:
        scorer = RewardScorer(resolve_graph_arg(graph_path))
        for response in score_requests_file(scorer, lines):
            click.echo(json.dumps(response, sort_keys=True))
        return

    entries: list[dict | None] = []
    batch: list[dict] = []
    for line in lines:
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
            batch.append(
                {
                    "id": int(payload.get("id", -1)),
                    "obs": [int(e) for e in payload["obs"]],
                    "actions": [str(a) for a in payload["actions"]],
                }
            )
            entries.append(batch[-1])
        except (ValueError, TypeError, KeyError):
            entries.append(None)
    request = urllib.request.Request(
        server.rstrip("/") + "/score/batch",
        data=json.dumps(batch).encode("utf-8"),
        headers={"Content-Type": "application/json"},
    )
    try:
        with urllib.request.urlopen(request) as resp:
            responses = json.loads(resp.read())
    except OSError as exc:
        raise KgabduceError(f"cannot reach {server}: {exc}") from None
    it = iter(responses)
    for entry in entries:
        if entry is None:
            click.echo(json.dumps({"id": -1, "valid": False, "reward": 0.0, "size": 0, "err": "bad-request"}, sort_keys=True))
        else:
            click.echo(json.dumps(next(it), sort_keys=True))


@cli.command("serve-env")
@click.option("--graph", "graph_path", required=True, help="Triple file, graph dir, or <dir>/<split>.")
@click.option("--listen", default="127.0.0.1:7410", show_default=True, help="host:port or unix:/path.")
@_json_errors
def serve_env(graph_path: str, listen: str) -> None:
    """Run the NDJSON reward service."""
    scorer = RewardScorer(resolve_graph_arg(graph_path))
    server = EnvServer(scorer, listen)
    server.serve_forever(
        on_bound=lambda addr: click.echo(json.dumps({"listening": addr}), err=True)
    )


@cli.command()
@click.option("--graph", "graph_path", required=True, help="Triple file, graph dir, or <dir>/<split>.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
@_json_errors
def serve(graph_path: str, host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    p = Path(graph_path)
    if (p / "manifest.json").is_file():
        app = create_app(load_split(p))
    else:
        app = create_app(resolve_graph_arg(graph_path))
    uvicorn.run(app, host=host, port=port)


def main() -> None:
    cli(auto_envvar_prefix="KGABDUCE")


if __name__ == "__main__":
    main()
