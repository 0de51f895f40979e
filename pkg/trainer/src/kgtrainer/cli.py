"""Command line for the trainer: supervised, ppo, generate.

Results go to stdout as one JSON object; failures go to stderr as
``{"error": kind, "message": ...}`` with exit status 1. Every option can
also be set through a ``KGTRAINER_<COMMAND>_<OPTION>`` environment variable.
"""

from __future__ import annotations

import functools
import json
from pathlib import Path

import click
import torch

from .data import load_pairs, load_vocab, observation_tensor
from .envclient import EnvClient, EnvProcess, make_smatch_scorer
from .errors import TrainerError
from .models import ARCHITECTURES, full_config, load_checkpoint, toy_config, build_model
from .ppo import PpoConfig, ppo_finetune
from .supervised import token_accuracy, train_supervised


def _json_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainerError as exc:
            click.echo(json.dumps(exc.to_json()), err=True)
            raise SystemExit(1)

    return wrapper


@click.group()
def cli() -> None:
    """Train hypothesis generators against a reasoning-engine data directory."""


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False), help="Directory from `kgabduce sample`.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False), help="Where to write the checkpoint and loss curve.")
@click.option("--split", default="train", show_default=True)
@click.option("--eval-split", "eval_splits", multiple=True, help="Extra splits to report token accuracy on.")
@click.option("--architecture", type=click.Choice(ARCHITECTURES), default="encoder-decoder", show_default=True)
@click.option("--preset", type=click.Choice(["toy", "full"]), default="toy", show_default=True)
@click.option("--epochs", default=10, show_default=True, type=int)
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--lr", default=1e-3, show_default=True, type=float)
@click.option("--warmup-steps", default=0, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--device", default="cpu", show_default=True)
@_json_errors
def supervised(
    data_dir: str,
    out_dir: str,
    split: str,
    eval_splits: tuple[str, ...],
    architecture: str,
    preset: str,
    epochs: int,
    batch_size: int,
    lr: float,
    warmup_steps: int,
    seed: int,
    device: str,
) -> None:
    """Train a reference generator on observation/action pairs."""
    torch.manual_seed(seed)
    vocab = load_vocab(data_dir)
    pairs = load_pairs(data_dir, split)
    config = toy_config(len(vocab), architecture) if preset == "toy" else full_config(len(vocab), architecture)
    model = build_model(config)
    result = train_supervised(
        model, pairs, vocab, out_dir,
        epochs=epochs, batch_size=batch_size, lr=lr,
        warmup_steps=warmup_steps, seed=seed, device=device,
    )
    accuracy = {split: token_accuracy(model, pairs, vocab, batch_size=batch_size, device=device)}
    for name in eval_splits:
        held = load_pairs(data_dir, name)
        accuracy[name] = token_accuracy(model, held, vocab, batch_size=batch_size, device=device)
    click.echo(json.dumps({
        "steps": result["steps"],
        "final_loss": result["final_loss"],
        "checkpoint": result["checkpoint"],
        "accuracy": accuracy,
    }))


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--reference", "reference_path", required=True, type=click.Path(exists=True, dir_okay=False), help="Supervised checkpoint to start from.")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--split", default="train", show_default=True)
@click.option("--env", "env_address", default=None, help="Address of a running reward environment (host:port or unix:/path).")
@click.option("--graph", "graph_path", default=None, help="Graph to spawn an environment from (and to score structure against).")
@click.option("--iterations", default=40, show_default=True, type=int)
@click.option("--horizon", default=256, show_default=True, type=int)
@click.option("--minibatch", default=64, show_default=True, type=int)
@click.option("--ppo-epochs", default=4, show_default=True, type=int)
@click.option("--lr", default=1e-4, show_default=True, type=float)
@click.option("--warmup-frac", default=0.1, show_default=True, type=float)
@click.option("--clip", default=0.2, show_default=True, type=float)
@click.option("--beta", default=0.02, show_default=True, type=float)
@click.option("--kl-target", default=6.0, show_default=True, type=float)
@click.option("--kl-gain", default=0.1, show_default=True, type=float)
@click.option("--max-actions", default=16, show_default=True, type=int)
@click.option("--temperature", default=1.0, show_default=True, type=float)
@click.option("--smatch-weight", default=0.0, show_default=True, type=float, help="Weight of the structural-similarity term added to the reward.")
@click.option("--value-warmup", default=2, show_default=True, type=int, help="Iterations that fit only the value head before policy updates start.")
@click.option("--checkpoint-every", default=0, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--device", default="cpu", show_default=True)
@_json_errors
def ppo(
    data_dir: str,
    reference_path: str,
    out_dir: str,
    split: str,
    env_address: str | None,
    graph_path: str | None,
    iterations: int,
    horizon: int,
    minibatch: int,
    ppo_epochs: int,
    lr: float,
    warmup_frac: float,
    clip: float,
    beta: float,
    kl_target: float,
    kl_gain: float,
    max_actions: int,
    temperature: float,
    smatch_weight: float,
    value_warmup: int,
    checkpoint_every: int,
    seed: int,
    device: str,
) -> None:
    """Fine-tune a supervised checkpoint against the reward environment."""
    if env_address is None and graph_path is None:
        raise TrainerError("pass --env for a running environment or --graph to spawn one")
    if smatch_weight > 0.0 and graph_path is None:
        raise TrainerError("--smatch-weight needs --graph to decode and score hypotheses")
    torch.manual_seed(seed)
    vocab = load_vocab(data_dir)
    pairs = load_pairs(data_dir, split)
    reference = load_checkpoint(reference_path, vocab)
    try:
        config = PpoConfig(
            iterations=iterations, horizon=horizon, minibatch=minibatch, ppo_epochs=ppo_epochs,
            lr=lr, warmup_frac=warmup_frac, clip=clip, beta=beta, kl_target=kl_target,
            kl_gain=kl_gain, max_actions=max_actions, temperature=temperature,
            smatch_weight=smatch_weight, value_warmup=value_warmup,
            checkpoint_every=checkpoint_every, seed=seed, device=device,
        )
    except ValueError as exc:
        raise TrainerError(str(exc)) from exc
    scorer = make_smatch_scorer(graph_path) if smatch_weight > 0.0 else None

    proc = None
    try:
        if env_address is None:
            proc = EnvProcess(graph_path)
            env_address = proc.address
        with EnvClient(env_address) as env:
            summary = ppo_finetune(reference, pairs, vocab, env, out_dir, config, smatch_scorer=scorer)
    finally:
        if proc is not None:
            proc.close()
    summary.pop("curve")
    summary["curve_csv"] = str(Path(out_dir) / "ppo_curve.csv")
    click.echo(json.dumps(summary))


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--split", default="test", show_default=True)
@click.option("--max-actions", default=16, show_default=True, type=int)
@click.option("--temperature", default=0.0, show_default=True, type=float, help="0 decodes greedily.")
@click.option("--limit", default=0, show_default=True, type=int, help="Stop after this many records (0 = all).")
@click.option("--batch-size", default=64, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--device", default="cpu", show_default=True)
@_json_errors
def generate(
    data_dir: str,
    checkpoint_path: str,
    out_path: str,
    split: str,
    max_actions: int,
    temperature: float,
    limit: int,
    batch_size: int,
    seed: int,
    device: str,
) -> None:
    """Decode hypotheses for a split; the output feeds `kgabduce evaluate`."""
    vocab = load_vocab(data_dir)
    pairs = load_pairs(data_dir, split)
    if limit:
        pairs = pairs[:limit]
    model = load_checkpoint(checkpoint_path, vocab).to(device).eval()
    generator = torch.Generator().manual_seed(seed)
    written = 0
    with open(out_path, "w", encoding="utf-8") as fh:
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start : start + batch_size]
            obs = observation_tensor(chunk, vocab, device=device)
            rows = model.generate(obs, max_actions, temperature=temperature, generator=generator)
            for pair, row in zip(chunk, rows):
                tokens = vocab.decode_generated(row)
                record = {"observation": list(pair.observation), "actions": tokens, "pattern": pair.pattern}
                if pair.hypothesis is not None:
                    record["reference"] = pair.hypothesis
                fh.write(json.dumps(record) + "\n")
                written += 1
    click.echo(json.dumps({"records": written, "out": out_path}))


def main() -> None:
    cli(auto_envvar_prefix="KGTRAINER")


if __name__ == "__main__":
    main()
