"""Supervised training: next-token cross-entropy on reference action sequences."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import torch
from torch import nn

from .data import PAD, Batch, Pair, Vocab, iter_batches, make_batch
from .errors import DivergedError
from .models import _GeneratorBase, save_checkpoint


def sequence_loss(model: _GeneratorBase, batch: Batch) -> torch.Tensor:
    """Mean cross-entropy over non-pad action tokens (EOS included)."""
    logits, _ = model.action_scores(batch.obs, batch.act)
    flat = nn.functional.cross_entropy(
        logits.reshape(-1, logits.size(-1)),
        batch.act.reshape(-1),
        ignore_index=PAD,
    )
    return flat


def train_supervised(
    model: _GeneratorBase,
    pairs: list[Pair],
    vocab: Vocab,
    out_dir: str | Path,
    epochs: int = 10,
    batch_size: int = 64,
    lr: float = 1e-3,
    warmup_steps: int = 0,
    seed: int = 0,
    device: str = "cpu",
    checkpoint_name: str = "reference.pt",
) -> dict:
    """Train in place, logging per-step loss and saving a final checkpoint.

    Returns {"steps", "final_loss", "checkpoint", "curve"}. A non-finite
    loss aborts immediately rather than writing a poisoned checkpoint.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model.to(device).train()
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    gen = torch.Generator().manual_seed(seed)

    step = 0
    curve: list[float] = []
    csv_path = out / "supervised_loss.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "epoch", "loss", "lr"])
        for epoch in range(epochs):
            for batch in iter_batches(pairs, vocab, batch_size, generator=gen, device=device):
                step += 1
                scale = min(1.0, step / warmup_steps) if warmup_steps else 1.0
                for group in opt.param_groups:
                    group["lr"] = lr * scale
                loss = sequence_loss(model, batch)
                if not math.isfinite(loss.item()):
                    raise DivergedError(f"non-finite loss at step {step}; lower the learning rate")
                opt.zero_grad()
                loss.backward()
                opt.step()
                curve.append(loss.item())
                writer.writerow([step, epoch, f"{loss.item():.6f}", f"{lr * scale:.8f}"])

    ckpt = out / checkpoint_name
    save_checkpoint(model, ckpt, vocab, extra={"steps": step, "final_loss": curve[-1] if curve else None})
    return {"steps": step, "final_loss": curve[-1] if curve else None, "checkpoint": str(ckpt), "curve": curve}


@torch.no_grad()
def token_accuracy(
    model: _GeneratorBase,
    pairs: list[Pair],
    vocab: Vocab,
    batch_size: int = 64,
    device: str = "cpu",
) -> float:
    """Teacher-forced argmax accuracy over non-pad action tokens."""
    model.to(device).eval()
    hit = total = 0
    for start in range(0, len(pairs), batch_size):
        batch = make_batch(pairs[start : start + batch_size], vocab, device=device)
        logits, _ = model.action_scores(batch.obs, batch.act)
        pred = logits.argmax(dim=-1)
        hit += int(((pred == batch.act) & batch.mask).sum())
        total += int(batch.mask.sum())
    return hit / total if total else 0.0
