"""PPO fine-tuning against the reward environment.

The policy starts as a copy of the supervised reference and is pushed
toward higher environment reward while a per-token penalty
``-beta * (log pi - log rho)`` keeps it near the reference. The penalty
coefficient adapts to a KL target. Optionally a structural-similarity
term is added to the terminal reward.
"""

from __future__ import annotations

import copy
import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

import torch
from torch import nn

from .data import PAD, Pair, Vocab, observation_tensor
from .envclient import EnvClient
from .errors import DivergedError, EnvConnectionError
from .models import _GeneratorBase, save_checkpoint


@dataclass(frozen=True)
class PpoConfig:
    iterations: int = 40
    horizon: int = 256          # rollout sequences per iteration
    minibatch: int = 64
    ppo_epochs: int = 4
    lr: float = 1e-4
    warmup_frac: float = 0.1
    lr_floor: float = 0.1       # fraction of peak lr at the schedule's ends
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    gamma: float = 1.0
    gae_lambda: float = 0.95
    beta: float = 0.02          # initial KL penalty coefficient
    kl_target: float = 6.0
    kl_gain: float = 0.1
    max_actions: int = 16
    temperature: float = 1.0
    smatch_weight: float = 0.0
    grad_clip: float = 1.0
    # Iterations at the start where only the value head trains. The policy
    # starts as the reference and its value head is uncalibrated; letting it
    # fit first keeps early advantages from wrecking the policy.
    value_warmup: int = 2
    checkpoint_every: int = 0
    seed: int = 0
    device: str = "cpu"

    def __post_init__(self) -> None:
        if self.horizon % self.minibatch:
            raise ValueError("horizon must be a multiple of minibatch")
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0.0 <= self.warmup_frac < 1.0:
            raise ValueError("warmup_frac must be in [0, 1)")
        if self.value_warmup < 0:
            raise ValueError("value_warmup cannot be negative")


def lr_at(iteration: int, total: int, config: PpoConfig) -> float:
    """Linear warmup from the floor, then cosine decay back to it."""
    floor = config.lr_floor
    warm = max(1, round(config.warmup_frac * total))
    if iteration < warm:
        frac = floor + (1.0 - floor) * (iteration + 1) / warm
    else:
        progress = (iteration - warm) / max(1, total - warm)
        frac = floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress))
    return config.lr * frac


class BetaController:
    """Multiplicative KL-target controller for the penalty coefficient."""

    def __init__(self, config: PpoConfig) -> None:
        self.beta = config.beta
        self.target = config.kl_target
        self.gain = config.kl_gain

    def update(self, kl: float) -> float:
        error = max(-0.2, min(0.2, kl / self.target - 1.0))
        self.beta *= 1.0 + self.gain * error
        return self.beta


def gae_advantages(
    rewards: torch.Tensor, values: torch.Tensor, mask: torch.Tensor, gamma: float, lam: float
) -> tuple[torch.Tensor, torch.Tensor]:
    """Masked GAE over left-aligned rows; advantage is 0 past each row's end."""
    batch, width = rewards.shape
    adv = torch.zeros_like(rewards)
    running = torch.zeros(batch, device=rewards.device)
    fmask = mask.float()
    for t in reversed(range(width)):
        next_value = values[:, t + 1] * fmask[:, t + 1] if t + 1 < width else torch.zeros_like(running)
        delta = rewards[:, t] + gamma * next_value - values[:, t]
        running = (delta + gamma * lam * running) * fmask[:, t]
        adv[:, t] = running
    return adv, adv + values * fmask


def _gather_logp(logits: torch.Tensor, act: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Per-position log-prob of the taken action, plus per-position entropy."""
    logp_all = torch.log_softmax(logits, dim=-1)
    logp = logp_all.gather(-1, act.unsqueeze(-1)).squeeze(-1)
    entropy = -(logp_all.exp() * logp_all).sum(dim=-1)
    return logp, entropy


@dataclass
class Rollout:
    obs: torch.Tensor
    act: torch.Tensor
    mask: torch.Tensor
    logp_old: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor
    env_rewards: list[float]
    mixed_rewards: list[float]
    valid: list[bool]
    kl_mean: float
    decoded: list[list[str]] = field(default_factory=list)


@torch.no_grad()
def collect_rollouts(
    policy: _GeneratorBase,
    reference: _GeneratorBase,
    pairs: list[Pair],
    vocab: Vocab,
    env: EnvClient,
    config: PpoConfig,
    beta: float,
    rng: random.Random,
    generator: torch.Generator | None = None,
    smatch_scorer=None,
) -> Rollout:
    batch = rng.choices(pairs, k=config.horizon)
    obs = observation_tensor(batch, vocab, device=config.device)
    policy.eval()
    act = policy.generate(obs, config.max_actions, temperature=config.temperature, generator=generator)
    mask = act != PAD
    lengths = mask.sum(dim=1)

    logits_old, values = policy.action_scores(obs, act)
    logp_old, _ = _gather_logp(logits_old, act)
    ref_logits, _ = reference.action_scores(obs, act)
    ref_logp, _ = _gather_logp(ref_logits, act)

    # EOS terminates a row during generation, so stripping PAD and EOS
    # recovers exactly the sampled action tokens.
    decoded = [vocab.decode_generated(row) for row in act]
    responses = env.score([(list(p.observation), tokens) for p, tokens in zip(batch, decoded)])
    env_rewards = [float(r["reward"]) for r in responses]
    valid = [bool(r["valid"]) for r in responses]
    mixed = list(env_rewards)
    if smatch_scorer is not None and config.smatch_weight > 0.0:
        refs = [p.hypothesis for p in batch]
        if any(h is None for h in refs):
            raise DivergedError("smatch mixing needs reference hypotheses in the pair records")
        scores = smatch_scorer(decoded, refs)
        mixed = [r + config.smatch_weight * s for r, s in zip(env_rewards, scores)]

    diff = (ref_logp - logp_old) * mask.float()
    # k3 estimator: non-negative per-token KL(pi || rho) for the controller.
    kl_tok = (diff.exp() - 1.0 - diff) * mask.float()
    kl_mean = float(kl_tok.sum(dim=1).mean())

    rewards = -beta * (logp_old - ref_logp) * mask.float()
    terminal = torch.tensor(mixed, dtype=torch.float32, device=config.device)
    rewards[torch.arange(len(batch), device=config.device), lengths - 1] += terminal

    adv, returns = gae_advantages(rewards, values, mask, config.gamma, config.gae_lambda)
    chosen = adv[mask]
    adv = torch.where(mask, (adv - chosen.mean()) / (chosen.std(correction=0) + 1e-8), adv)

    return Rollout(
        obs=obs,
        act=act,
        mask=mask,
        logp_old=logp_old,
        advantages=adv,
        returns=returns,
        env_rewards=env_rewards,
        mixed_rewards=mixed,
        valid=valid,
        kl_mean=kl_mean,
        decoded=decoded,
    )


def _fit_value_head(
    policy: _GeneratorBase,
    opt: torch.optim.Optimizer,
    rollout: Rollout,
    config: PpoConfig,
    generator: torch.Generator | None = None,
) -> dict:
    """Regress the value head on rollout returns; the trunk stays frozen."""
    policy.train()
    for param in policy.parameters():
        param.requires_grad_(False)
    for param in policy.value_head.parameters():
        param.requires_grad_(True)
    total = 0.0
    steps = 0
    try:
        for _ in range(config.ppo_epochs):
            perm = torch.randperm(config.horizon, generator=generator)
            for start in range(0, config.horizon, config.minibatch):
                idx = perm[start : start + config.minibatch]
                fmask = rollout.mask[idx].float()
                denom = fmask.sum().clamp(min=1.0)
                _, values = policy.action_scores(rollout.obs[idx], rollout.act[idx])
                loss = 0.5 * (((values - rollout.returns[idx]) ** 2) * fmask).sum() / denom
                opt.zero_grad()
                loss.backward()
                opt.step()
                total += loss.item()
                steps += 1
    finally:
        for param in policy.parameters():
            param.requires_grad_(True)
    return {"policy_loss": 0.0, "value_loss": total / steps, "entropy": 0.0}


def _optimize(
    policy: _GeneratorBase,
    opt: torch.optim.Optimizer,
    rollout: Rollout,
    config: PpoConfig,
    generator: torch.Generator | None = None,
) -> dict:
    policy.train()
    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
    steps = 0
    for _ in range(config.ppo_epochs):
        perm = torch.randperm(config.horizon, generator=generator)
        for start in range(0, config.horizon, config.minibatch):
            idx = perm[start : start + config.minibatch]
            mask = rollout.mask[idx]
            fmask = mask.float()
            denom = fmask.sum().clamp(min=1.0)

            logits, values = policy.action_scores(rollout.obs[idx], rollout.act[idx])
            logp, entropy = _gather_logp(logits, rollout.act[idx])
            ratio = (logp - rollout.logp_old[idx]).exp()
            adv = rollout.advantages[idx]
            clipped = torch.clamp(ratio, 1.0 - config.clip, 1.0 + config.clip)
            policy_loss = -(torch.min(ratio * adv, clipped * adv) * fmask).sum() / denom
            value_loss = 0.5 * (((values - rollout.returns[idx]) ** 2) * fmask).sum() / denom
            entropy_mean = (entropy * fmask).sum() / denom
            loss = policy_loss + config.vf_coef * value_loss - config.ent_coef * entropy_mean
            if not torch.isfinite(loss):
                raise DivergedError("non-finite PPO loss; lower the learning rate or raise beta")

            opt.zero_grad()
            loss.backward()
            nn.utils.clip_grad_norm_(policy.parameters(), config.grad_clip)
            opt.step()

            stats["policy_loss"] += policy_loss.item()
            stats["value_loss"] += value_loss.item()
            stats["entropy"] += entropy_mean.item()
            steps += 1
    return {k: v / steps for k, v in stats.items()}


def ppo_finetune(
    reference: _GeneratorBase,
    pairs: list[Pair],
    vocab: Vocab,
    env: EnvClient,
    out_dir: str | Path,
    config: PpoConfig,
    smatch_scorer=None,
) -> dict:
    """Fine-tune a copy of ``reference``; returns summary stats and the curve.

    Writes ``ppo_curve.csv`` and ``policy.pt`` under ``out_dir``. If the
    environment connection drops mid-run, the current policy is saved as
    ``policy_interrupted.pt`` and the error propagates.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    device = config.device

    policy = copy.deepcopy(reference).to(device)
    reference = reference.to(device).eval()
    for param in reference.parameters():
        param.requires_grad_(False)

    opt = torch.optim.Adam(policy.parameters(), lr=config.lr)
    # the value head alone can take a much hotter optimizer
    value_opt = torch.optim.Adam(policy.value_head.parameters(), lr=1e-2)
    controller = BetaController(config)
    rng = random.Random(config.seed)
    generator = torch.Generator().manual_seed(config.seed)

    curve: list[dict] = []
    columns = [
        "iteration", "reward", "mixed_reward", "valid_frac", "kl",
        "beta", "lr", "policy_loss", "value_loss", "entropy",
    ]
    csv_path = out / "ppo_curve.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        try:
            for iteration in range(config.iterations):
                lr = lr_at(iteration, config.iterations, config)
                for group in opt.param_groups:
                    group["lr"] = lr
                beta = controller.beta
                rollout = collect_rollouts(
                    policy, reference, pairs, vocab, env, config,
                    beta=beta, rng=rng, generator=generator, smatch_scorer=smatch_scorer,
                )
                if iteration < config.value_warmup:
                    stats = _fit_value_head(policy, value_opt, rollout, config, generator=generator)
                else:
                    stats = _optimize(policy, opt, rollout, config, generator=generator)
                    controller.update(rollout.kl_mean)
                row = {
                    "iteration": iteration,
                    "reward": sum(rollout.env_rewards) / len(rollout.env_rewards),
                    "mixed_reward": sum(rollout.mixed_rewards) / len(rollout.mixed_rewards),
                    "valid_frac": sum(rollout.valid) / len(rollout.valid),
                    "kl": rollout.kl_mean,
                    "beta": beta,
                    "lr": lr,
                    **stats,
                }
                curve.append(row)
                writer.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in row.items()})
                fh.flush()
                if config.checkpoint_every and (iteration + 1) % config.checkpoint_every == 0:
                    save_checkpoint(policy, out / f"policy_iter{iteration + 1}.pt", vocab)
        except EnvConnectionError:
            save_checkpoint(policy, out / "policy_interrupted.pt", vocab, extra={"iterations": len(curve)})
            raise

    ckpt = out / "policy.pt"
    save_checkpoint(policy, ckpt, vocab, extra={"iterations": config.iterations})
    return {
        "iterations": config.iterations,
        "checkpoint": str(ckpt),
        "final_beta": controller.beta,
        "reward_first": curve[0]["reward"] if curve else None,
        "reward_last": curve[-1]["reward"] if curve else None,
        "curve": curve,
    }
