"""Two conditional generators over action-token sequences.

Both expose the same contract: ``action_scores`` returns teacher-forced
token logits plus value estimates aligned with the action targets, and
``generate`` decodes autoregressively (temperature 0 is greedy). The
encoder-decoder variant embeds observation tokens with no positional term,
so permuting the observation cannot change the output. The decoder-only
variant concatenates ``obs [SEP] actions`` into one positional stream; set
semantics there come from the data pipeline sorting observations.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from pathlib import Path

import torch
from torch import nn

from .data import BOS, EOS, PAD, SEP, Vocab
from .errors import DataError, VocabularyMismatchError

ARCHITECTURES = ("encoder-decoder", "decoder-only")


@dataclass(frozen=True)
class ModelConfig:
    """Toy sizes by default; :func:`full_config` is the published preset."""

    vocab_size: int
    architecture: str = "encoder-decoder"
    hidden: int = 128
    heads: int = 8
    enc_layers: int = 2
    dec_layers: int = 2
    ffn: int = 512
    max_positions: int = 128
    dropout: float = 0.0

    def __post_init__(self) -> None:
        if self.architecture not in ARCHITECTURES:
            raise DataError(f"unknown architecture {self.architecture!r}")
        if self.hidden % self.heads:
            raise DataError("hidden size must be a multiple of the head count")
        if self.vocab_size < len((PAD, BOS, EOS, SEP)):
            raise DataError("vocabulary too small")


def toy_config(vocab_size: int, architecture: str = "encoder-decoder") -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, architecture=architecture)


def full_config(vocab_size: int, architecture: str = "encoder-decoder") -> ModelConfig:
    """Published sizes: hidden 512, 3+3 layers (6 for decoder-only)."""
    if architecture == "decoder-only":
        return ModelConfig(vocab_size, architecture, hidden=512, enc_layers=0, dec_layers=6, ffn=2048)
    return ModelConfig(vocab_size, architecture, hidden=512, enc_layers=3, dec_layers=3, ffn=2048)


def _causal_mask(length: int, device: torch.device) -> torch.Tensor:
    return torch.triu(torch.ones(length, length, dtype=torch.bool, device=device), diagonal=1)


class _GeneratorBase(nn.Module):
    def __init__(self, config: ModelConfig) -> None:
        super().__init__()
        self.config = config
        self.embed = nn.Embedding(config.vocab_size, config.hidden, padding_idx=PAD)
        self.pos = nn.Embedding(config.max_positions, config.hidden)
        self.out = nn.Linear(config.hidden, config.vocab_size)
        self.value_head = nn.Linear(config.hidden, 1)

    def _positions(self, length: int, device: torch.device) -> torch.Tensor:
        if length > self.config.max_positions:
            raise DataError(f"sequence length {length} exceeds max_positions {self.config.max_positions}")
        return self.pos(torch.arange(length, device=device))

    def _sample_step(self, logits: torch.Tensor, temperature: float, generator: torch.Generator | None) -> torch.Tensor:
        # PAD is the padding convention, never a legal action.
        logits = logits.clone()
        logits[:, PAD] = float("-inf")
        if temperature <= 0.0:
            return logits.argmax(dim=-1)
        probs = torch.softmax(logits / temperature, dim=-1)
        return torch.multinomial(probs, 1, generator=generator).squeeze(-1)

    @staticmethod
    def _trim(rows: torch.Tensor) -> torch.Tensor:
        used = rows.ne(PAD).any(dim=0).nonzero()
        width = int(used[-1]) + 1 if used.numel() else 1
        return rows[:, :width]

    def action_scores(self, obs: torch.Tensor, act: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        raise NotImplementedError

    def generate(
        self,
        obs: torch.Tensor,
        max_actions: int,
        temperature: float = 0.0,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        raise NotImplementedError


class EncoderDecoderGenerator(_GeneratorBase):
    """Observation encoder (no positional encoding) plus action decoder."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        # Zero layers is a legal smoke configuration; torch's stacks cannot
        # run empty, so they are skipped entirely in that case.
        self.encoder = None
        if config.enc_layers:
            enc_layer = nn.TransformerEncoderLayer(
                config.hidden, config.heads, config.ffn, config.dropout, batch_first=True, norm_first=True
            )
            self.encoder = nn.TransformerEncoder(enc_layer, config.enc_layers, enable_nested_tensor=False)
        self.decoder = None
        if config.dec_layers:
            dec_layer = nn.TransformerDecoderLayer(
                config.hidden, config.heads, config.ffn, config.dropout, batch_first=True, norm_first=True
            )
            self.decoder = nn.TransformerDecoder(dec_layer, config.dec_layers)

    def _memory(self, obs: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        pad = obs == PAD
        # No positional term here: observation order must not matter.
        h = self.embed(obs)
        memory = self.encoder(h, src_key_padding_mask=pad) if self.encoder is not None else h
        return memory, pad

    def _decode(self, dec_in: torch.Tensor, memory: torch.Tensor, memory_pad: torch.Tensor) -> torch.Tensor:
        length = dec_in.size(1)
        h = self.embed(dec_in) + self._positions(length, dec_in.device)
        if self.decoder is None:
            return h
        return self.decoder(
            h,
            memory,
            tgt_mask=_causal_mask(length, dec_in.device),
            tgt_key_padding_mask=dec_in == PAD,
            memory_key_padding_mask=memory_pad,
        )

    def action_scores(self, obs: torch.Tensor, act: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Teacher-forced (logits, values); position t scores ``act[:, t]``."""
        memory, memory_pad = self._memory(obs)
        bos = torch.full((act.size(0), 1), BOS, dtype=torch.long, device=act.device)
        dec_in = torch.cat([bos, act[:, :-1]], dim=1)
        h = self._decode(dec_in, memory, memory_pad)
        return self.out(h), self.value_head(h).squeeze(-1)

    @torch.no_grad()
    def generate(
        self,
        obs: torch.Tensor,
        max_actions: int,
        temperature: float = 0.0,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        memory, memory_pad = self._memory(obs)
        batch = obs.size(0)
        device = obs.device
        rows = torch.full((batch, max_actions), PAD, dtype=torch.long, device=device)
        dec = torch.full((batch, 1), BOS, dtype=torch.long, device=device)
        alive = torch.ones(batch, dtype=torch.bool, device=device)
        for t in range(max_actions):
            h = self._decode(dec, memory, memory_pad)
            nxt = self._sample_step(self.out(h[:, -1]), temperature, generator)
            nxt = torch.where(alive, nxt, torch.full_like(nxt, PAD))
            rows[:, t] = nxt
            alive &= nxt != EOS
            if not alive.any():
                break
            dec = torch.cat([dec, nxt.unsqueeze(1)], dim=1)
        return self._trim(rows)


class DecoderOnlyGenerator(_GeneratorBase):
    """One causal stack over the concatenated ``obs [SEP] actions`` stream."""

    def __init__(self, config: ModelConfig) -> None:
        super().__init__(config)
        self.stack = None
        if config.dec_layers:
            layer = nn.TransformerEncoderLayer(
                config.hidden, config.heads, config.ffn, config.dropout, batch_first=True, norm_first=True
            )
            self.stack = nn.TransformerEncoder(layer, config.dec_layers, enable_nested_tensor=False)

    def _hidden(self, seq: torch.Tensor) -> torch.Tensor:
        length = seq.size(1)
        h = self.embed(seq) + self._positions(length, seq.device)
        if self.stack is None:
            return h
        return self.stack(h, mask=_causal_mask(length, seq.device), src_key_padding_mask=seq == PAD)

    def _concat(self, obs: torch.Tensor, act: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        batch = obs.size(0)
        obs_len = (obs != PAD).sum(dim=1)
        act_len = (act != PAD).sum(dim=1)
        width = int((obs_len + 1 + act_len).max())
        seq = torch.full((batch, width), PAD, dtype=torch.long, device=obs.device)
        for i in range(batch):
            s, a = int(obs_len[i]), int(act_len[i])
            seq[i, :s] = obs[i, :s]
            seq[i, s] = SEP
            seq[i, s + 1 : s + 1 + a] = act[i, :a]
        return seq, obs_len

    def action_scores(self, obs: torch.Tensor, act: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Teacher-forced (logits, values); position t scores ``act[:, t]``."""
        seq, obs_len = self._concat(obs, act)
        h = self._hidden(seq[:, :-1])
        # act[:, j] is the target at stream position obs_len + j.
        width = act.size(1)
        pos = obs_len.unsqueeze(1) + torch.arange(width, device=act.device).unsqueeze(0)
        pos = pos.clamp(max=h.size(1) - 1)
        h_act = h.gather(1, pos.unsqueeze(-1).expand(-1, -1, h.size(-1)))
        return self.out(h_act), self.value_head(h_act).squeeze(-1)

    @torch.no_grad()
    def generate(
        self,
        obs: torch.Tensor,
        max_actions: int,
        temperature: float = 0.0,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        batch, obs_width = obs.shape
        device = obs.device
        obs_len = (obs != PAD).sum(dim=1)
        buf = torch.full((batch, obs_width + 1 + max_actions), PAD, dtype=torch.long, device=device)
        buf[:, :obs_width] = obs
        buf.scatter_(1, obs_len.unsqueeze(1), SEP)
        cur = obs_len + 1
        rows = torch.full((batch, max_actions), PAD, dtype=torch.long, device=device)
        alive = torch.ones(batch, dtype=torch.bool, device=device)
        for t in range(max_actions):
            h = self._hidden(buf[:, : int(cur.max())])
            last = h.gather(1, (cur - 1).view(batch, 1, 1).expand(-1, -1, h.size(-1))).squeeze(1)
            nxt = self._sample_step(self.out(last), temperature, generator)
            nxt = torch.where(alive, nxt, torch.full_like(nxt, PAD))
            rows[:, t] = nxt
            buf.scatter_(1, cur.unsqueeze(1), nxt.unsqueeze(1))
            cur = cur + alive.long()
            alive &= nxt != EOS
            if not alive.any():
                break
        return self._trim(rows)


def build_model(config: ModelConfig) -> _GeneratorBase:
    if config.architecture == "decoder-only":
        return DecoderOnlyGenerator(config)
    return EncoderDecoderGenerator(config)


def save_checkpoint(model: _GeneratorBase, path: str | Path, vocab: Vocab, extra: dict | None = None) -> None:
    payload = {
        "config": asdict(model.config),
        "state": model.state_dict(),
        "vocab_fingerprint": vocab.fingerprint,
    }
    if extra:
        payload["extra"] = extra
    torch.save(payload, str(path))


def load_checkpoint(path: str | Path, vocab: Vocab) -> _GeneratorBase:
    """Rebuild a checkpointed model; aborts on a vocabulary mismatch."""
    try:
        payload = torch.load(str(path), map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise DataError(f"{path}: no such checkpoint") from None
    config = ModelConfig(**payload["config"])
    if config.vocab_size != len(vocab) or payload.get("vocab_fingerprint") != vocab.fingerprint:
        raise VocabularyMismatchError(f"{path}: checkpoint vocabulary does not match the data directory")
    model = build_model(config)
    model.load_state_dict(payload["state"])
    return model
