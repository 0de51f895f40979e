"""Artifacts written by the graph toolchain, turned into model tensors.

The trainer reads exactly three file kinds out of a sample directory:
``vocabulary.txt`` (one token per line, the line number is the token id),
``<split>_pairs.jsonl`` records, and ``sample_manifest.json``, whose
relation/entity counts locate the entity block inside the vocabulary.
Training sequences frame a sorted observation and the action tokens as
``obs..., [SEP], actions..., [EOS]``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import torch

from .errors import DataError

SPECIAL_TOKENS = ("[PAD]", "[BOS]", "[EOS]", "[SEP]", "[I]", "[U]", "[N]")
PAD, BOS, EOS, SEP = 0, 1, 2, 3


class Vocab:
    """Token table plus the offset arithmetic for observation entities.

    Layout contract: the seven specials, then one token per relation, then
    one per entity. ``fingerprint`` hashes the exact file bytes so
    checkpoints can detect being replayed against a different vocabulary.
    """

    def __init__(self, tokens: Sequence[str], num_relations: int, num_entities: int) -> None:
        expected = len(SPECIAL_TOKENS) + num_relations + num_entities
        if len(tokens) != expected:
            raise DataError(f"vocabulary has {len(tokens)} tokens but the counts say {expected}")
        if tuple(tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise DataError("vocabulary does not start with the seven special tokens")
        self.tokens = tuple(tokens)
        self.num_relations = num_relations
        self.num_entities = num_entities
        self._ids = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self._ids) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def fingerprint(self) -> str:
        text = "".join(f"{tok}\n" for tok in self.tokens)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def token_id(self, token: str) -> int:
        try:
            return self._ids[token]
        except KeyError:
            raise DataError(f"unknown token {token!r}") from None

    def entity_token_id(self, entity: int) -> int:
        if not 0 <= entity < self.num_entities:
            raise DataError(f"entity id {entity} out of range (0..{self.num_entities - 1})")
        return len(SPECIAL_TOKENS) + self.num_relations + entity

    def decode(self, ids: Iterable[int]) -> list[str]:
        out = []
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise DataError(f"token id {i} out of range")
            out.append(self.tokens[i])
        return out

    def encode_observation(self, entities: Iterable[int]) -> list[int]:
        """Entity token ids, deduplicated and ascending: set semantics."""
        return [self.entity_token_id(e) for e in sorted(set(entities))]

    def encode_actions(self, actions: Sequence[str]) -> list[int]:
        return [self.token_id(t) for t in actions]

    def decode_generated(self, ids: Iterable[int]) -> list[str]:
        """Token strings of a sampled row, padding and terminator stripped."""
        return self.decode(int(i) for i in ids if int(i) not in (PAD, EOS))


def load_vocab(data_dir: str | Path) -> Vocab:
    """Vocabulary of a sample directory; counts come from its manifest."""
    root = Path(data_dir)
    vocab_path = root / "vocabulary.txt"
    manifest_path = root / "sample_manifest.json"
    if not vocab_path.is_file():
        raise DataError(f"{root}: no vocabulary.txt (not a sample directory?)")
    if not manifest_path.is_file():
        raise DataError(f"{root}: no sample_manifest.json")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    try:
        num_relations = int(manifest["relations"])
        num_entities = int(manifest["entities"])
    except KeyError as exc:
        raise DataError(
            f"{manifest_path}: manifest lacks {exc}; re-run sampling with a current toolchain"
        ) from None
    tokens = vocab_path.read_text(encoding="utf-8").splitlines()
    return Vocab(tokens, num_relations, num_entities)


@dataclass(frozen=True)
class Pair:
    """One observation-hypothesis sample.

    ``observation`` holds raw entity ids (what the reward env expects),
    ``actions`` the reference token strings, ``hypothesis`` the structural
    JSON used as smatch gold and as the reference in generated predictions.
    """

    observation: tuple[int, ...]
    actions: tuple[str, ...]
    pattern: str
    hypothesis: dict | None = None


def load_pairs(data_dir: str | Path, split: str = "train") -> list[Pair]:
    path = Path(data_dir) / f"{split}_pairs.jsonl"
    if not path.is_file():
        raise DataError(f"{path}: no such pair file")
    pairs: list[Pair] = []
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                pairs.append(
                    Pair(
                        observation=tuple(int(e) for e in rec["observation"]),
                        actions=tuple(str(a) for a in rec["actions"]),
                        pattern=str(rec.get("pattern", "unknown")),
                        hypothesis=rec.get("hypothesis"),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: bad pair record: {exc}") from None
    if not pairs:
        raise DataError(f"{path}: no records")
    return pairs


@dataclass
class Batch:
    """Model-facing tensors.

    ``act`` holds the action tokens with EOS appended; the model's logits at
    position t score ``act[:, t]``. ``mask`` is True on real action
    positions (EOS included), False on padding.
    """

    obs: torch.Tensor
    act: torch.Tensor
    mask: torch.Tensor


def observation_tensor(pairs: Sequence[Pair], vocab: Vocab, device: str = "cpu") -> torch.Tensor:
    rows = [vocab.encode_observation(p.observation) for p in pairs]
    width = max(len(r) for r in rows)
    obs = torch.full((len(rows), width), PAD, dtype=torch.long)
    for i, row in enumerate(rows):
        obs[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    return obs.to(device)


def make_batch(pairs: Sequence[Pair], vocab: Vocab, device: str = "cpu") -> Batch:
    if not pairs:
        raise DataError("empty batch")
    obs = observation_tensor(pairs, vocab, device)
    act_rows = [vocab.encode_actions(p.actions) + [EOS] for p in pairs]
    width = max(len(r) for r in act_rows)
    act = torch.full((len(act_rows), width), PAD, dtype=torch.long)
    for i, row in enumerate(act_rows):
        act[i, : len(row)] = torch.tensor(row, dtype=torch.long)
    act = act.to(device)
    return Batch(obs=obs, act=act, mask=act != PAD)


def iter_batches(
    pairs: Sequence[Pair],
    vocab: Vocab,
    batch_size: int,
    generator: torch.Generator | None = None,
    device: str = "cpu",
) -> Iterator[Batch]:
    """Minibatches over ``pairs``; shuffled when a generator is given.

    The last batch may be short. Shuffling is a function of the generator
    state only, so epochs are reproducible from the seed.
    """
    if batch_size < 1:
        raise DataError("batch_size must be positive")
    if generator is not None:
        order = torch.randperm(len(pairs), generator=generator).tolist()
    else:
        order = list(range(len(pairs)))
    for start in range(0, len(order), batch_size):
        chunk = [pairs[i] for i in order[start : start + batch_size]]
        yield make_batch(chunk, vocab, device)
