"""Labeled statement loading and batch assembly."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import torch

from .model import CLASS_NAMES
from .tokenizer import EncodedStatement, WordTokenizer

LABEL_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class LabeledSample:
    tokens: tuple[str, ...]
    pos_a: int
    pos_b: int
    label: int


def load_samples(path: str) -> list[LabeledSample]:
    """Read the JSONL exchange format: tokens, pos_a, pos_b, label."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                label = LABEL_IDS[obj["label"]]
                samples.append(
                    LabeledSample(tuple(obj["tokens"]), obj["pos_a"], obj["pos_b"], label)
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"bad sample on line {lineno}: {exc}") from None
    if not samples:
        raise DataError(f"no samples in {path}")
    return samples


def collate(
    encoded: Sequence[EncodedStatement], pad_id: int
) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
    """Pad a batch; returns (ids, mask_a, mask_b, padding_mask)."""
    width = max(len(e.ids) for e in encoded)
    ids = torch.full((len(encoded), width), pad_id, dtype=torch.long)
    padding = torch.ones((len(encoded), width), dtype=torch.bool)
    mask_a = torch.zeros(len(encoded), dtype=torch.long)
    mask_b = torch.zeros(len(encoded), dtype=torch.long)
    for row, enc in enumerate(encoded):
        ids[row, : len(enc.ids)] = torch.tensor(enc.ids, dtype=torch.long)
        padding[row, : len(enc.ids)] = False
        mask_a[row] = enc.mask_a
        mask_b[row] = enc.mask_b
    return ids, mask_a, mask_b, padding


def encode_samples(
    samples: Sequence[LabeledSample], tokenizer: WordTokenizer, max_len: int
) -> tuple[list[EncodedStatement], torch.Tensor]:
    encoded = [
        tokenizer.encode_statement(s.tokens, s.pos_a, s.pos_b, max_len)
        for s in samples
    ]
    labels = torch.tensor([s.label for s in samples], dtype=torch.long)
    return encoded, labels
