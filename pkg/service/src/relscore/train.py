"""Classifier training: cross-entropy over masked pair statements.

Holds out a validation fraction, logs per-epoch accuracy, and keeps the
weights from the best validation epoch (earlier epoch wins ties).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .data import DataError, LabeledSample, collate, encode_samples
from .model import MaskedRelationClassifier, ModelConfig
from .tokenizer import WordTokenizer

logger = logging.getLogger(__name__)


@dataclass
class TrainSettings:
    epochs: int = 5
    batch_size: int = 16
    lr: float = 3e-4
    val_fraction: float = 0.1
    seed: int = 13
    allow_degenerate: bool = False


@dataclass
class TrainResult:
    model: MaskedRelationClassifier
    tokenizer: WordTokenizer
    log: dict

    @property
    def best_val_accuracy(self) -> float:
        return self.log["best_val_accuracy"]


def _accuracy(model, encoded, labels, pad_id, batch_size) -> float:
    if not encoded:
        return 0.0
    hits = 0
    model.eval()
    with torch.no_grad():
        for start in range(0, len(encoded), batch_size):
            chunk = encoded[start : start + batch_size]
            ids, mask_a, mask_b, padding = collate(chunk, pad_id)
            logits = model(ids, mask_a, mask_b, padding)
            hits += int((logits.argmax(dim=1) == labels[start : start + len(chunk)]).sum())
    return hits / len(encoded)


def train_classifier(
    samples: list[LabeledSample],
    config: ModelConfig | None = None,
    settings: TrainSettings = TrainSettings(),
) -> TrainResult:
    """Fine-tune encoder and head on labeled statements.

    ``config.vocab_size`` is overwritten from the tokenizer built over the
    samples.  Expects all three classes unless ``allow_degenerate`` is set.
    """
    if not samples:
        raise DataError("empty sample set")
    classes = {s.label for s in samples}
    if len(classes) < 3 and not settings.allow_degenerate:
        raise DataError(
            f"only {len(classes)} relation classes represented; "
            "pass allow_degenerate to train anyway"
        )
    torch.manual_seed(settings.seed)
    tokenizer = WordTokenizer.build(s.tokens for s in samples)
    if config is None:
        config = ModelConfig(vocab_size=tokenizer.vocab_size)
    config.vocab_size = tokenizer.vocab_size
    model = MaskedRelationClassifier(config)

    encoded, labels = encode_samples(samples, tokenizer, config.max_len)
    rng = np.random.default_rng(settings.seed)
    order = rng.permutation(len(encoded))
    n_val = max(1, int(len(encoded) * settings.val_fraction)) if len(encoded) > 1 else 0
    val_idx, train_idx = order[:n_val], order[n_val:]
    train_enc = [encoded[i] for i in train_idx]
    train_lab = labels[train_idx]
    val_enc = [encoded[i] for i in val_idx]
    val_lab = labels[val_idx]

    optimizer = torch.optim.Adam(model.parameters(), lr=settings.lr)
    loss_fn = nn.CrossEntropyLoss()
    log: dict = {"epochs": [], "train_size": len(train_enc), "val_size": len(val_enc)}
    best_state = {k: v.clone() for k, v in model.state_dict().items()}
    best_acc = -1.0
    for epoch in range(settings.epochs):
        model.train()
        epoch_order = rng.permutation(len(train_enc))
        total_loss = 0.0
        for start in range(0, len(train_enc), settings.batch_size):
            idx = epoch_order[start : start + settings.batch_size]
            ids, mask_a, mask_b, padding = collate(
                [train_enc[i] for i in idx], tokenizer.pad_id
            )
            logits = model(ids, mask_a, mask_b, padding)
            loss = loss_fn(logits, train_lab[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            total_loss += float(loss.detach()) * len(idx)
        val_acc = _accuracy(model, val_enc, val_lab, tokenizer.pad_id, settings.batch_size)
        train_acc = _accuracy(model, train_enc, train_lab, tokenizer.pad_id, settings.batch_size)
        log["epochs"].append(
            {
                "epoch": epoch + 1,
                "train_loss": total_loss / max(1, len(train_enc)),
                "train_accuracy": train_acc,
                "val_accuracy": val_acc,
            }
        )
        logger.info(
            "epoch %d: loss %.4f train acc %.3f val acc %.3f",
            epoch + 1, total_loss / max(1, len(train_enc)), train_acc, val_acc,
        )
        if val_acc > best_acc:
            best_acc = val_acc
            best_state = {k: v.clone() for k, v in model.state_dict().items()}
    model.load_state_dict(best_state)
    model.eval()
    log["best_val_accuracy"] = best_acc if val_enc else 0.0
    return TrainResult(model, tokenizer, log)
