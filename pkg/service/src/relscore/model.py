"""Transformer encoder with a two-mask relation classification head.

The encoder contextualizes a masked statement; the head concatenates the
last-layer outputs at the two mask positions (first term's mask, then the
second's) and maps them to three logits over (forward, backward, none).
Keeping the concatenation in pair order is what carries direction after
both surface forms are masked away.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import torch
from torch import nn

CLASS_NAMES = ("forward", "backward", "none")


@dataclass
class ModelConfig:
    vocab_size: int
    hidden: int = 768
    layers: int = 12
    heads: int = 12
    ffn: int | None = None  # defaults to 4 * hidden
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self) -> None:
        if self.ffn is None:
            self.ffn = 4 * self.hidden


class MaskedRelationClassifier(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.token_embedding = nn.Embedding(config.vocab_size, config.hidden)
        self.position_embedding = nn.Embedding(config.max_len, config.hidden)
        self.norm = nn.LayerNorm(config.hidden)
        self.dropout = nn.Dropout(config.dropout)
        layer = nn.TransformerEncoderLayer(
            d_model=config.hidden,
            nhead=config.heads,
            dim_feedforward=config.ffn,
            dropout=config.dropout,
            batch_first=True,
        )
        self.encoder = nn.TransformerEncoder(layer, config.layers)
        self.head = nn.Linear(2 * config.hidden, len(CLASS_NAMES))

    def contextualize(
        self, ids: torch.Tensor, padding_mask: torch.Tensor
    ) -> torch.Tensor:
        """Last-layer hidden states, (batch, seq, hidden)."""
        positions = torch.arange(ids.shape[1], device=ids.device)
        x = self.token_embedding(ids) + self.position_embedding(positions)[None]
        x = self.dropout(self.norm(x))
        return self.encoder(x, src_key_padding_mask=padding_mask)

    def forward(
        self,
        ids: torch.Tensor,
        mask_a: torch.Tensor,
        mask_b: torch.Tensor,
        padding_mask: torch.Tensor,
    ) -> torch.Tensor:
        hidden = self.contextualize(ids, padding_mask)
        rows = torch.arange(ids.shape[0], device=ids.device)
        paired = torch.cat([hidden[rows, mask_a], hidden[rows, mask_b]], dim=1)
        return self.head(paired)


def save_checkpoint(path: str, model: MaskedRelationClassifier, vocab: list[str], log: dict) -> None:
    torch.save(
        {
            "config": asdict(model.config),
            "vocab": vocab,
            "state_dict": model.state_dict(),
            "log": log,
        },
        path,
    )


def load_checkpoint(path: str) -> tuple[MaskedRelationClassifier, list[str], dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    config = ModelConfig(**payload["config"])
    model = MaskedRelationClassifier(config)
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["vocab"], payload.get("log", {})
