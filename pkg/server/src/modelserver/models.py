"""Small transformer models trained from scratch on the task dataset.

The build environment has no model-hub access, so "pretrained" checkpoints are
produced locally by the training commands; architectures follow the standard
encoder / encoder-decoder / masked-LM shapes at a few hundred dims total.
"""

from __future__ import annotations

import math

import torch
from torch import nn


class PositionalEncoding(nn.Module):
    def __init__(self, dim: int, max_len: int = 512):
        super().__init__()
        position = torch.arange(max_len).unsqueeze(1)
        div = torch.exp(torch.arange(0, dim, 2) * (-math.log(10000.0) / dim))
        pe = torch.zeros(max_len, dim)
        pe[:, 0::2] = torch.sin(position * div)
        pe[:, 1::2] = torch.cos(position * div)
        self.register_buffer("pe", pe)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.pe[: x.size(1)]


class TextClassifier(nn.Module):
    """Embedding -> transformer encoder -> masked mean pool -> linear head."""

    def __init__(self, vocab_size: int, n_labels: int, dim: int = 64, heads: int = 4,
                 layers: int = 2, max_len: int = 512):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim, padding_idx=0)
        self.positional = PositionalEncoding(dim, max_len)
        layer = nn.TransformerEncoderLayer(dim, heads, dim * 4, batch_first=True,
                                           dropout=0.1)
        self.encoder = nn.TransformerEncoder(layer, layers)
        self.head = nn.Linear(dim, n_labels)
        self.max_len = max_len

    def logits_from_embeddings(self, emb: torch.Tensor,
                               pad_mask: torch.Tensor) -> torch.Tensor:
        hidden = self.encoder(self.positional(emb), src_key_padding_mask=pad_mask)
        keep = (~pad_mask).unsqueeze(-1).float()
        pooled = (hidden * keep).sum(1) / keep.sum(1).clamp(min=1.0)
        return self.head(pooled)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.logits_from_embeddings(self.embedding(ids), ids.eq(0))


class SpanInfiller(nn.Module):
    """Encoder-decoder transformer generating sentinel-interleaved infills."""

    def __init__(self, vocab_size: int, dim: int = 64, heads: int = 4, layers: int = 2,
                 max_len: int = 512):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim, padding_idx=0)
        self.positional = PositionalEncoding(dim, max_len)
        self.transformer = nn.Transformer(
            dim, heads, layers, layers, dim * 4, batch_first=True, dropout=0.1)
        self.head = nn.Linear(dim, vocab_size)
        self.max_len = max_len

    def forward(self, src: torch.Tensor, tgt: torch.Tensor) -> torch.Tensor:
        causal = nn.Transformer.generate_square_subsequent_mask(tgt.size(1))
        hidden = self.transformer(
            self.positional(self.embedding(src)),
            self.positional(self.embedding(tgt)),
            tgt_mask=causal,
            src_key_padding_mask=src.eq(0),
            tgt_key_padding_mask=tgt.eq(0),
        )
        return self.head(hidden)

    @torch.no_grad()
    def encode(self, src: torch.Tensor) -> torch.Tensor:
        return self.transformer.encoder(self.positional(self.embedding(src)),
                                        src_key_padding_mask=src.eq(0))

    @torch.no_grad()
    def decode_step(self, memory: torch.Tensor, src: torch.Tensor,
                    tgt: torch.Tensor) -> torch.Tensor:
        causal = nn.Transformer.generate_square_subsequent_mask(tgt.size(1))
        hidden = self.transformer.decoder(
            self.positional(self.embedding(tgt)), memory, tgt_mask=causal,
            memory_key_padding_mask=src.eq(0))
        return self.head(hidden[:, -1])


class MaskedLM(nn.Module):
    """Embedding -> encoder -> per-position vocabulary head (pseudo-loss scorer)."""

    def __init__(self, vocab_size: int, dim: int = 64, heads: int = 4, layers: int = 2,
                 max_len: int = 512):
        super().__init__()
        self.embedding = nn.Embedding(vocab_size, dim, padding_idx=0)
        self.positional = PositionalEncoding(dim, max_len)
        layer = nn.TransformerEncoderLayer(dim, heads, dim * 4, batch_first=True,
                                           dropout=0.1)
        self.encoder = nn.TransformerEncoder(layer, layers)
        self.head = nn.Linear(dim, vocab_size)
        self.max_len = max_len

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        hidden = self.encoder(self.positional(self.embedding(ids)),
                              src_key_padding_mask=ids.eq(0))
        return self.head(hidden)
