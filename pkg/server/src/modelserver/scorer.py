"""Masked-LM pseudo-loss scorer: one copy per word, average the masked loss."""

from __future__ import annotations

import os

import torch
from torch import nn

from modelserver.config import TrainerConfig, read_json, write_json
from modelserver.models import MaskedLM
from modelserver.subword import MASK, SubwordVocab


class ScorerRuntime:
    def __init__(self, model: MaskedLM, vocab: SubwordVocab, max_seq_len: int = 512,
                 device: str = "cpu"):
        self.model = model.to(device).eval()
        self.vocab = vocab
        self.max_seq_len = max_seq_len
        self.device = device
        self.mask_id = vocab.piece_id(MASK)

    @torch.no_grad()
    def pseudo_loss(self, text: str) -> float:
        words = text.split()
        if not words:
            raise ValueError("empty text")
        ids, owner = self.vocab.encode_words(words)
        ids = ids[: self.max_seq_len]
        owner = owner[: self.max_seq_len]
        n_words = max(owner) + 1
        # one copy per word, that word's pieces replaced by the mask token
        copies = torch.tensor([ids], dtype=torch.long).repeat(n_words, 1)
        targets = torch.full_like(copies, -100)
        for w in range(n_words):
            for pos, owner_w in enumerate(owner):
                if owner_w == w:
                    copies[w, pos] = self.mask_id
                    targets[w, pos] = ids[pos]
        loss_fn = nn.CrossEntropyLoss(ignore_index=-100, reduction="none")
        losses = []
        for start in range(0, n_words, 16):
            chunk = copies[start : start + 16].to(self.device)
            tchunk = targets[start : start + 16].to(self.device)
            logits = self.model(chunk)
            flat = loss_fn(logits.reshape(-1, logits.size(-1)), tchunk.reshape(-1))
            flat = flat.reshape(chunk.size(0), -1)
            counts = tchunk.ne(-100).sum(dim=1).clamp(min=1)
            losses.extend((flat.sum(dim=1) / counts).tolist())
        return float(sum(losses) / len(losses))


def train_scorer(data: list[dict], out_dir: str,
                 cfg: TrainerConfig = TrainerConfig()) -> ScorerRuntime:
    torch.manual_seed(cfg.seed)
    texts = [row["text"] for row in data if row["text"].strip()]
    vocab = SubwordVocab.build(texts)
    model = MaskedLM(len(vocab), cfg.dim, cfg.heads, cfg.layers)
    mask_id = vocab.piece_id(MASK)

    encoded = [vocab.encode_text(t)[:256] for t in texts]
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=-100)
    generator = torch.Generator().manual_seed(cfg.seed)
    model.train()
    for _ in range(cfg.epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), cfg.batch_size):
            batch = [encoded[i] for i in order[start : start + cfg.batch_size]]
            width = max(len(b) for b in batch)
            ids = torch.zeros(len(batch), width, dtype=torch.long)
            for r, row in enumerate(batch):
                ids[r, : len(row)] = torch.tensor(row)
            masked = ids.clone()
            targets = torch.full_like(ids, -100)
            noise = torch.rand(ids.shape, generator=generator)
            chosen = (noise < 0.15) & ids.ne(0)
            masked[chosen] = mask_id
            targets[chosen] = ids[chosen]
            if not chosen.any():
                continue
            optimizer.zero_grad()
            logits = model(masked)
            loss_fn(logits.reshape(-1, logits.size(-1)), targets.reshape(-1)).backward()
            optimizer.step()
    model.eval()

    os.makedirs(out_dir, exist_ok=True)
    vocab.save(os.path.join(out_dir, "vocab.json"))
    write_json(os.path.join(out_dir, "config.json"), {
        "kind": "masked-lm", "dim": cfg.dim, "heads": cfg.heads, "layers": cfg.layers,
    })
    torch.save(model.state_dict(), os.path.join(out_dir, "model.pt"))
    return ScorerRuntime(model, vocab)


def load_scorer(ckpt_dir: str, max_seq_len: int = 512,
                device: str = "cpu") -> ScorerRuntime:
    meta = read_json(os.path.join(ckpt_dir, "config.json"))
    if meta.get("kind") != "masked-lm":
        raise ValueError(f"{ckpt_dir} is not a masked-lm checkpoint")
    vocab = SubwordVocab.load(os.path.join(ckpt_dir, "vocab.json"))
    model = MaskedLM(len(vocab), meta["dim"], meta["heads"], meta["layers"])
    model.load_state_dict(torch.load(os.path.join(ckpt_dir, "model.pt"),
                                     weights_only=True))
    return ScorerRuntime(model, vocab, max_seq_len, device)
