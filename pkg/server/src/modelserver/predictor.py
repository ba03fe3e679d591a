"""Classification runtime: prediction and embedding-gradient attribution."""

from __future__ import annotations

import json
import os

import numpy as np
import torch
from torch import nn

from modelserver.config import TrainerConfig, read_json, write_json
from modelserver.models import TextClassifier
from modelserver.subword import SubwordVocab


def load_dataset(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rows.append(json.loads(line))
    return rows


class PredictorRuntime:
    def __init__(self, model: TextClassifier, vocab: SubwordVocab, labels: list[str],
                 max_seq_len: int = 512, device: str = "cpu"):
        self.model = model.to(device).eval()
        self.vocab = vocab
        self.labels = labels
        self.max_seq_len = max_seq_len
        self.device = device

    def _ids(self, words: list[str]) -> tuple[torch.Tensor, list[int]]:
        ids, owner = self.vocab.encode_words(words)
        ids = ids[: self.max_seq_len]
        owner = owner[: self.max_seq_len]
        return torch.tensor([ids], dtype=torch.long, device=self.device), owner

    @torch.no_grad()
    def predict_proba(self, text: str) -> np.ndarray:
        words = text.split()
        if not words:
            raise ValueError("empty text")
        ids, _ = self._ids(words)
        probs = torch.softmax(self.model(ids)[0], dim=-1)
        return probs.cpu().numpy().astype(np.float64)

    def predict_label(self, text: str) -> str:
        return self.labels[int(np.argmax(self.predict_proba(text)))]

    def attribute_pieces(self, words: list[str], target_label: str
                         ) -> tuple[np.ndarray, list[int]]:
        """l1 norm of d(target logit)/d(piece embedding) per subword piece."""
        if target_label not in self.labels:
            raise KeyError(target_label)
        ids, owner = self._ids(words)
        emb = self.model.embedding(ids).detach().requires_grad_(True)
        logits = self.model.logits_from_embeddings(emb, ids.eq(0))
        target = logits[0, self.labels.index(target_label)]
        (grad,) = torch.autograd.grad(target, emb)
        scores = grad[0].abs().sum(dim=-1).cpu().numpy().astype(np.float64)
        return scores, owner

    def attribute_words(self, words: list[str], target_label: str,
                        mode: str = "sum") -> np.ndarray:
        piece_scores, owner = self.attribute_pieces(words, target_label)
        out = np.zeros(len(words), dtype=np.float64)
        for score, w in zip(piece_scores, owner):
            if mode == "sum":
                out[w] += score
            else:
                out[w] = max(out[w], score)
        return out


def train_predictor(data: list[dict], out_dir: str,
                    cfg: TrainerConfig = TrainerConfig()) -> PredictorRuntime:
    torch.manual_seed(cfg.seed)
    labels = sorted({row["label"] for row in data})
    vocab = SubwordVocab.build([row["text"] for row in data])
    model = TextClassifier(len(vocab), len(labels), cfg.dim, cfg.heads, cfg.layers)

    encoded = [(vocab.encode_text(row["text"])[:512], labels.index(row["label"]))
               for row in data if row["text"].strip()]
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    loss_fn = nn.CrossEntropyLoss()
    generator = torch.Generator().manual_seed(cfg.seed)
    model.train()
    for _ in range(cfg.epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), cfg.batch_size):
            batch = [encoded[i] for i in order[start : start + cfg.batch_size]]
            width = max(len(ids) for ids, _ in batch)
            ids = torch.zeros(len(batch), width, dtype=torch.long)
            for r, (row_ids, _) in enumerate(batch):
                ids[r, : len(row_ids)] = torch.tensor(row_ids)
            target = torch.tensor([y for _, y in batch])
            optimizer.zero_grad()
            loss_fn(model(ids), target).backward()
            optimizer.step()
    model.eval()

    os.makedirs(out_dir, exist_ok=True)
    vocab.save(os.path.join(out_dir, "vocab.json"))
    write_json(os.path.join(out_dir, "config.json"), {
        "kind": "classifier", "labels": labels, "dim": cfg.dim,
        "heads": cfg.heads, "layers": cfg.layers,
    })
    torch.save(model.state_dict(), os.path.join(out_dir, "model.pt"))
    return PredictorRuntime(model, vocab, labels)


def load_predictor(ckpt_dir: str, max_seq_len: int = 512,
                   device: str = "cpu") -> PredictorRuntime:
    meta = read_json(os.path.join(ckpt_dir, "config.json"))
    if meta.get("kind") != "classifier":
        raise ValueError(f"{ckpt_dir} is not a classifier checkpoint")
    vocab = SubwordVocab.load(os.path.join(ckpt_dir, "vocab.json"))
    model = TextClassifier(len(vocab), len(meta["labels"]), meta["dim"],
                           meta["heads"], meta["layers"])
    model.load_state_dict(torch.load(os.path.join(ckpt_dir, "model.pt"),
                                     weights_only=True))
    return PredictorRuntime(model, vocab, meta["labels"], max_seq_len, device)
