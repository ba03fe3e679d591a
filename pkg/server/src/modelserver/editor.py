"""Span-infilling editor: Stage-1 fine-tuning and top-k/top-p generation.

Training pairs mask the most attribution-salient (or random) fraction of each
example's words at a per-example rate drawn from [mask_lo, mask_hi], render
the masked text with sentinel literals behind a label prefix, and teach the
model to emit the sentinel-interleaved original spans.
"""

from __future__ import annotations

import os
import random

import numpy as np
import torch
from torch import nn

from modelserver.config import Stage1Config, TrainerConfig, read_json, write_json
from modelserver.models import SpanInfiller
from modelserver.predictor import PredictorRuntime
from modelserver.subword import EOS, N_SENTINELS, SENTINELS, SubwordVocab

LABEL_PREFIX = "label: {}. input: {}"


def mask_words(words: list[str], indices: set[int], merge_gap: int = 2,
               max_sentinels: int = N_SENTINELS) -> tuple[str, str]:
    """Sentinel-rendered masked text plus the reconstruction target."""
    consecutive: list[list[int]] = []
    for i in sorted(indices):
        if consecutive and i == consecutive[-1][1] + 1:
            consecutive[-1][1] = i
        else:
            consecutive.append([i, i])
    runs: list[list[int]] = []
    for start, end in consecutive:
        if runs and start - runs[-1][1] - 1 <= merge_gap:
            runs[-1][1] = end
        else:
            runs.append([start, end])
    while len(runs) > max_sentinels:
        gaps = [runs[j + 1][0] - runs[j][1] - 1 for j in range(len(runs) - 1)]
        j = gaps.index(min(gaps))
        runs[j][1] = runs[j + 1][1]
        del runs[j + 1]
    masked: list[str] = []
    target: list[str] = []
    cursor = 0
    for k, (start, end) in enumerate(runs):
        masked.extend(words[cursor:start])
        masked.append(SENTINELS[k])
        target.append(SENTINELS[k])
        target.extend(words[start : end + 1])
        cursor = end + 1
    masked.extend(words[cursor:])
    return " ".join(masked), " ".join(target)


def build_stage1_pair(words: list[str], label: str, fraction: float,
                      scores: np.ndarray | None, rng: random.Random,
                      merge_gap: int = 2) -> tuple[str, str]:
    k = max(1, int(np.ceil(fraction * len(words))))
    if scores is None:
        indices = set(rng.sample(range(len(words)), k))
    else:
        order = np.argsort(-np.asarray(scores), kind="stable")
        indices = set(int(i) for i in order[:k])
    masked, target = mask_words(words, indices, merge_gap)
    return LABEL_PREFIX.format(label, masked), target


def build_stage1_pairs(data: list[dict], cfg: Stage1Config,
                       predictor: PredictorRuntime | None) -> list[tuple[str, str]]:
    if cfg.masking == "gradient" and predictor is None:
        raise ValueError("gradient masking needs a predictor checkpoint")
    rng = random.Random(cfg.seed)
    pairs: list[tuple[str, str]] = []
    for row in data:
        words = row["text"].split()
        if not words:
            continue
        if cfg.label_mode == "gold":
            label = row["label"]
        else:
            label = predictor.predict_label(row["text"]) if predictor else row["label"]
        fraction = rng.uniform(cfg.mask_lo, cfg.mask_hi)  # n1 resampled per example
        scores = None
        if cfg.masking == "gradient":
            scores = predictor.attribute_words(words, label)
        pairs.append(build_stage1_pair(words, label, fraction, scores, rng,
                                       cfg.merge_gap))
    return pairs


class EditorRuntime:
    def __init__(self, model: SpanInfiller, vocab: SubwordVocab,
                 max_seq_len: int = 512, device: str = "cpu"):
        self.model = model.to(device).eval()
        self.vocab = vocab
        self.max_seq_len = max_seq_len
        self.device = device
        self.eos_id = vocab.piece_id(EOS)

    @torch.no_grad()
    def generate(self, masked_text: str, target_label: str | None, num_return: int,
                 top_k: int, top_p: float, seed: int,
                 max_new_tokens: int = 96) -> list[str]:
        prompt = (LABEL_PREFIX.format(target_label, masked_text)
                  if target_label is not None else masked_text)
        src_ids = self.vocab.encode_text(prompt)[: self.max_seq_len]
        src = torch.tensor([src_ids], dtype=torch.long, device=self.device)
        memory = self.model.encode(src)
        generator = torch.Generator(device="cpu").manual_seed(seed)
        out: list[str] = []
        for _ in range(num_return):
            tgt = [self.eos_id]  # decoder start token
            for _ in range(max_new_tokens):
                tgt_tensor = torch.tensor([tgt], dtype=torch.long, device=self.device)
                logits = self.model.decode_step(memory, src, tgt_tensor)[0]
                logits[0] = -1e9  # never sample padding
                probs = torch.softmax(logits, dim=-1)
                probs = self._truncate(probs, top_k, top_p)
                choice = int(torch.multinomial(probs, 1, generator=generator))
                if choice == self.eos_id:
                    break
                tgt.append(choice)
            out.append(self.vocab.decode(tgt[1:]))
        return out

    @staticmethod
    def _truncate(probs: torch.Tensor, top_k: int, top_p: float) -> torch.Tensor:
        values, order = torch.sort(probs, descending=True)
        values = values[:top_k]
        order = order[:top_k]
        cum = torch.cumsum(values, dim=0)
        cut = int(torch.searchsorted(cum, torch.tensor(top_p)))
        keep = min(cut + 1, len(values))
        out = torch.zeros_like(probs)
        out[order[:keep]] = values[:keep]
        return out / out.sum()


def finetune_editor(data: list[dict], out_dir: str, stage1: Stage1Config,
                    predictor: PredictorRuntime | None,
                    trainer: TrainerConfig = TrainerConfig()) -> EditorRuntime:
    torch.manual_seed(trainer.seed)
    pairs = build_stage1_pairs(data, stage1, predictor)
    if not pairs:
        raise ValueError("no usable training pairs")
    vocab = SubwordVocab.build([src + " " + tgt for src, tgt in pairs])
    model = SpanInfiller(len(vocab), trainer.dim, trainer.heads, trainer.layers)
    eos = vocab.piece_id(EOS)

    encoded = []
    for src_text, tgt_text in pairs:
        src = vocab.encode_text(src_text)[:512]
        tgt = vocab.encode_text(tgt_text)[:256]
        encoded.append((src, [eos] + tgt, tgt + [eos]))

    optimizer = torch.optim.Adam(model.parameters(), lr=trainer.learning_rate)
    loss_fn = nn.CrossEntropyLoss(ignore_index=0)
    generator = torch.Generator().manual_seed(trainer.seed)
    model.train()
    for _ in range(stage1.epochs):
        order = torch.randperm(len(encoded), generator=generator).tolist()
        for start in range(0, len(order), stage1.batch_size):
            batch = [encoded[i] for i in order[start : start + stage1.batch_size]]
            sw = max(len(b[0]) for b in batch)
            tw = max(len(b[1]) for b in batch)
            src = torch.zeros(len(batch), sw, dtype=torch.long)
            tgt_in = torch.zeros(len(batch), tw, dtype=torch.long)
            tgt_out = torch.zeros(len(batch), tw, dtype=torch.long)
            for r, (s, ti, to) in enumerate(batch):
                src[r, : len(s)] = torch.tensor(s)
                tgt_in[r, : len(ti)] = torch.tensor(ti)
                tgt_out[r, : len(to)] = torch.tensor(to)
            optimizer.zero_grad()
            logits = model(src, tgt_in)
            loss_fn(logits.reshape(-1, logits.size(-1)), tgt_out.reshape(-1)).backward()
            optimizer.step()
    model.eval()

    os.makedirs(out_dir, exist_ok=True)
    vocab.save(os.path.join(out_dir, "vocab.json"))
    write_json(os.path.join(out_dir, "config.json"), {
        "kind": "infiller", "dim": trainer.dim, "heads": trainer.heads,
        "layers": trainer.layers, "masking": stage1.masking,
        "label_mode": stage1.label_mode,
    })
    torch.save(model.state_dict(), os.path.join(out_dir, "model.pt"))
    return EditorRuntime(model, vocab)


def load_editor(ckpt_dir: str, max_seq_len: int = 512,
                device: str = "cpu") -> EditorRuntime:
    meta = read_json(os.path.join(ckpt_dir, "config.json"))
    if meta.get("kind") != "infiller":
        raise ValueError(f"{ckpt_dir} is not an infiller checkpoint")
    vocab = SubwordVocab.load(os.path.join(ckpt_dir, "vocab.json"))
    model = SpanInfiller(len(vocab), meta["dim"], meta["heads"], meta["layers"])
    model.load_state_dict(torch.load(os.path.join(ckpt_dir, "model.pt"),
                                     weights_only=True))
    return EditorRuntime(model, vocab, max_seq_len, device)
