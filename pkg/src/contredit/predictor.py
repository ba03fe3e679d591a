"""The fixed model being explained: prediction + gradient-attribution contract.

The reference classifier is a small train-at-home model chosen so that token
attributions have a closed form: per-token tanh features, mean pooling, and a
linear head. Real neural predictors plug in through the remote client and obey
the same Predictor protocol.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from contredit.core import DegenerateDataError, LabeledExample, LabelSpace, TokenSeq, tokenize

UNK_ROW = 0


@runtime_checkable
class Predictor(Protocol):
    """Behavioral contract: a probability vector and per-token attribution scores."""

    @property
    def label_space(self) -> LabelSpace: ...

    def predict_proba(self, tokens: TokenSeq) -> np.ndarray: ...

    def attribute(self, tokens: TokenSeq, target_label: str) -> np.ndarray: ...


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 12
    dim: int = 32
    hidden: int = 32
    rng_seed: int = 0
    l2_penalty: float = 1e-4

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


def _signed_square(pre: np.ndarray) -> np.ndarray:
    return pre * np.abs(pre)


class ReferenceClassifier:
    """Per-token signed-square bag model: h_i = p_i * |p_i| with p_i = U e_i,
    z = W mean(h) + c.

    The nonlinearity before pooling is chosen so the logit gradient grows
    with a token's activation (d h/d p = 2|p|): informative tokens get the
    largest gradient norms, which is what gradient-ranked masking relies on.
    A plain bag of embeddings gives every position the same gradient, and a
    squashing activation inverts the ranking by gating down saturated (i.e.
    informative) tokens.
    """

    VERSION = 1

    def __init__(self, vocab: dict[str, int], embeddings: np.ndarray, hidden: np.ndarray,
                 output: np.ndarray, bias: np.ndarray, labels: LabelSpace):
        self.vocab = vocab
        self.E = np.asarray(embeddings, dtype=np.float64)
        self.U = np.asarray(hidden, dtype=np.float64)
        self.W = np.asarray(output, dtype=np.float64)
        self.c = np.asarray(bias, dtype=np.float64)
        self._labels = labels
        if self.W.shape[0] != len(labels):
            raise ValueError("output rows must match the label count")

    @property
    def label_space(self) -> LabelSpace:
        return self._labels

    def _row_ids(self, tokens: TokenSeq) -> np.ndarray:
        return np.array([self.vocab.get(t, UNK_ROW) for t in tokens], dtype=np.intp)

    def _forward(self, tokens: TokenSeq) -> tuple[np.ndarray, np.ndarray]:
        emb = self.E[self._row_ids(tokens)]
        pre = emb @ self.U.T
        z = self.W @ _signed_square(pre).mean(axis=0) + self.c
        return z, pre

    def predict_proba(self, tokens: TokenSeq) -> np.ndarray:
        if not tokens:
            raise ValueError("cannot predict on empty input")
        z, _ = self._forward(tokens)
        z = z - z.max()
        p = np.exp(z)
        return p / p.sum()

    def predict_proba_many(self, token_seqs: Sequence[TokenSeq]) -> list[np.ndarray]:
        return [self.predict_proba(t) for t in token_seqs]

    def predict_label(self, tokens: TokenSeq) -> str:
        return self._labels.labels[int(np.argmax(self.predict_proba(tokens)))]

    def attribute(self, tokens: TokenSeq, target_label: str) -> np.ndarray:
        """l1 norm of d(logit of target)/d(embedding of token i), one score per token.

        Closed form: dz_y/de_i = (1/N) U^T ((2 |p_i|) * w_y).
        """
        if not tokens:
            raise ValueError("cannot attribute on empty input")
        y = self._labels.index(target_label)
        _, pre = self._forward(tokens)
        w_y = self.W[y]
        grads = (2.0 * np.abs(pre) * w_y) @ self.U / len(tokens)
        return np.abs(grads).sum(axis=1)

    def save(self, path: str) -> None:
        blob = {
            "version": self.VERSION,
            "kind": "reference-classifier",
            "labels": list(self._labels.labels),
            "vocab": self.vocab,
            "E": self.E.tolist(),
            "U": self.U.tolist(),
            "W": self.W.tolist(),
            "c": self.c.tolist(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path: str) -> "ReferenceClassifier":
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        if blob.get("kind") != "reference-classifier":
            raise ValueError(f"{path} is not a classifier checkpoint")
        return cls(blob["vocab"], np.array(blob["E"]), np.array(blob["U"]),
                   np.array(blob["W"]), np.array(blob["c"]),
                   LabelSpace(tuple(blob["labels"])))


def train_reference_classifier(data: Sequence[LabeledExample],
                               cfg: TrainConfig = TrainConfig()) -> ReferenceClassifier:
    """SGD on cross-entropy; deterministic for a fixed seed."""
    labels = sorted({ex.gold_label for ex in data})
    if len(labels) < 2:
        raise DegenerateDataError("training data must contain at least 2 labels")
    label_space = LabelSpace(tuple(labels))

    token_set: set[str] = set()
    examples: list[tuple[TokenSeq, int]] = []
    for ex in data:
        tokens = tokenize(ex.text)
        if tokens:
            token_set.update(tokens)
            examples.append((tokens, label_space.index(ex.gold_label)))
    vocab = {tok: i + 1 for i, tok in enumerate(sorted(token_set))}  # row 0 = unk

    rng = np.random.default_rng(cfg.rng_seed)
    d, h_dim, n_labels = cfg.dim, cfg.hidden, len(labels)
    # init keeps |U e| around 1 so the signed-square gradient 2|p| starts in
    # its healthy range; a small init stalls on long inputs, where mean
    # pooling divides per-token gradients by N and embeddings never escape
    # the |p| ~ 0 plateau
    E = rng.normal(0.0, 0.3, size=(len(vocab) + 1, d))
    U = rng.normal(0.0, 0.3, size=(h_dim, d))
    W = rng.normal(0.0, 0.1, size=(n_labels, h_dim))
    c = np.zeros(n_labels)

    ids_cache = [np.array([vocab[t] for t in toks], dtype=np.intp) for toks, _ in examples]
    lr, l2 = cfg.learning_rate, cfg.l2_penalty
    for _ in range(cfg.epochs):
        for idx in rng.permutation(len(examples)):
            ids = ids_cache[idx]
            y = examples[idx][1]
            emb = E[ids]
            pre = emb @ U.T
            g = _signed_square(pre).mean(axis=0)
            z = W @ g + c
            z -= z.max()
            p = np.exp(z)
            p /= p.sum()
            dz = p
            dz[y] -= 1.0
            dg = W.T @ dz
            dpre = 2.0 * np.abs(pre) * (dg / len(ids))
            W -= lr * (np.outer(dz, g) + l2 * W)
            c -= lr * dz
            dE_rows = dpre @ U
            U -= lr * (dpre.T @ emb + l2 * U)
            np.add.at(E, ids, -lr * (dE_rows + l2 * emb))

    return ReferenceClassifier(vocab, E, U, W, c, label_space)
