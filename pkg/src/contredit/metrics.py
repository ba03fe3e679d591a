"""Evaluation measures: flip rate, minimality, fluency, and edit overlap."""

from __future__ import annotations

import json
import math
import statistics
from collections import Counter, defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Protocol, runtime_checkable

from contredit import kernels
from contredit.core import LabeledExample, TokenSeq

_BOS = "\x00bos"
_EOS = "\x00eos"


def _intern_pair(a: TokenSeq, b: TokenSeq) -> tuple[list[int], list[int]]:
    ids: dict[str, int] = {}
    out = []
    for seq in (a, b):
        row = []
        for tok in seq:
            if tok not in ids:
                ids[tok] = len(ids)
            row.append(ids[tok])
        out.append(row)
    return out[0], out[1]


def levenshtein(a: TokenSeq, b: TokenSeq) -> int:
    """Word-level Levenshtein distance (unit deletions, insertions, substitutions)."""
    ia, ib = _intern_pair(a, b)
    return kernels.distance_ids(ia, ib)


def align_ops(a: TokenSeq, b: TokenSeq) -> str:
    """Canonical minimal alignment of a -> b ('=', 's', 'd', 'i' per step).

    Deterministic: the backtrace prefers match, then substitution, then
    deletion, then insertion, so repeated runs agree everywhere.
    """
    ia, ib = _intern_pair(a, b)
    return kernels.align_ops_ids(ia, ib)


def changed_original_indices(original: TokenSeq, edited: TokenSeq) -> set[int]:
    """Original token indices deleted or substituted by the canonical alignment."""
    changed: set[int] = set()
    i = 0
    for op in align_ops(original, edited):
        if op in ("s", "d"):
            changed.add(i)
        if op in ("=", "s", "d"):
            i += 1
    return changed


def minimality(original: TokenSeq, edited: TokenSeq) -> float:
    """Levenshtein distance normalized by the original length; may exceed 1."""
    if not original:
        raise ValueError("minimality is undefined for an empty original")
    return levenshtein(original, edited) / len(original)


@runtime_checkable
class FluencyScorer(Protocol):
    def pseudo_loss(self, tokens: TokenSeq) -> float: ...


class ReferenceNgramScorer:
    """Masked-loss stand-in: interpolates forward and backward trigram models.

    Per position i the loss is -ln(0.5 * p_fwd(x_i | x_{i-2}, x_{i-1})
    + 0.5 * p_bwd(x_i | x_{i+1}, x_{i+2})), averaged over positions. Add-k
    smoothing keeps every probability positive, so ratios are always defined.
    """

    VERSION = 1

    def __init__(self, forward: dict, backward: dict, vocab_size: int, add_k: float = 0.1):
        self._fwd = forward
        self._bwd = backward
        self._vocab_size = vocab_size
        self._add_k = add_k

    @classmethod
    def train(cls, data: Iterable[LabeledExample] | Iterable[TokenSeq],
              add_k: float = 0.1) -> "ReferenceNgramScorer":
        from contredit.core import tokenize

        fwd: dict[tuple[str, str], Counter] = defaultdict(Counter)
        bwd: dict[tuple[str, str], Counter] = defaultdict(Counter)
        vocab: set[str] = set()
        n_seqs = 0
        for item in data:
            tokens = tokenize(item.text) if isinstance(item, LabeledExample) else tuple(item)
            if not tokens:
                continue
            n_seqs += 1
            vocab.update(tokens)
            fpad = (_BOS, _BOS) + tokens
            for i in range(len(tokens)):
                fwd[(fpad[i], fpad[i + 1])][tokens[i]] += 1
            bpad = tokens + (_EOS, _EOS)
            for i in range(len(tokens)):
                bwd[(bpad[i + 1], bpad[i + 2])][tokens[i]] += 1
        if n_seqs == 0:
            raise ValueError("cannot train a fluency scorer on an empty corpus")
        return cls({k: dict(v) for k, v in fwd.items()},
                   {k: dict(v) for k, v in bwd.items()}, len(vocab), add_k)

    def _cond(self, table: dict, ctx: tuple[str, str], token: str) -> float:
        row = table.get(ctx)
        count = row.get(token, 0) if row else 0
        total = sum(row.values()) if row else 0
        # +1 slot reserves smoothed mass for unseen tokens.
        return (count + self._add_k) / (total + self._add_k * (self._vocab_size + 1))

    def pseudo_loss(self, tokens: TokenSeq) -> float:
        if not tokens:
            raise ValueError("pseudo_loss is undefined for empty input")
        fpad = (_BOS, _BOS) + tuple(tokens)
        bpad = tuple(tokens) + (_EOS, _EOS)
        total = 0.0
        for i, tok in enumerate(tokens):
            p_f = self._cond(self._fwd, (fpad[i], fpad[i + 1]), tok)
            p_b = self._cond(self._bwd, (bpad[i + 1], bpad[i + 2]), tok)
            total += -math.log(0.5 * p_f + 0.5 * p_b)
        return total / len(tokens)

    def save(self, path: str) -> None:
        blob = {
            "version": self.VERSION,
            "kind": "ngram-fluency-scorer",
            "add_k": self._add_k,
            "vocab_size": self._vocab_size,
            "forward": [[list(ctx), row] for ctx, row in sorted(self._fwd.items())],
            "backward": [[list(ctx), row] for ctx, row in sorted(self._bwd.items())],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path: str) -> "ReferenceNgramScorer":
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        if blob.get("kind") != "ngram-fluency-scorer":
            raise ValueError(f"{path} is not a fluency scorer checkpoint")
        fwd = {tuple(ctx): row for ctx, row in blob["forward"]}
        bwd = {tuple(ctx): row for ctx, row in blob["backward"]}
        return cls(fwd, bwd, blob["vocab_size"], blob["add_k"])


def pseudo_loss(scorer: FluencyScorer, tokens: TokenSeq) -> float:
    return scorer.pseudo_loss(tokens)


def fluency_ratio(scorer: FluencyScorer, original: TokenSeq, edited: TokenSeq) -> float:
    """Edited-over-original mean masked loss; 1.0 means a distributionally neutral edit."""
    if not original or not edited:
        raise ValueError("fluency ratio needs nonempty original and edited inputs")
    return scorer.pseudo_loss(edited) / scorer.pseudo_loss(original)


def flip_rate(outcomes: Sequence) -> float:
    """Fraction of outcomes whose search found a flipping best edit."""
    if not outcomes:
        raise ValueError("flip rate is undefined for an empty outcome list")
    return sum(1 for o in outcomes if o.best is not None) / len(outcomes)


def edit_overlap(edit_a: TokenSeq, edit_b: TokenSeq, original: TokenSeq) -> float:
    """Overlap of the original tokens changed by two edits, normalized by the first."""
    if not (edit_a and edit_b and original):
        raise ValueError("edit_overlap needs nonempty inputs")
    changed_a = changed_original_indices(original, edit_a)
    if not changed_a:
        raise ValueError("edit_overlap is undefined when the first edit changes nothing")
    changed_b = changed_original_indices(original, edit_b)
    return len(changed_a & changed_b) / len(changed_a)


@dataclass
class MetricsRow:
    id: str
    flipped: bool
    contrast_label: str
    minimality: float | None = None
    fluency: float | None = None
    contrast_prob: float | None = None


@dataclass
class MetricsReport:
    """Per-instance rows plus the summary statistics reported for a run."""

    rows: list[MetricsRow] = field(default_factory=list)

    @property
    def flip_rate(self) -> float:
        if not self.rows:
            raise ValueError("empty report")
        return sum(1 for r in self.rows if r.flipped) / len(self.rows)

    def _values(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.rows if r.flipped and getattr(r, name) is not None]

    def summary(self) -> dict:
        out: dict = {"n_instances": len(self.rows), "flip_rate": self.flip_rate}
        for name in ("minimality", "fluency"):
            vals = self._values(name)
            out[f"mean_{name}"] = statistics.fmean(vals) if vals else None
            out[f"median_{name}"] = statistics.median(vals) if vals else None
        return out

    def write(self, rows_path: str, summary_path: str) -> None:
        with open(rows_path, "w", encoding="utf-8") as fh:
            for row in self.rows:
                fh.write(json.dumps(row.__dict__, sort_keys=True) + "\n")
        with open(summary_path, "w", encoding="utf-8") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")
