"""Infill generation: editor contract, n-gram reference infiller, and repair.

The reference infiller is a label-conditioned interpolated trigram model. It
realizes targeted infilling purely through label conditioning, which is the
desk-scale stand-in for a fine-tuned neural span infiller; any backend that
honors the Editor protocol (notably the remote client) can replace it.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter, defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from contredit.core import (
    InfillSet,
    LabeledExample,
    MaskedText,
    MaskSpan,
    SearchConfig,
    SENTINEL_RE,
    render_masked,
    splice,
    tokenize,
)

_BOS = "\x00bos"
_POOLED = "\x00pooled"


@runtime_checkable
class Editor(Protocol):
    def infill(self, masked: MaskedText, target_label: str | None, num_samples: int,
               top_k: int, top_p: float, rng: np.random.Generator) -> list[InfillSet]: ...


def truncate_distribution(dist: np.ndarray, top_k: int, top_p: float) -> np.ndarray:
    """Keep the top_k entries, then the smallest high-probability prefix whose
    original mass reaches top_p; renormalize. At least one entry survives."""
    if top_k < 1:
        raise ValueError("top_k must be >= 1")
    if not (0.0 < top_p <= 1.0):
        raise ValueError("top_p must be in (0, 1]")
    dist = np.asarray(dist, dtype=np.float64)
    order = np.argsort(-dist, kind="stable")[:top_k]
    cum = np.cumsum(dist[order])
    cut = int(np.searchsorted(cum, top_p, side="left"))
    if cut < len(order):
        order = order[: cut + 1]
    out = np.zeros_like(dist)
    out[order] = dist[order]
    total = out.sum()
    if total <= 0:
        raise ValueError("cannot truncate a zero-mass distribution")
    return out / total


@dataclass(frozen=True)
class InfillerConfig:
    add_k: float = 0.1
    lambda3: float = 0.85
    lambda2: float = 0.10
    lambda1: float = 0.05
    length_jitter: int = 2

    def __post_init__(self) -> None:
        lam = (self.lambda3, self.lambda2, self.lambda1)
        if any(v < 0 for v in lam) or abs(sum(lam) - 1.0) > 1e-9:
            raise ValueError("interpolation weights must be non-negative and sum to 1")
        if self.add_k <= 0 or self.length_jitter < 0:
            raise ValueError("add_k must be positive and length_jitter non-negative")


class _Table:
    """Dense unigram plus sparse bigram/trigram rows for one conditioning key."""

    def __init__(self, uni: Counter, bi: dict, tri: dict, vocab_index: dict[str, int],
                 add_k: float):
        v = len(vocab_index)
        self.uni = {tok: int(c) for tok, c in uni.items()}
        self.bi = {ctx: dict(row) for ctx, row in bi.items()}
        self.tri = {ctx: dict(row) for ctx, row in tri.items()}
        counts = np.zeros(v)
        for tok, c in uni.items():
            counts[vocab_index[tok]] = c
        self.p1 = (counts + add_k) / (counts.sum() + add_k * v)
        self._sparse_bi = self._sparsify(self.bi, vocab_index)
        self._sparse_tri = self._sparsify(self.tri, vocab_index)
        self._add_k = add_k
        self._v = v

    @staticmethod
    def _sparsify(rows: dict, vocab_index: dict[str, int]) -> dict:
        out = {}
        for ctx, row in rows.items():
            ids = np.array([vocab_index[t] for t in row], dtype=np.intp)
            counts = np.array(list(row.values()), dtype=np.float64)
            out[ctx] = (ids, counts, counts.sum())
        return out

    def _mix_in(self, p: np.ndarray, sparse: dict, ctx, weight: float) -> None:
        entry = sparse.get(ctx)
        if entry is None:
            p += weight / self._v
            return
        ids, counts, total = entry
        den = total + self._add_k * self._v
        p += weight * self._add_k / den
        p[ids] += weight * counts / den

    def conditional(self, w1: str, w2: str, cfg: InfillerConfig) -> np.ndarray:
        p = cfg.lambda1 * self.p1
        self._mix_in(p, self._sparse_bi, w2, cfg.lambda2)
        self._mix_in(p, self._sparse_tri, (w1, w2), cfg.lambda3)
        return p


class ReferenceInfiller:
    """Interpolated trigram span infiller with optional per-label conditioning."""

    VERSION = 1

    def __init__(self, vocab: Sequence[str], tables: dict[str, _Table],
                 cfg: InfillerConfig, labeled: bool):
        self.vocab = list(vocab)
        self._index = {tok: i for i, tok in enumerate(self.vocab)}
        self._tables = tables
        self.cfg = cfg
        self.labeled = labeled

    @property
    def labels(self) -> list[str]:
        return sorted(k for k in self._tables if k != _POOLED)

    def _table_for(self, target_label: str | None) -> _Table:
        if self.labeled and target_label is not None:
            table = self._tables.get(target_label)
            if table is None:
                raise KeyError(f"infiller has no table for label {target_label!r}")
            return table
        return self._tables[_POOLED]

    def unigram_prob(self, token: str, label: str | None = None) -> float:
        table = self._table_for(label)
        idx = self._index.get(token)
        return float(table.p1[idx]) if idx is not None else 0.0

    def _left_context(self, masked: MaskedText, span: MaskSpan) -> tuple[str, str]:
        spans = masked.spans
        ctx: list[str] = []
        i = span.start - 1
        while i >= 0 and len(ctx) < 2:
            if any(s.start <= i <= s.end for s in spans):
                break  # never condition on masked-out content
            ctx.append(masked.base[i])
            i -= 1
        while len(ctx) < 2:
            ctx.append(_BOS)
        return ctx[1], ctx[0]

    def _sample_span(self, table: _Table, w1: str, w2: str, length: int, top_k: int,
                     top_p: float, rng: np.random.Generator) -> list[str]:
        out: list[str] = []
        for _ in range(length):
            dist = truncate_distribution(table.conditional(w1, w2, self.cfg), top_k, top_p)
            choice = int(rng.choice(len(dist), p=dist))
            tok = self.vocab[choice]
            out.append(tok)
            w1, w2 = w2, tok
        return out

    def infill(self, masked: MaskedText, target_label: str | None, num_samples: int,
               top_k: int, top_p: float, rng: np.random.Generator) -> list[InfillSet]:
        if not masked.spans:
            raise ValueError("nothing to infill: masked text has no spans")
        table = self._table_for(target_label)
        jitter = self.cfg.length_jitter
        candidates: list[InfillSet] = []
        for _ in range(num_samples):
            infills: InfillSet = {}
            for span in masked.spans:
                lo = max(1, len(span) - jitter)
                hi = len(span) + jitter
                length = int(rng.integers(lo, hi + 1))
                w1, w2 = self._left_context(masked, span)
                infills[span.sentinel_ordinal] = tuple(
                    self._sample_span(table, w1, w2, length, top_k, top_p, rng))
            candidates.append(infills)
        return candidates

    def save(self, path: str) -> None:
        tables = {}
        for key, table in self._tables.items():
            tables[key] = {
                "uni": table.uni,
                "bi": [[ctx, row] for ctx, row in sorted(table.bi.items())],
                "tri": [[list(ctx), row] for ctx, row in sorted(table.tri.items())],
            }
        blob = {
            "version": self.VERSION,
            "kind": "reference-infiller",
            "labeled": self.labeled,
            "config": self.cfg.__dict__,
            "vocab": self.vocab,
            "tables": tables,
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(blob, fh)

    @classmethod
    def load(cls, path: str) -> "ReferenceInfiller":
        with open(path, encoding="utf-8") as fh:
            blob = json.load(fh)
        if blob.get("kind") != "reference-infiller":
            raise ValueError(f"{path} is not an infiller checkpoint")
        cfg = InfillerConfig(**blob["config"])
        index = {tok: i for i, tok in enumerate(blob["vocab"])}
        tables = {}
        for key, raw in blob["tables"].items():
            uni = Counter(raw["uni"])
            bi = {ctx: row for ctx, row in raw["bi"]}
            tri = {tuple(ctx): row for ctx, row in raw["tri"]}
            tables[key] = _Table(uni, bi, tri, index, cfg.add_k)
        return cls(blob["vocab"], tables, cfg, blob["labeled"])


def train_reference_infiller(data: Sequence[LabeledExample], use_labels: bool = True,
                             cfg: InfillerConfig = InfillerConfig()) -> ReferenceInfiller:
    """Count n-grams per gold label (targeted) or pooled (the no-label ablation)."""
    if not data:
        raise ValueError("cannot train an infiller on an empty corpus")
    keys = lambda ex: (_POOLED, ex.gold_label) if use_labels else (_POOLED,)
    uni: dict[str, Counter] = defaultdict(Counter)
    bi: dict[str, dict] = defaultdict(lambda: defaultdict(Counter))
    tri: dict[str, dict] = defaultdict(lambda: defaultdict(Counter))
    vocab: set[str] = set()
    for ex in data:
        tokens = tokenize(ex.text)
        if not tokens:
            continue
        vocab.update(tokens)
        padded = (_BOS, _BOS) + tokens
        for key in keys(ex):
            for i, tok in enumerate(tokens):
                uni[key][tok] += 1
                bi[key][padded[i + 1]][tok] += 1
                tri[key][(padded[i], padded[i + 1])][tok] += 1
    if not vocab:
        raise ValueError("corpus contains no tokens")
    ordered = sorted(vocab)
    index = {tok: i for i, tok in enumerate(ordered)}
    tables = {key: _Table(uni[key], bi[key], tri[key], index, cfg.add_k) for key in uni}
    return ReferenceInfiller(ordered, tables, cfg, use_labels)


def parse_raw_generation(raw: str, masked: MaskedText) -> InfillSet:
    """Recover infills from sentinel-formatted generated text.

    Sentinels must appear in ordinal order starting at 0; parsing stops at the
    first out-of-order marker, so the result may cover only a prefix of the
    mask's ordinals (possibly none). Degenerate input is data, not an error.
    """
    tokens = raw.split()
    markers = [(i, int(m.group(1))) for i, tok in enumerate(tokens)
               if (m := SENTINEL_RE.match(tok))]
    n_spans = len(masked.spans)
    out: InfillSet = {}
    expected = 0
    for pos, (i, ordinal) in enumerate(markers):
        if ordinal != expected or expected >= n_spans:
            break
        end = markers[pos + 1][0] if pos + 1 < len(markers) else len(tokens)
        out[ordinal] = tuple(tokens[i + 1 : end])
        expected += 1
    return out


def is_complete(infills: InfillSet, masked: MaskedText) -> bool:
    return all(s.sentinel_ordinal in infills for s in masked.spans)


def fill_with_original(partial: InfillSet, masked: MaskedText) -> InfillSet:
    """Complete a partial infill set by restoring the original span text."""
    out = dict(partial)
    for span in masked.spans:
        out.setdefault(span.sentinel_ordinal, masked.span_tokens(span.sentinel_ordinal))
    return out


def _remask_unresolved(partial: InfillSet, masked: MaskedText
                       ) -> tuple[MaskedText, dict[int, int]]:
    """Splice resolved infills, re-mask unresolved spans over the new base."""
    out: list[str] = []
    new_spans: list[MaskSpan] = []
    ordinal_map: dict[int, int] = {}
    cursor = 0
    for span in masked.spans:
        out.extend(masked.base[cursor : span.start])
        if span.sentinel_ordinal in partial:
            out.extend(partial[span.sentinel_ordinal])
        else:
            start = len(out)
            out.extend(masked.span_tokens(span.sentinel_ordinal))
            new_ordinal = len(new_spans)
            new_spans.append(MaskSpan(start, len(out) - 1, new_ordinal))
            ordinal_map[span.sentinel_ordinal] = new_ordinal
        cursor = span.end + 1
    out.extend(masked.base[cursor:])
    return MaskedText(tuple(out), tuple(new_spans)), ordinal_map


def repair_degenerate(partials: Sequence[InfillSet], masked: MaskedText, editor: Editor,
                      target_label: str | None, cfg: SearchConfig, rng: np.random.Generator,
                      predictor=None, contrast_label: str | None = None,
                      num_return: int | None = None) -> list[InfillSet]:
    """Recover usable candidates from degenerate generations.

    Each partial is completed with the original span text; those intermediates
    are scored on the contrast-label probability, the top requery_width ones
    are re-queried for fresh infills of their unresolved spans, and a
    prediction-flipping intermediate short-circuits the whole procedure.
    """
    if num_return is None:
        num_return = cfg.samples_per_level
    if not partials or num_return < 1:
        return []
    intermediates: list[tuple[float, int, InfillSet]] = []
    for idx, partial in enumerate(partials):
        completed = fill_with_original(partial, masked)
        score = 0.0
        if predictor is not None and contrast_label is not None:
            probs = predictor.predict_proba(splice(masked, completed))
            y = predictor.label_space.index(contrast_label)
            if int(np.argmax(probs)) == y:
                return [completed]
            score = float(probs[y])
        intermediates.append((score, idx, partial))

    intermediates.sort(key=lambda t: (-t[0], t[1]))
    selected = intermediates[: min(cfg.requery_width, len(intermediates))]
    base, rem = divmod(num_return, len(selected))
    results: list[InfillSet] = []
    for rank, (_, _, partial) in enumerate(selected):
        quota = base + (1 if rank < rem else 0)
        if quota == 0:
            continue
        if is_complete(partial, masked):
            results.extend([dict(partial)] * quota)
            continue
        remasked, ordinal_map = _remask_unresolved(partial, masked)
        samples = editor.infill(remasked, target_label, quota, cfg.top_k, cfg.top_p, rng)
        for sample in samples:
            merged = dict(partial)
            for orig_ordinal, new_ordinal in ordinal_map.items():
                merged[orig_ordinal] = sample.get(
                    new_ordinal, masked.span_tokens(orig_ordinal))
            results.append(fill_with_original(merged, masked))
    return results[:num_return]


def request_seed(masked_text: str, target_label: str | None, num_samples: int,
                 top_k: int, top_p: float, base_seed: int) -> int:
    """Deterministic per-request seed shared by stateless editor backends."""
    payload = json.dumps(
        [masked_text, target_label, num_samples, top_k, repr(float(top_p)), base_seed],
        sort_keys=True)
    return int.from_bytes(hashlib.sha256(payload.encode()).digest()[:8], "big")


class RequestSeededEditor:
    """Editor wrapper whose sampling depends only on the request content.

    This is exactly the convention a stateless inference server follows (the
    wire protocol carries no client rng), so an engine run against this
    wrapper matches an engine run against a conformant server hosting the same
    artifacts, draw for draw.
    """

    def __init__(self, inner: Editor, base_seed: int = 0):
        self.inner = inner
        self.base_seed = base_seed

    def infill(self, masked: MaskedText, target_label: str | None, num_samples: int,
               top_k: int, top_p: float, rng: np.random.Generator | None = None
               ) -> list[InfillSet]:
        seed = request_seed(render_masked(masked), target_label, num_samples,
                            top_k, top_p, self.base_seed)
        return self.inner.infill(masked, target_label, num_samples, top_k, top_p,
                                 np.random.default_rng(seed))
