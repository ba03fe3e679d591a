"""Shared domain types: word tokenization, masked text, sentinel rendering, splicing."""

from __future__ import annotations

import re
from dataclasses import dataclass

TokenSeq = tuple[str, ...]

SENTINEL_FORMAT = "<extra_id_{}>"
SENTINEL_RE = re.compile(r"^<extra_id_(\d+)>$")
LABEL_PREFIX_FORMAT = "label: {}. input: "


class EngineError(Exception):
    """Base class for engine errors."""


class IncompleteInfillError(EngineError):
    """An infill set does not cover every sentinel ordinal of its masked text."""


class DegenerateDataError(EngineError):
    """A dataset cannot support the requested operation (e.g. a single label)."""


class InvalidContrastError(EngineError):
    """The requested contrast label equals the original prediction."""


def tokenize(text: str) -> TokenSeq:
    """Split on unicode whitespace; punctuation stays attached to its word."""
    return tuple(text.split())


def detokenize(tokens: TokenSeq) -> str:
    return " ".join(tokens)


@dataclass(frozen=True)
class LabeledExample:
    id: str
    text: str
    gold_label: str


@dataclass(frozen=True)
class LabelSpace:
    """Ordered, distinct label names; order breaks ties everywhere."""

    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.labels) < 2:
            raise ValueError("label space needs at least 2 labels")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("label names must be distinct")

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label: {label!r}") from None

    def __len__(self) -> int:
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.labels


@dataclass(frozen=True)
class MaskSpan:
    """Inclusive token span [start, end] replaced by one sentinel."""

    start: int
    end: int
    sentinel_ordinal: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"span start {self.start} > end {self.end}")
        if self.sentinel_ordinal < 0:
            raise ValueError("sentinel ordinal must be non-negative")

    def __len__(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class MaskedText:
    """A token sequence with non-overlapping sentinel spans, ordinals left to right."""

    base: TokenSeq
    spans: tuple[MaskSpan, ...]

    def __post_init__(self) -> None:
        prev_end = -1
        for k, span in enumerate(self.spans):
            if span.sentinel_ordinal != k:
                raise ValueError("sentinel ordinals must increase from 0 left to right")
            if span.start <= prev_end:
                raise ValueError("spans must be sorted and non-overlapping")
            if span.start < 0 or span.end >= len(self.base):
                raise IndexError(f"span {span} out of bounds for {len(self.base)} tokens")
            prev_end = span.end

    def span_tokens(self, ordinal: int) -> TokenSeq:
        span = self.spans[ordinal]
        return self.base[span.start : span.end + 1]

    def original_infills(self) -> InfillSet:
        """The infill set that reconstructs the unmasked base."""
        return {s.sentinel_ordinal: self.span_tokens(s.sentinel_ordinal) for s in self.spans}


InfillSet = dict[int, TokenSeq]


@dataclass(frozen=True)
class SearchConfig:
    """Stage-2 hyperparameters; defaults follow the shipped configuration."""

    beam_width: int = 3
    search_levels: int = 4
    samples_per_level: int = 15
    requery_width: int = 3
    top_k: int = 30
    top_p: float = 0.95
    mask_frac_lo: float = 0.0
    mask_frac_hi: float = 0.55
    max_rounds: int = 3
    merge_gap: int = 2
    max_sentinels: int = 28
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.mask_frac_lo < self.mask_frac_hi <= 1.0):
            raise ValueError("need 0 <= mask_frac_lo < mask_frac_hi <= 1")
        for name in ("beam_width", "search_levels", "samples_per_level", "requery_width",
                     "top_k", "max_rounds"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.requery_width > self.samples_per_level:
            raise ValueError("requery_width must not exceed samples_per_level")
        if not (0.0 < self.top_p <= 1.0):
            raise ValueError("top_p must be in (0, 1]")
        if self.merge_gap < 0 or self.max_sentinels < 1:
            raise ValueError("merge_gap >= 0 and max_sentinels >= 1 required")


def _merge_spans(runs: list[list[int]], merge_gap: int, max_sentinels: int) -> list[list[int]]:
    # Merge runs whose gap (unmasked tokens between them) is <= merge_gap.
    merged: list[list[int]] = []
    for start, end in runs:
        if merged and start - merged[-1][1] - 1 <= merge_gap:
            merged[-1][1] = end
        else:
            merged.append([start, end])
    # Cap the sentinel count by absorbing the smallest gaps first.
    while len(merged) > max_sentinels:
        gaps = [merged[i + 1][0] - merged[i][1] - 1 for i in range(len(merged) - 1)]
        i = gaps.index(min(gaps))
        merged[i][1] = merged[i + 1][1]
        del merged[i + 1]
    return merged


def apply_mask(seq: TokenSeq, indices: set[int], merge_gap: int,
               max_sentinels: int = 10**9) -> MaskedText:
    """Turn a set of token indices into sentinel spans.

    Consecutive indices collapse into one span, spans separated by at most
    ``merge_gap`` unmasked tokens are merged (the gap is swallowed), and the
    span count is capped at ``max_sentinels`` by merging the smallest gaps
    first (leftmost on ties).
    """
    for i in indices:
        if not (0 <= i < len(seq)):
            raise IndexError(f"mask index {i} out of range for {len(seq)} tokens")
    ordered = sorted(indices)
    runs: list[list[int]] = []
    for i in ordered:
        if runs and i == runs[-1][1] + 1:
            runs[-1][1] = i
        else:
            runs.append([i, i])
    merged = _merge_spans(runs, merge_gap, max_sentinels)
    spans = tuple(MaskSpan(start, end, k) for k, (start, end) in enumerate(merged))
    return MaskedText(base=seq, spans=spans)


def render_masked(masked: MaskedText, target_label: str | None = None) -> str:
    """Render with literal ``<extra_id_K>`` sentinels, optionally label-prefixed."""
    out: list[str] = []
    cursor = 0
    for span in masked.spans:
        out.extend(masked.base[cursor : span.start])
        out.append(SENTINEL_FORMAT.format(span.sentinel_ordinal))
        cursor = span.end + 1
    out.extend(masked.base[cursor:])
    text = " ".join(out)
    if target_label is not None:
        text = LABEL_PREFIX_FORMAT.format(target_label) + text
    return text


def splice(masked: MaskedText, infills: InfillSet) -> TokenSeq:
    """Replace every span by its infill tokens; empty infill deletes the span."""
    missing = [s.sentinel_ordinal for s in masked.spans if s.sentinel_ordinal not in infills]
    if missing:
        raise IncompleteInfillError(f"missing infills for ordinals {missing}")
    out: list[str] = []
    cursor = 0
    for span in masked.spans:
        out.extend(masked.base[cursor : span.start])
        out.extend(infills[span.sentinel_ordinal])
        cursor = span.end + 1
    out.extend(masked.base[cursor:])
    return tuple(out)
