"""Data staining: plant a phrase-label correlation and measure edit recovery."""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from contredit.core import LabeledExample, TokenSeq, detokenize, tokenize
from contredit.search import EditOutcome

DEFAULT_PHRASE = ("It", "is", "interesting", "to", "note", "that")


@dataclass(frozen=True)
class StainSpec:
    stained_label: str
    phrase: TokenSeq = DEFAULT_PHRASE
    fraction: float = 0.10
    placement: str = "prepend"

    def __post_init__(self) -> None:
        if not (0.0 < self.fraction <= 1.0):
            raise ValueError("stain fraction must be in (0, 1]")
        if not self.phrase:
            raise ValueError("stain phrase must be nonempty")
        if self.placement != "prepend":
            raise ValueError(f"unsupported placement: {self.placement!r}")


@dataclass
class StainManifest:
    stained_ids: list[str]
    stained_label: str
    phrase: list[str]
    fraction: float
    n_requested: int
    shortfall: int

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def read(cls, path: str) -> "StainManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


def stain_corpus(data: Sequence[LabeledExample], spec: StainSpec,
                 rng: np.random.Generator) -> tuple[list[LabeledExample], StainManifest]:
    """Prepend the stain phrase to a fraction of the matching-label instances.

    The target count is fraction * len(data); when fewer instances carry the
    stained label, all of them are stained and the shortfall is reported.
    Unselected instances pass through byte-identical.
    """
    eligible = [i for i, ex in enumerate(data) if ex.gold_label == spec.stained_label]
    if not eligible:
        raise ValueError(f"no instances with label {spec.stained_label!r} to stain")
    n_requested = round(spec.fraction * len(data))
    n_stain = min(n_requested, len(eligible))
    chosen = set(int(i) for i in rng.choice(len(eligible), size=n_stain, replace=False))
    chosen_positions = {eligible[i] for i in chosen}

    prefix = detokenize(spec.phrase)
    out: list[LabeledExample] = []
    stained_ids: list[str] = []
    for i, ex in enumerate(data):
        if i in chosen_positions:
            out.append(LabeledExample(ex.id, f"{prefix} {ex.text}", ex.gold_label))
            stained_ids.append(ex.id)
        else:
            out.append(ex)
    manifest = StainManifest(
        stained_ids=sorted(stained_ids),
        stained_label=spec.stained_label,
        phrase=list(spec.phrase),
        fraction=spec.fraction,
        n_requested=n_requested,
        shortfall=n_requested - n_stain,
    )
    return out, manifest


def contains_phrase(tokens: TokenSeq, phrase: TokenSeq) -> bool:
    n = len(phrase)
    return any(tuple(tokens[i : i + n]) == tuple(phrase)
               for i in range(len(tokens) - n + 1))


def stain_rate(outcomes: Sequence[EditOutcome], phrase: TokenSeq = DEFAULT_PHRASE) -> float:
    """Fraction of best edits that introduce the phrase absent from the original."""
    if not outcomes:
        raise ValueError("stain rate is undefined for an empty outcome list")
    with_best = [o for o in outcomes if o.best is not None]
    if not with_best:
        return 0.0
    hits = 0
    for outcome in with_best:
        original = tokenize(outcome.original_text)
        if contains_phrase(outcome.best.tokens, phrase) and not contains_phrase(original, phrase):
            hits += 1
    return hits / len(with_best)
