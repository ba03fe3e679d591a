"""Token selection for masking: gradient-ranked or random, at a given fraction."""

from __future__ import annotations

import enum
import math

import numpy as np

from contredit.core import MaskedText, SearchConfig, TokenSeq, apply_mask
from contredit.predictor import Predictor


class MaskStrategy(enum.Enum):
    GRADIENT = "gradient"
    RANDOM = "random"


def select_mask_indices(scores: np.ndarray | None, n_tokens: int, fraction: float,
                        strategy: MaskStrategy, rng: np.random.Generator) -> set[int]:
    """Pick ceil(fraction * n_tokens) indices.

    Gradient strategy takes the highest scores, ties broken by lower index;
    random samples uniformly without replacement. ceil guarantees at least one
    index for any positive fraction.
    """
    if n_tokens < 1:
        raise ValueError("cannot mask an empty input")
    if not (0.0 < fraction <= 1.0):
        raise ValueError(f"mask fraction must be in (0, 1], got {fraction}")
    k = math.ceil(fraction * n_tokens)
    if strategy is MaskStrategy.RANDOM:
        return set(int(i) for i in rng.choice(n_tokens, size=k, replace=False))
    if scores is None:
        raise ValueError("gradient strategy requires attribution scores")
    if len(scores) != n_tokens:
        raise ValueError("scores length must equal token count")
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    return set(int(i) for i in order[:k])


def build_mask(tokens: TokenSeq, predictor: Predictor, target_label: str, fraction: float,
               strategy: MaskStrategy, cfg: SearchConfig,
               rng: np.random.Generator) -> MaskedText:
    """Attribution (gradient strategy only) -> index selection -> span merge."""
    scores = None
    if strategy is MaskStrategy.GRADIENT:
        scores = predictor.attribute(tokens, target_label)
    indices = select_mask_indices(scores, len(tokens), fraction, strategy, rng)
    return apply_mask(tokens, indices, cfg.merge_gap, cfg.max_sentinels)
