from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contredit.core import LabeledExample, SearchConfig
from contredit.masker import MaskStrategy, build_mask, select_mask_indices
from contredit.predictor import TrainConfig, train_reference_classifier

RNG = lambda: np.random.default_rng(0)


def test_select_top_scores():
    scores = np.array([0.9, 0.1, 0.8, 0.7, 0.2])
    assert select_mask_indices(scores, 5, 0.4, MaskStrategy.GRADIENT, RNG()) == {0, 2}


def test_select_tie_break_prefers_lower_index():
    scores = np.array([0.5, 0.5, 0.5])
    assert select_mask_indices(scores, 3, 0.34, MaskStrategy.GRADIENT, RNG()) == {0, 1}


def test_select_random_full_fraction():
    indices = select_mask_indices(None, 6, 1.0, MaskStrategy.RANDOM, RNG())
    assert indices == set(range(6))


def test_ceil_rounding():
    scores = np.arange(10.0)
    assert len(select_mask_indices(scores, 10, 0.55, MaskStrategy.GRADIENT, RNG())) == 6
    assert len(select_mask_indices(scores, 10, 0.001, MaskStrategy.GRADIENT, RNG())) == 1


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_count_and_monotonicity(data):
    n = data.draw(st.integers(1, 40))
    scores = np.array(data.draw(st.lists(
        st.floats(0, 1, allow_nan=False), min_size=n, max_size=n)))
    fa = data.draw(st.floats(0.01, 1.0))
    fb = data.draw(st.floats(0.01, 1.0))
    lo, hi = sorted((fa, fb))
    small = select_mask_indices(scores, n, lo, MaskStrategy.GRADIENT, RNG())
    big = select_mask_indices(scores, n, hi, MaskStrategy.GRADIENT, RNG())
    assert len(small) == math.ceil(lo * n)
    assert len(big) == math.ceil(hi * n)
    assert small <= big


def test_errors():
    with pytest.raises(ValueError):
        select_mask_indices(np.array([1.0]), 0, 0.5, MaskStrategy.GRADIENT, RNG())
    with pytest.raises(ValueError):
        select_mask_indices(np.array([1.0]), 1, 0.0, MaskStrategy.GRADIENT, RNG())
    with pytest.raises(ValueError):
        select_mask_indices(None, 3, 0.5, MaskStrategy.GRADIENT, RNG())


def test_gradient_masks_planted_decisive_token_first():
    # one token carries the whole label signal; everything else is shared noise
    filler = "alpha beta gamma delta epsilon zeta".split()
    data = []
    for i in range(120):
        marker = "XPOS" if i % 2 == 0 else "XNEG"
        label = "positive" if i % 2 == 0 else "negative"
        words = [filler[(i + j) % len(filler)] for j in range(5)]
        words.insert(i % 5, marker)
        data.append(LabeledExample(str(i), " ".join(words), label))
    model = train_reference_classifier(data, TrainConfig(epochs=6, rng_seed=1))
    tokens = ("alpha", "beta", "XPOS", "gamma", "delta")
    scores = model.attribute(tokens, "positive")
    assert int(np.argmax(scores)) == 2
    top1 = select_mask_indices(scores, len(tokens), 0.2, MaskStrategy.GRADIENT, RNG())
    assert top1 == {2}


def test_build_mask_postconditions(classifier):
    cfg = SearchConfig(max_sentinels=4)
    tokens = tuple("the movie was great and the plot felt dull and the cast was "
                   "superb and it was a lovely story overall".split())
    for strategy in MaskStrategy:
        masked = build_mask(tokens, classifier, "positive", 0.55, strategy, cfg, RNG())
        assert len(masked.spans) <= cfg.max_sentinels
        prev_end = -1
        for span in masked.spans:
            assert span.start > prev_end
            prev_end = span.end
