from __future__ import annotations

import pytest

from contredit.data import SynthConfig, generate_synthetic_reviews
from contredit.editor import train_reference_infiller
from contredit.metrics import ReferenceNgramScorer
from contredit.predictor import train_reference_classifier


@pytest.fixture(scope="session")
def corpus():
    return generate_synthetic_reviews(SynthConfig(n_examples=2600, rng_seed=0))


@pytest.fixture(scope="session")
def train_set(corpus):
    return corpus[:2000]


@pytest.fixture(scope="session")
def eval_set(corpus):
    return corpus[2000:]


@pytest.fixture(scope="session")
def classifier(train_set):
    return train_reference_classifier(train_set)


@pytest.fixture(scope="session")
def infiller(train_set):
    return train_reference_infiller(train_set, use_labels=True)


@pytest.fixture(scope="session")
def pooled_infiller(train_set):
    return train_reference_infiller(train_set, use_labels=False)


@pytest.fixture(scope="session")
def scorer(train_set):
    return ReferenceNgramScorer.train(train_set)
