from __future__ import annotations

import json
import os

import numpy as np
import pytest

from modelserver.config import Stage1Config, TrainerConfig
from modelserver.editor import finetune_editor
from modelserver.predictor import train_predictor
from modelserver.scorer import train_scorer

POSITIVE = ("great", "wonderful", "excellent", "amazing", "lovely")
NEGATIVE = ("awful", "terrible", "boring", "dreadful", "dull")
NOUNS = ("movie", "film", "plot", "story", "cast")


def make_corpus(n=160, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        positive = i % 2 == 0
        lex = POSITIVE if positive else NEGATIVE
        words: list[str] = []
        for _ in range(4):
            words += ["the", str(rng.choice(NOUNS)), "was", str(rng.choice(lex)), "and"]
        rows.append({"id": f"srv-{i}", "text": " ".join(words[:-1]),
                     "label": "positive" if positive else "negative"})
    return rows


@pytest.fixture(scope="session")
def corpus():
    return make_corpus()


@pytest.fixture(scope="session")
def dataset_path(corpus, tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "train.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for row in corpus:
            fh.write(json.dumps(row) + "\n")
    return str(path)


@pytest.fixture(scope="session")
def checkpoints(corpus, tmp_path_factory):
    root = tmp_path_factory.mktemp("ckpt")
    predictor = train_predictor(corpus, str(root / "predictor"),
                                TrainerConfig(epochs=6))
    editor = finetune_editor(
        corpus[:50], str(root / "editor"),
        Stage1Config(masking="gradient", label_mode="pred", epochs=6),
        predictor)
    scorer = train_scorer(corpus, str(root / "scorer"), TrainerConfig(epochs=4))
    return {
        "root": str(root),
        "predictor_dir": str(root / "predictor"),
        "editor_dir": str(root / "editor"),
        "scorer_dir": str(root / "scorer"),
        "predictor": predictor,
        "editor": editor,
        "scorer": scorer,
    }
