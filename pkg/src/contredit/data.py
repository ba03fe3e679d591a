"""Dataset ingestion, synthetic review generation, and result persistence."""

from __future__ import annotations

import json
import os
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from contredit.core import LabeledExample, LabelSpace
from contredit.search import EditCandidate, EditOutcome, RoundCounters, SearchCounters

OUTCOME_SCHEMA_VERSION = 1

POSITIVE_WORDS = (
    "great", "wonderful", "excellent", "amazing", "delightful", "superb",
    "charming", "brilliant", "gripping", "enjoyable", "touching", "masterful",
    "inspired", "memorable", "lovely", "thrilling",
)
NEGATIVE_WORDS = (
    "awful", "terrible", "boring", "dreadful", "bland", "horrible",
    "tedious", "clumsy", "disappointing", "messy", "dull", "painful",
    "forgettable", "lifeless", "grating", "shallow",
)
NOUN_WORDS = (
    "movie", "film", "plot", "acting", "story", "cast", "script", "pacing",
    "ending", "dialogue", "direction", "soundtrack", "humor", "tone",
)

# (pattern, adjective slot marker "A", noun slot marker "N")
_PATTERNS = (
    ("the", "N", "was", "A"),
    ("the", "N", "felt", "A"),
    ("i", "found", "the", "N", "A"),
    ("it", "was", "a", "A", "N"),
    ("the", "N", "seemed", "A"),
    ("a", "A", "N", "overall"),
)

NEGATIVE_RATINGS = ("1/10", "2/10", "3/10", "4/10")
POSITIVE_RATINGS = ("7/10", "8/10", "9/10", "10/10")


def preprocess(text: str) -> str:
    """Strip markup line breaks and control whitespace, collapse runs of spaces."""
    for junk in ("<br />", "\t", "\n"):
        text = text.replace(junk, " ")
    return " ".join(text.split())


@dataclass(frozen=True)
class SynthConfig:
    n_examples: int = 2000
    n_positive_words: int = len(POSITIVE_WORDS)
    n_negative_words: int = len(NEGATIVE_WORDS)
    n_filler_words: int = len(NOUN_WORDS)
    rating_token_probability: float = 0.8
    lexicon_noise: float = 0.2
    len_lo: int = 20
    len_hi: int = 29
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not (0.0 <= self.rating_token_probability <= 1.0):
            raise ValueError("rating_token_probability must be in [0, 1]")
        if not (0.0 <= self.lexicon_noise < 0.5):
            raise ValueError("lexicon_noise must be in [0, 0.5)")
        if not (1 <= self.len_lo <= self.len_hi):
            raise ValueError("need 1 <= len_lo <= len_hi")
        for name in ("n_examples", "n_positive_words", "n_negative_words", "n_filler_words"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def generate_synthetic_reviews(cfg: SynthConfig,
                               rng: np.random.Generator | None = None) -> list[LabeledExample]:
    """Template-built sentiment reviews with an optional planted rating artifact.

    Labels alternate, so any prefix is balanced within one example. With
    probability rating_token_probability an example ends with a rating token
    drawn from its label's band; adjectives occasionally come from the wrong
    lexicon (lexicon_noise), so the rating is the one noise-free feature, the
    shortcut a lazy classifier learns to lean on.
    """
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)
    pos = POSITIVE_WORDS[: cfg.n_positive_words]
    neg = NEGATIVE_WORDS[: cfg.n_negative_words]
    nouns = NOUN_WORDS[: cfg.n_filler_words]

    out: list[LabeledExample] = []
    for i in range(cfg.n_examples):
        positive = i % 2 == 0
        target_len = int(rng.integers(cfg.len_lo, cfg.len_hi + 1))
        tokens: list[str] = []
        while len(tokens) < target_len:
            if tokens:
                tokens.append("and")
            pattern = _PATTERNS[int(rng.integers(len(_PATTERNS)))]
            for slot in pattern:
                if slot == "A":
                    flipped = rng.random() < cfg.lexicon_noise
                    adjectives = (neg if positive else pos) if flipped else \
                        (pos if positive else neg)
                    tokens.append(str(rng.choice(adjectives)))
                elif slot == "N":
                    tokens.append(str(rng.choice(nouns)))
                else:
                    tokens.append(slot)
        if rng.random() < cfg.rating_token_probability:
            band = POSITIVE_RATINGS if positive else NEGATIVE_RATINGS
            tokens.append(str(rng.choice(band)))
        label = "positive" if positive else "negative"
        out.append(LabeledExample(f"synth-{i:05d}", " ".join(tokens), label))
    return out


def _sidecar_path(path: str) -> str:
    root, ext = os.path.splitext(path)
    return (root if ext == ".jsonl" else path) + ".labels.json"


def write_dataset(examples: Sequence[LabeledExample], path: str,
                  labels: Sequence[str] | None = None) -> None:
    """One JSON object per line plus a sidecar file declaring the label set."""
    if labels is None:
        labels = sorted({ex.gold_label for ex in examples})
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps({"id": ex.id, "text": ex.text, "label": ex.gold_label},
                                sort_keys=True) + "\n")
    with open(_sidecar_path(path), "w", encoding="utf-8") as fh:
        json.dump(list(labels), fh)
        fh.write("\n")


def read_dataset(path: str) -> tuple[list[LabeledExample], LabelSpace]:
    examples: list[LabeledExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
                examples.append(LabeledExample(row["id"], row["text"], row["label"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    sidecar = _sidecar_path(path)
    if os.path.exists(sidecar):
        with open(sidecar, encoding="utf-8") as fh:
            labels = tuple(json.load(fh))
    else:
        labels = tuple(sorted({ex.gold_label for ex in examples}))
    return examples, LabelSpace(labels)


def _candidate_to_dict(c: EditCandidate) -> dict:
    return {
        "tokens": list(c.tokens),
        "text": c.text,
        "contrast_prob": c.contrast_prob,
        "mask_fraction": c.mask_fraction,
        "round_index": c.round_index,
        "flipped": c.flipped,
        "minimality": c.minimality,
        "predicted_label": c.predicted_label,
    }


def _candidate_from_dict(d: dict) -> EditCandidate:
    return EditCandidate(
        tokens=tuple(d["tokens"]),
        text=d["text"],
        contrast_prob=d["contrast_prob"],
        mask_fraction=d["mask_fraction"],
        round_index=d["round_index"],
        flipped=d["flipped"],
        minimality=d["minimality"],
        predicted_label=d["predicted_label"],
    )


def outcome_to_dict(o: EditOutcome) -> dict:
    return {
        "v": OUTCOME_SCHEMA_VERSION,
        "id": o.example_id,
        "original_text": o.original_text,
        "predicted_label": o.predicted_label,
        "contrast_label": o.contrast_label,
        "rounds_run": o.rounds_run,
        "flipping": [_candidate_to_dict(c) for c in o.flipping],
        "best": _candidate_to_dict(o.best) if o.best is not None else None,
        "final_beam": [_candidate_to_dict(c) for c in o.final_beam],
        "counters": {
            "predictor_forward_calls": o.counters.predictor_forward_calls,
            "editor_samples": o.counters.editor_samples,
            "attribution_calls": o.counters.attribution_calls,
            "rounds": [rc.__dict__ for rc in o.counters.rounds],
        },
    }


def outcome_from_dict(d: dict) -> EditOutcome:
    if d.get("v") != OUTCOME_SCHEMA_VERSION:
        raise ValueError(f"unsupported outcome schema version: {d.get('v')!r}")
    counters = SearchCounters(
        predictor_forward_calls=d["counters"]["predictor_forward_calls"],
        editor_samples=d["counters"]["editor_samples"],
        attribution_calls=d["counters"]["attribution_calls"],
        rounds=[RoundCounters(**rc) for rc in d["counters"]["rounds"]],
    )
    return EditOutcome(
        original_text=d["original_text"],
        predicted_label=d["predicted_label"],
        contrast_label=d["contrast_label"],
        flipping=[_candidate_from_dict(c) for c in d["flipping"]],
        best=_candidate_from_dict(d["best"]) if d["best"] is not None else None,
        final_beam=[_candidate_from_dict(c) for c in d["final_beam"]],
        counters=counters,
        rounds_run=d["rounds_run"],
        example_id=d["id"],
    )


def write_outcomes(outcomes: Iterable[EditOutcome], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome_to_dict(outcome), sort_keys=True) + "\n")


def read_outcomes(path: str) -> list[EditOutcome]:
    out: list[EditOutcome] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                out.append(outcome_from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
    return out
