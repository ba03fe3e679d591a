"""Edit search: rounds of beam search, each bisecting the mask fraction.

One round runs an s-level binary search over the mask fraction for every beam
element: probe the midpoint fraction, sample infill candidates there, score
them, and move the upper bound down when any candidate flips the prediction
(otherwise the lower bound up). Rounds stop early once a flip is found; the
reported best edit is the flipping candidate with the smallest minimality
measured against the original input.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from contredit.core import (
    InvalidContrastError,
    LabelSpace,
    SearchConfig,
    TokenSeq,
    apply_mask,
    detokenize,
    splice,
    tokenize,
)
from contredit.editor import Editor
from contredit.masker import MaskStrategy, select_mask_indices
from contredit.metrics import minimality as _minimality
from contredit.predictor import Predictor


@dataclass
class RoundCounters:
    predictor_forward_calls: int = 0
    editor_samples: int = 0
    attribution_calls: int = 0


@dataclass
class SearchCounters:
    """Totals plus a per-round breakdown; totals include pre-round setup calls."""

    predictor_forward_calls: int = 0
    editor_samples: int = 0
    attribution_calls: int = 0
    rounds: list[RoundCounters] = field(default_factory=list)

    def absorb(self, rc: RoundCounters) -> None:
        self.predictor_forward_calls += rc.predictor_forward_calls
        self.editor_samples += rc.editor_samples
        self.attribution_calls += rc.attribution_calls
        self.rounds.append(rc)


@dataclass(frozen=True)
class EditCandidate:
    tokens: TokenSeq
    text: str
    contrast_prob: float
    mask_fraction: float
    round_index: int
    flipped: bool
    minimality: float
    predicted_label: str


_BEAM_KEY = lambda c: (-c.contrast_prob, c.minimality, c.round_index, c.text)
_BEST_KEY = lambda c: (c.minimality, -c.contrast_prob, c.round_index, c.text)


@dataclass(frozen=True)
class Beam:
    """Top candidates by contrast probability; ties by minimality, then round."""

    candidates: tuple[EditCandidate, ...]

    @classmethod
    def from_pool(cls, pool: list[EditCandidate], width: int) -> "Beam":
        return cls(tuple(sorted(pool, key=_BEAM_KEY)[:width]))


@dataclass
class EditOutcome:
    original_text: str
    predicted_label: str
    contrast_label: str
    flipping: list[EditCandidate]
    best: EditCandidate | None
    final_beam: list[EditCandidate]
    counters: SearchCounters
    rounds_run: int
    example_id: str | None = None


def choose_contrast_label(probs: np.ndarray, labels: LabelSpace) -> str:
    """The label with the second-highest probability; ties go to label order."""
    if len(labels) < 2 or len(probs) != len(labels):
        raise ValueError("need a probability per label and at least 2 labels")
    order = sorted(range(len(labels)), key=lambda i: (-float(probs[i]), i))
    return labels.labels[order[1]]


def _predict_many(predictor: Predictor, seqs: list[TokenSeq]) -> list[np.ndarray]:
    many = getattr(predictor, "predict_proba_many", None)
    if many is not None:
        return many(seqs)
    return [predictor.predict_proba(s) for s in seqs]


def probe_level(tokens: TokenSeq, scores: np.ndarray | None, fraction: float,
                predictor: Predictor, editor: Editor, cfg: SearchConfig,
                contrast_label: str, editor_target: str | None, strategy: MaskStrategy,
                rng: np.random.Generator, round_index: int, original_tokens: TokenSeq,
                counters: RoundCounters) -> list[EditCandidate]:
    """Mask at one fraction, sample infills, splice, and score every candidate."""
    indices = select_mask_indices(scores, len(tokens), fraction, strategy, rng)
    masked = apply_mask(tokens, indices, cfg.merge_gap, cfg.max_sentinels)
    samples = editor.infill(masked, editor_target, cfg.samples_per_level,
                            cfg.top_k, cfg.top_p, rng)
    counters.editor_samples += len(samples)
    spliced = [splice(masked, s) for s in samples]
    nonempty = [s for s in spliced if s]
    probs_list = _predict_many(predictor, nonempty)
    counters.predictor_forward_calls += len(nonempty)

    labels = predictor.label_space
    y_c = labels.index(contrast_label)
    out: list[EditCandidate] = []
    for seq, probs in zip(nonempty, probs_list):
        top = int(np.argmax(probs))
        out.append(EditCandidate(
            tokens=seq,
            text=detokenize(seq),
            contrast_prob=float(probs[y_c]),
            mask_fraction=fraction,
            round_index=round_index,
            flipped=top == y_c,
            minimality=_minimality(original_tokens, seq),
            predicted_label=labels.labels[top],
        ))
    return out


def binary_search_fractions(tokens: TokenSeq, predictor: Predictor, editor: Editor,
                            cfg: SearchConfig, contrast_label: str,
                            editor_target: str | None, strategy: MaskStrategy,
                            attribution_target: str, rng: np.random.Generator,
                            round_index: int, original_tokens: TokenSeq,
                            counters: RoundCounters
                            ) -> tuple[list[EditCandidate], float | None]:
    """Bisect the mask fraction for search_levels probes; hi moves down on a flip.

    Attribution happens once per call: every level reuses the same scores, so
    a round costs exactly one backward pass per beam element.
    """
    scores = None
    if strategy is MaskStrategy.GRADIENT:
        scores = predictor.attribute(tokens, attribution_target)
        counters.attribution_calls += 1
    lo, hi = cfg.mask_frac_lo, cfg.mask_frac_hi
    pool: list[EditCandidate] = []
    flip_fractions: list[float] = []
    for _ in range(cfg.search_levels):
        fraction = (lo + hi) / 2.0
        candidates = probe_level(tokens, scores, fraction, predictor, editor, cfg,
                                 contrast_label, editor_target, strategy, rng,
                                 round_index, original_tokens, counters)
        pool.extend(candidates)
        if any(c.flipped for c in candidates):
            flip_fractions.append(fraction)
            hi = fraction
        else:
            lo = fraction
    return pool, (min(flip_fractions) if flip_fractions else None)


def find_edits(text: str, predictor: Predictor, editor: Editor,
               cfg: SearchConfig = SearchConfig(), *,
               contrast_label: str | None = None,
               strategy: MaskStrategy = MaskStrategy.GRADIENT,
               editor_uses_contrast_label: bool = True,
               attribution_on: Literal["predicted", "contrast"] = "predicted",
               rng: np.random.Generator | None = None,
               example_id: str | None = None) -> EditOutcome:
    """Run the full search for one input and collect every flipping candidate.

    Round 1 searches the original input only; later rounds re-mask each beam
    element (re-deriving attributions on the edited text) so edits compound.
    Minimality is always measured against the original input.
    """
    original = tokenize(text)
    if not original:
        raise ValueError("cannot edit an empty input")
    if rng is None:
        rng = np.random.default_rng(cfg.rng_seed)

    counters = SearchCounters()
    probs = predictor.predict_proba(original)
    counters.predictor_forward_calls += 1
    labels = predictor.label_space
    y_p = labels.labels[int(np.argmax(probs))]
    y_c = contrast_label if contrast_label is not None else choose_contrast_label(probs, labels)
    labels.index(y_c)
    if y_c == y_p:
        raise InvalidContrastError(f"contrast label equals the prediction: {y_p!r}")

    editor_target = y_c if editor_uses_contrast_label else None
    flipping: list[EditCandidate] = []
    beam = Beam(())
    rounds_run = 0

    for round_index in range(1, cfg.max_rounds + 1):
        if round_index == 1:
            elements: list[tuple[TokenSeq, str]] = [(original, y_p)]
        else:
            elements = [(c.tokens, c.predicted_label) for c in beam.candidates]
        rc = RoundCounters()
        round_pool: list[EditCandidate] = []
        for tokens, predicted in elements:
            attribution_target = y_c if attribution_on == "contrast" else predicted
            pool, _ = binary_search_fractions(
                tokens, predictor, editor, cfg, y_c, editor_target, strategy,
                attribution_target, rng, round_index, original, rc)
            round_pool.extend(pool)
        counters.absorb(rc)
        rounds_run = round_index
        flipping.extend(c for c in round_pool if c.flipped)
        beam = Beam.from_pool(round_pool + list(beam.candidates), cfg.beam_width)
        if flipping:
            break

    best = min(flipping, key=_BEST_KEY) if flipping else None
    return EditOutcome(
        original_text=detokenize(original),
        predicted_label=y_p,
        contrast_label=y_c,
        flipping=flipping,
        best=best,
        final_beam=list(beam.candidates),
        counters=counters,
        rounds_run=rounds_run,
        example_id=example_id,
    )


def instance_rng(seed: int, example_id: str) -> np.random.Generator:
    """Per-instance stream derived from (seed, id); independent of scheduling."""
    digest = hashlib.sha256(example_id.encode("utf-8")).digest()[:8]
    return np.random.default_rng([seed, int.from_bytes(digest, "big")])
