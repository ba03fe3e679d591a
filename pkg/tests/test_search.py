from __future__ import annotations

import math

import numpy as np
import pytest

from contredit.core import InvalidContrastError, LabelSpace, SearchConfig, tokenize
from contredit.masker import MaskStrategy
from contredit.search import (
    Beam,
    EditCandidate,
    RoundCounters,
    choose_contrast_label,
    find_edits,
    instance_rng,
    probe_level,
)

LABELS = LabelSpace(("neg", "pos"))


class ThresholdPredictor:
    """Flips to 'pos' exactly when the share of Z tokens reaches theta."""

    def __init__(self, theta: float):
        self.theta = theta

    @property
    def label_space(self) -> LabelSpace:
        return LABELS

    def predict_proba(self, tokens):
        if not tokens:
            raise ValueError("empty")
        frac = sum(1 for t in tokens if t == "Z") / len(tokens)
        return np.array([0.0, 1.0]) if frac >= self.theta else np.array([1.0, 0.0])

    def attribute(self, tokens, target_label):
        return np.ones(len(tokens))


class SpanPreservingStub:
    """Replaces every span by Z tokens of the original span length, so the
    fraction of changed tokens equals the masked fraction exactly."""

    def infill(self, masked, target_label, num_samples, top_k, top_p, rng):
        fill = {s.sentinel_ordinal: ("Z",) * len(s) for s in masked.spans}
        return [dict(fill) for _ in range(num_samples)]


class AlwaysFlipPredictor:
    @property
    def label_space(self):
        return LABELS

    def predict_proba(self, tokens):
        return np.array([0.0, 1.0])

    def attribute(self, tokens, target_label):
        return np.ones(len(tokens))


# N divisible enough that ceil(frac * N) / N crosses theta exactly when frac does
STUB_TEXT = " ".join(f"t{i}" for i in range(160))


def simulate_bisection(theta, lo=0.0, hi=0.55, levels=4, n=160):
    """Independent oracle: direct simulation of the bisection update rule."""
    probes, flips = [], []
    for _ in range(levels):
        frac = (lo + hi) / 2
        flipped = math.ceil(frac * n) / n >= theta
        probes.append(frac)
        flips.append(flipped)
        if flipped:
            hi = frac
        else:
            lo = frac
    return probes, flips


def _run_stub_search(theta, **kwargs):
    return find_edits(STUB_TEXT, ThresholdPredictor(theta), SpanPreservingStub(),
                      SearchConfig(), contrast_label="pos",
                      rng=np.random.default_rng(0), **kwargs)


def test_choose_contrast_label_examples():
    space = LabelSpace(("neg", "pos", "neu"))
    assert choose_contrast_label(np.array([0.7, 0.2, 0.1]), space) == "pos"
    assert choose_contrast_label(np.array([0.4, 0.4, 0.2]), space) == "pos"
    assert choose_contrast_label(np.array([0.9, 0.1]), LABELS) == "pos"
    with pytest.raises(ValueError):
        choose_contrast_label(np.array([1.0]), LABELS)


def test_probe_sequence_matches_hand_simulation():
    outcome = _run_stub_search(0.30)
    expected_probes, _ = simulate_bisection(0.30)
    assert expected_probes == pytest.approx([0.275, 0.4125, 0.34375, 0.309375])
    probed = {c.mask_fraction for c in outcome.flipping + outcome.final_beam}
    assert probed <= set(expected_probes)  # engine == oracle, bit for bit
    flip_fracs = {c.mask_fraction for c in outcome.flipping}
    assert min(flip_fracs) == pytest.approx(0.309375)
    assert min(flip_fracs) == expected_probes[-1]


def test_never_flipping_probe_sequence():
    outcome = _run_stub_search(2.0)  # unreachable threshold
    assert outcome.best is None
    assert outcome.rounds_run == SearchConfig().max_rounds
    expected_probes, flips = simulate_bisection(2.0)
    assert expected_probes == pytest.approx([0.275, 0.4125, 0.48125, 0.515625])
    assert not any(flips)
    fractions = {c.mask_fraction for c in outcome.final_beam}
    assert fractions <= set(expected_probes)


@pytest.mark.parametrize("theta", [0.1, 0.3, 0.5])
def test_bisection_localizes_threshold(theta):
    cfg = SearchConfig()
    probes, flips = simulate_bisection(theta)
    outcome = _run_stub_search(theta)
    flip_fracs = {c.mask_fraction for c in outcome.flipping}
    lowest_flip = min(flip_fracs)
    assert lowest_flip == min(p for p, f in zip(probes, flips) if f)
    non_flip_probes = [p for p, f in zip(probes, flips) if not f]
    largest_non_flip = max(non_flip_probes, default=cfg.mask_frac_lo)
    gap = lowest_flip - largest_non_flip
    assert 0 < gap <= (cfg.mask_frac_hi - cfg.mask_frac_lo) / 2 ** cfg.search_levels + 1e-12


def test_exactly_s_probes_and_counters_per_round():
    cfg = SearchConfig()
    outcome = _run_stub_search(2.0)
    assert len(outcome.counters.rounds) == cfg.max_rounds
    r1 = outcome.counters.rounds[0]
    assert r1.editor_samples == cfg.search_levels * cfg.samples_per_level
    assert r1.predictor_forward_calls == cfg.search_levels * cfg.samples_per_level
    assert r1.attribution_calls == 1
    for rc in outcome.counters.rounds[1:]:
        per = cfg.beam_width * cfg.search_levels * cfg.samples_per_level
        assert rc.editor_samples == per == 180
        assert rc.predictor_forward_calls == per == 180
        assert rc.attribution_calls == cfg.beam_width == 3
    # totals = setup forward call + per-round sums
    assert outcome.counters.predictor_forward_calls == 1 + 60 + 180 + 180


def test_early_stop_after_flip_round():
    outcome = _run_stub_search(0.30)
    assert outcome.rounds_run == 1
    assert len(outcome.counters.rounds) == 1


def test_beam_invariants():
    outcome = _run_stub_search(2.0)
    cfg = SearchConfig()
    assert len(outcome.final_beam) == cfg.beam_width
    probs = [c.contrast_prob for c in outcome.final_beam]
    assert probs == sorted(probs, reverse=True)


def test_best_is_minimal_among_flipping(classifier, infiller, eval_set):
    outcome = find_edits(eval_set[0].text, classifier, infiller,
                         rng=instance_rng(0, eval_set[0].id))
    assert outcome.best is not None
    assert all(outcome.best.minimality <= c.minimality for c in outcome.flipping)
    assert outcome.best.predicted_label == outcome.contrast_label


def test_probe_level_with_always_flip_stub():
    cfg = SearchConfig()
    tokens = tokenize(STUB_TEXT)
    counters = RoundCounters()
    candidates = probe_level(tokens, np.ones(len(tokens)), 0.2, AlwaysFlipPredictor(),
                             SpanPreservingStub(), cfg, "pos", "pos",
                             MaskStrategy.GRADIENT, np.random.default_rng(0), 1,
                             tokens, counters)
    assert len(candidates) == cfg.samples_per_level
    assert all(c.flipped for c in candidates)
    assert counters.predictor_forward_calls == cfg.samples_per_level
    assert counters.editor_samples == cfg.samples_per_level


def test_probe_level_is_deterministic(classifier, infiller, eval_set):
    tokens = tokenize(eval_set[1].text)
    cfg = SearchConfig()
    scores = classifier.attribute(tokens, "positive")

    def run():
        return probe_level(tokens, scores, 0.3, classifier, infiller, cfg, "positive",
                           "positive", MaskStrategy.GRADIENT, np.random.default_rng(7),
                           1, tokens, RoundCounters())

    assert run() == run()


def test_find_edits_deterministic_on_real_backends(classifier, infiller, eval_set):
    ex = eval_set[2]
    a = find_edits(ex.text, classifier, infiller, rng=instance_rng(3, ex.id))
    b = find_edits(ex.text, classifier, infiller, rng=instance_rng(3, ex.id))
    assert a == b


def test_attribution_target_selection(classifier, infiller, eval_set):
    class SpyPredictor:
        def __init__(self, inner):
            self.inner = inner
            self.targets = []

        @property
        def label_space(self):
            return self.inner.label_space

        def predict_proba(self, tokens):
            return self.inner.predict_proba(tokens)

        def predict_proba_many(self, seqs):
            return self.inner.predict_proba_many(seqs)

        def attribute(self, tokens, target_label):
            self.targets.append(target_label)
            return self.inner.attribute(tokens, target_label)

    ex = eval_set[4]
    spy = SpyPredictor(classifier)
    outcome = find_edits(ex.text, spy, infiller, rng=instance_rng(0, ex.id))
    assert spy.targets[0] == outcome.predicted_label  # default: prevailing prediction

    spy = SpyPredictor(classifier)
    outcome = find_edits(ex.text, spy, infiller, attribution_on="contrast",
                         rng=instance_rng(0, ex.id))
    assert all(t == outcome.contrast_label for t in spy.targets)


def test_random_strategy_skips_attribution():
    outcome = find_edits(STUB_TEXT, ThresholdPredictor(2.0), SpanPreservingStub(),
                         SearchConfig(), contrast_label="pos",
                         strategy=MaskStrategy.RANDOM, rng=np.random.default_rng(0))
    assert outcome.counters.attribution_calls == 0


def test_long_inputs_still_flip():
    """Regression: training used to stall on long inputs (mean-pool gradient
    dilution under the signed-square plateau), leaving the search unable to
    flip anything."""
    from contredit.data import SynthConfig, generate_synthetic_reviews
    from contredit.editor import train_reference_infiller
    from contredit.predictor import train_reference_classifier

    corpus = generate_synthetic_reviews(SynthConfig(n_examples=500, len_lo=120,
                                                    len_hi=160, rng_seed=5))
    classifier = train_reference_classifier(corpus[:440])
    editor = train_reference_infiller(corpus[:440], use_labels=True)
    flips = 0
    for ex in corpus[440:448]:
        outcome = find_edits(ex.text, classifier, editor,
                             rng=instance_rng(0, ex.id), example_id=ex.id)
        flips += outcome.best is not None
    assert flips >= 7


def test_errors(classifier, infiller):
    with pytest.raises(ValueError):
        find_edits("", classifier, infiller)
    with pytest.raises(InvalidContrastError):
        find_edits("great great great", classifier, infiller, contrast_label="positive")
    with pytest.raises(KeyError):
        find_edits("great great great", classifier, infiller, contrast_label="nope")


def test_beam_from_pool_orders_and_truncates():
    def cand(p, m, r):
        return EditCandidate(("x",), "x", p, 0.2, r, False, m, "neg")

    pool = [cand(0.1, 0.5, 1), cand(0.9, 0.1, 1), cand(0.9, 0.05, 2), cand(0.4, 0.2, 1)]
    beam = Beam.from_pool(pool, 3)
    assert [c.contrast_prob for c in beam.candidates] == [0.9, 0.9, 0.4]
    # tie on contrast_prob broken by lower minimality
    assert beam.candidates[0].minimality == 0.05
