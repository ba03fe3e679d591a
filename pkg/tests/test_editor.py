from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from contredit.core import (
    MaskedText,
    MaskSpan,
    SearchConfig,
    splice,
    tokenize,
)
from contredit.data import POSITIVE_WORDS
from contredit.editor import (
    InfillerConfig,
    ReferenceInfiller,
    RequestSeededEditor,
    fill_with_original,
    is_complete,
    parse_raw_generation,
    repair_degenerate,
    train_reference_infiller,
    truncate_distribution,
)

RNG = lambda seed=0: np.random.default_rng(seed)


def test_truncate_examples():
    out = truncate_distribution(np.array([0.5, 0.3, 0.2]), top_k=2, top_p=1.0)
    assert np.allclose(out, [0.625, 0.375, 0.0])
    out = truncate_distribution(np.array([0.5, 0.3, 0.2]), top_k=3, top_p=0.5)
    assert np.allclose(out, [1.0, 0.0, 0.0])
    uniform = np.full(100, 0.01)
    out = truncate_distribution(uniform, top_k=30, top_p=0.95)
    # kept mass 0.30 never reaches 0.95, so all 30 survive
    assert np.count_nonzero(out) == 30
    assert np.allclose(out[out > 0], 1 / 30)


@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=40),
       st.integers(1, 50), st.floats(0.05, 1.0))
@settings(max_examples=150)
def test_truncate_properties(raw, top_k, top_p):
    dist = np.array(raw) / np.sum(raw)
    out = truncate_distribution(dist, top_k, top_p)
    assert abs(out.sum() - 1.0) < 1e-9
    support = np.flatnonzero(out)
    assert 1 <= len(support) <= top_k
    # kept entries form a prefix of the probability-sorted order
    order = np.argsort(-dist, kind="stable")
    assert set(support) == set(order[: len(support)])


def test_label_conditioning_of_counts(infiller, pooled_infiller):
    assert infiller.unigram_prob("great", "positive") > infiller.unigram_prob("great", "negative")
    assert (pooled_infiller.unigram_prob("great", "positive")
            == pooled_infiller.unigram_prob("great", "negative"))


def test_training_is_deterministic(train_set):
    a = train_reference_infiller(train_set[:200], use_labels=True)
    b = train_reference_infiller(train_set[:200], use_labels=True)
    assert a.vocab == b.vocab
    assert a._tables.keys() == b._tables.keys()
    for key in a._tables:
        assert a._tables[key].uni == b._tables[key].uni
        assert a._tables[key].tri == b._tables[key].tri


def test_train_empty_corpus():
    with pytest.raises(ValueError):
        train_reference_infiller([])


def _single_span(tokens, start, end):
    return MaskedText(tuple(tokens), (MaskSpan(start, end, 0),))


def test_infill_contract(infiller):
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    samples = infiller.infill(masked, "positive", 15, 30, 0.95, RNG())
    assert len(samples) == 15
    assert all(set(s) == {0} for s in samples)
    assert all(1 <= len(s[0]) <= 3 for s in samples)  # span length 1, jitter 2


def test_infill_determinism(infiller):
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    a = infiller.infill(masked, "positive", 5, 30, 0.95, RNG(42))
    b = infiller.infill(masked, "positive", 5, 30, 0.95, RNG(42))
    assert a == b


def test_infill_greedy_when_topk_one(infiller):
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    cfg = InfillerConfig(length_jitter=0)
    greedy = ReferenceInfiller(infiller.vocab, infiller._tables, cfg, infiller.labeled)
    samples = greedy.infill(masked, "positive", 8, 1, 1.0, RNG())
    assert len(set(tuple(sorted(s.items())) for s in samples)) == 1


def test_targeted_infilling_prefers_contrast_lexicon():
    # clean lexicon-label correspondence isolates the conditioning effect
    from contredit.data import SynthConfig, generate_synthetic_reviews

    corpus = generate_synthetic_reviews(SynthConfig(n_examples=1200, lexicon_noise=0.0,
                                                    rng_seed=2))
    infiller = train_reference_infiller(corpus, use_labels=True)
    masked = _single_span(tokenize("the movie was great"), 3, 3)
    samples = infiller.infill(masked, "positive", 100, 30, 0.95, RNG(5))
    hits = sum(s[0][0] in POSITIVE_WORDS for s in samples if s[0])
    assert hits / len(samples) >= 0.8


def test_infill_without_spans(infiller):
    masked = MaskedText(tokenize("nothing is masked"), ())
    with pytest.raises(ValueError):
        infiller.infill(masked, "positive", 3, 30, 0.95, RNG())


def test_parse_raw_generation():
    masked = MaskedText(tokenize("a b c d e"), (MaskSpan(1, 1, 0), MaskSpan(3, 3, 1)))
    assert parse_raw_generation("<extra_id_0> nice <extra_id_1> film", masked) == \
        {0: ("nice",), 1: ("film",)}
    assert parse_raw_generation("<extra_id_0> nice <extra_id_2> x", masked) == {0: ("nice",)}
    assert parse_raw_generation("", masked) == {}
    # adjacent markers produce an empty (deletion) infill
    assert parse_raw_generation("<extra_id_0> <extra_id_1> tail", masked) == \
        {0: (), 1: ("tail",)}


@given(st.data())
@settings(max_examples=60, deadline=None)
def test_parse_recovers_rendered_infills(data):
    base = tuple(data.draw(st.lists(st.sampled_from("a b c d e f g".split()),
                                    min_size=3, max_size=12)))
    starts = sorted(data.draw(st.sets(st.integers(0, len(base) - 1), min_size=1, max_size=3)))
    spans = []
    for k, s in enumerate(starts):
        if spans and s <= spans[-1].end + 1:
            continue
        spans.append(MaskSpan(s, s, len(spans)))
    masked = MaskedText(base, tuple(spans))
    infills = {k: tuple(data.draw(st.lists(st.sampled_from("x y z".split()), max_size=3)))
               for k in range(len(spans))}
    raw = " ".join(
        f"<extra_id_{k}> " + " ".join(infills[k]) for k in range(len(spans)))
    assert parse_raw_generation(raw, masked) == infills


def test_repair_complete_candidate_is_unchanged(infiller, classifier):
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    complete = {0: ("awful",)}
    out = repair_degenerate([complete], masked, infiller, "negative", SearchConfig(),
                            RNG(), classifier, "negative", num_return=1)
    assert out == [complete]


def test_repair_all_unresolved_recovers_original(infiller):
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    filled = fill_with_original({}, masked)
    assert splice(masked, filled) == tokenize("the movie was great today")


def test_repair_requery_split(classifier):
    masked = MaskedText(tokenize("a b c d e f g h"),
                        (MaskSpan(1, 1, 0), MaskSpan(4, 5, 1)))

    class CountingEditor:
        def __init__(self):
            self.requests = []

        def infill(self, masked, target, n, top_k, top_p, rng):
            self.requests.append(n)
            return [{k: ("z",) for k in range(len(masked.spans))} for _ in range(n)]

    editor = CountingEditor()
    partials = [{0: (f"w{i}",)} for i in range(15)]  # ordinal 1 unresolved
    out = repair_degenerate(partials, masked, editor, "positive", SearchConfig(),
                            RNG(), predictor=None, contrast_label=None)
    # m' = 3 intermediates re-queried for 15 // 3 = 5 candidates each
    assert editor.requests == [5, 5, 5]
    assert len(out) == 15
    assert all(is_complete(c, masked) for c in out)


def test_repair_short_circuits_on_flip(classifier, infiller):
    # an intermediate that already flips is returned immediately
    masked = _single_span(tokenize("the movie was awful today"), 3, 3)
    partials = [{0: ("superb",)}, {}]

    class ExplodingEditor:
        def infill(self, *args, **kwargs):
            raise AssertionError("re-query should not happen after a flip")

    out = repair_degenerate(partials, masked, ExplodingEditor(), "positive",
                            SearchConfig(), RNG(), classifier, "positive")
    assert len(out) == 1
    assert out[0][0] == ("superb",)


def test_request_seeded_editor_is_request_deterministic(infiller):
    wrapped = RequestSeededEditor(infiller, base_seed=9)
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    a = wrapped.infill(masked, "negative", 6, 30, 0.95, RNG(1))
    b = wrapped.infill(masked, "negative", 6, 30, 0.95, RNG(999))  # rng ignored
    assert a == b
    c = wrapped.infill(masked, "positive", 6, 30, 0.95, RNG(1))
    assert a != c  # different request, different stream


def test_label_conditioning_raises_contrast_probability():
    """Targeted infilling must beat pooled infilling on p(contrast | edit)."""
    from contredit.data import SynthConfig, generate_synthetic_reviews
    from contredit.predictor import train_reference_classifier

    corpus = generate_synthetic_reviews(SynthConfig(n_examples=1400, lexicon_noise=0.0,
                                                    rng_seed=2))
    classifier = train_reference_classifier(corpus[:1200])
    labeled = train_reference_infiller(corpus[:1200], use_labels=True)
    pooled = train_reference_infiller(corpus[:1200], use_labels=False)
    rng = RNG(11)
    gains = []
    for ex in corpus[1200:1230]:
        tokens = tokenize(ex.text)
        y_p = classifier.predict_label(tokens)
        y_c = "positive" if y_p == "negative" else "negative"
        y_idx = classifier.label_space.index(y_c)
        masked = MaskedText(tokens, (MaskSpan(1, 5, 0),))
        for_label = labeled.infill(masked, y_c, 8, 30, 0.95, rng)
        for_pool = pooled.infill(masked, None, 8, 30, 0.95, rng)
        p_lab = np.mean([classifier.predict_proba(splice(masked, s))[y_idx]
                         for s in for_label])
        p_pool = np.mean([classifier.predict_proba(splice(masked, s))[y_idx]
                          for s in for_pool])
        gains.append(p_lab - p_pool)
    gains = np.array(gains)
    boot = np.random.default_rng(0)
    lows = [np.mean(boot.choice(gains, size=len(gains))) for _ in range(1000)]
    assert np.quantile(lows, 0.025) > 0  # 95% bootstrap interval above zero


def test_checkpoint_round_trip(infiller, tmp_path):
    path = str(tmp_path / "infiller.json")
    infiller.save(path)
    loaded = ReferenceInfiller.load(path)
    masked = _single_span(tokenize("the movie was great today"), 3, 3)
    assert loaded.infill(masked, "positive", 5, 30, 0.95, RNG(3)) == \
        infiller.infill(masked, "positive", 5, 30, 0.95, RNG(3))
    assert loaded.vocab == infiller.vocab
    assert loaded.labels == infiller.labels
