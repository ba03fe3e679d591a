"""Wire-protocol conformance, driven end to end through the client library."""

from __future__ import annotations

import socket
import threading
import time

import numpy as np
import pytest
import requests
import uvicorn

from modelserver.app import build_app
from modelserver.config import ServerConfig

from contredit.core import MaskedText, MaskSpan, tokenize
from contredit.editor import is_complete, parse_raw_generation
from contredit.remote import Endpoint, RemoteEditor, RemoteFluencyScorer, RemotePredictor

GOLDEN_VECTORS = [
    ("POST", "/v1/predict", {"texts": ["the movie was great and lovely"]},
     {"labels": list, "probs": list}),
    ("POST", "/v1/attribute",
     {"tokens": ["the", "movie", "was", "great"], "target_label": "positive"},
     {"scores": list}),
    ("POST", "/v1/infill",
     {"masked": "the movie was <extra_id_0> and the plot was <extra_id_1>",
      "target_label": "negative", "num_return": 3, "top_k": 30, "top_p": 0.95},
     {"candidates": list}),
    ("POST", "/v1/pll", {"text": "the movie was great"}, {"loss": float}),
    ("GET", "/v1/meta", None, {"labels": list, "name": str, "version": str}),
]


class _Server:
    def __init__(self, app, port):
        config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="error")
        self.server = uvicorn.Server(config)
        self.thread = threading.Thread(target=self.server.run, daemon=True)

    def __enter__(self):
        self.thread.start()
        deadline = time.time() + 15
        while not self.server.started:
            if time.time() > deadline:
                raise RuntimeError("server failed to start")
            time.sleep(0.02)
        return self

    def __exit__(self, *exc):
        self.server.should_exit = True
        self.thread.join(timeout=10)
        return False


def _free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def live_server(checkpoints):
    cfg = ServerConfig(predictor_ckpt=checkpoints["predictor_dir"],
                       editor_ckpt=checkpoints["editor_dir"],
                       scorer_ckpt=checkpoints["scorer_dir"])
    app = build_app(cfg, predictor=checkpoints["predictor"],
                    editor=checkpoints["editor"], scorer=checkpoints["scorer"])
    port = _free_port()
    with _Server(app, port) as srv:
        yield f"http://127.0.0.1:{port}"


def test_golden_vectors(live_server):
    for method, path, payload, shape in GOLDEN_VECTORS:
        if method == "GET":
            resp = requests.get(live_server + path, timeout=30)
        else:
            resp = requests.post(live_server + path, json=payload, timeout=60)
        assert resp.status_code == 200, (path, resp.text)
        body = resp.json()
        for field, kind in shape.items():
            assert isinstance(body.get(field), kind), (path, field, body)


def test_client_side_validation_passes(live_server):
    """The engine's remote clients enforce every contract invariant; a clean
    pass through them is the conformance check."""
    predictor = RemotePredictor(Endpoint(live_server, timeout=60))
    assert predictor.label_space.labels == ("negative", "positive")
    probs = predictor.predict_proba(tokenize("the movie was great and lovely"))
    assert abs(probs.sum() - 1.0) <= 1e-6

    scores = predictor.attribute(tokenize("the movie was great and lovely"),
                                 "negative")
    assert len(scores) == 6 and np.all(scores >= 0)

    scorer = RemoteFluencyScorer(Endpoint(live_server, timeout=60))
    loss = scorer.pseudo_loss(tokenize("the movie was great"))
    assert loss >= 0.0


def test_attribute_word_alignment_and_sum_identity(live_server, checkpoints):
    rng = np.random.default_rng(1)
    words_pool = "the movie film plot was great dull and lovely boring story".split()
    predictor_client = RemotePredictor(Endpoint(live_server, timeout=60))
    runtime = checkpoints["predictor"]
    for _ in range(50):
        words = [str(w) for w in rng.choice(words_pool, size=rng.integers(2, 12))]
        served = predictor_client.attribute(tuple(words), "positive")
        assert len(served) == len(words)
        piece_scores, owner = runtime.attribute_pieces(words, "positive")
        summed = np.zeros(len(words))
        for score, w in zip(piece_scores, owner):
            summed[w] += score
        np.testing.assert_allclose(served, summed, rtol=1e-6)


def test_infill_candidates_parse_or_repair_complete(live_server, checkpoints):
    """Criterion: the smoke fine-tuned editor serves candidates the engine can
    always turn into complete infill sets."""
    predictor = RemotePredictor(Endpoint(live_server, timeout=60))
    editor = RemoteEditor(Endpoint(live_server, timeout=120), predictor=predictor)
    tokens = tokenize("the movie was great and the plot was dull and the cast was lovely")
    masked = MaskedText(tokens, (MaskSpan(3, 3, 0), MaskSpan(8, 9, 1)))
    samples = editor.infill(masked, "negative", 6, 30, 0.95,
                            np.random.default_rng(0))
    assert len(samples) == 6
    assert all(is_complete(s, masked) for s in samples)

    # raw generations themselves parse into (possibly partial) infill sets
    resp = requests.post(live_server + "/v1/infill", json={
        "masked": "the movie was <extra_id_0> and the plot was <extra_id_1>",
        "target_label": "negative", "num_return": 4, "top_k": 30, "top_p": 0.95,
    }, timeout=120)
    body = resp.json()
    assert len(body["candidates"]) == 4
    probe = MaskedText(tokenize("the movie was x and the plot was y"),
                       (MaskSpan(3, 3, 0), MaskSpan(8, 8, 1)))
    for cand in body["candidates"]:
        assert "raw" in cand
        parsed = parse_raw_generation(cand["raw"], probe)
        assert isinstance(parsed, dict)


def test_bad_request_is_400(live_server):
    resp = requests.post(live_server + "/v1/predict", json={"nope": 1}, timeout=30)
    assert resp.status_code == 400
    resp = requests.post(live_server + "/v1/infill",
                         json={"masked": "x <extra_id_0>", "num_return": 0,
                               "top_k": 5, "top_p": 0.9}, timeout=30)
    assert resp.status_code == 400


def test_unknown_label_is_422(live_server):
    resp = requests.post(live_server + "/v1/attribute",
                         json={"tokens": ["a"], "target_label": "mystery"}, timeout=30)
    assert resp.status_code == 422


def test_busy_queue_is_503(checkpoints):
    cfg = ServerConfig(predictor_ckpt=checkpoints["predictor_dir"],
                       editor_ckpt=checkpoints["editor_dir"],
                       scorer_ckpt=checkpoints["scorer_dir"], queue_size=1)
    app = build_app(cfg, predictor=checkpoints["predictor"],
                    editor=checkpoints["editor"], scorer=checkpoints["scorer"])
    port = _free_port()
    with _Server(app, port):
        url = f"http://127.0.0.1:{port}"
        # exhaust the single inference slot, then every POST must report busy
        assert app.state.gate._slots.acquire(blocking=False)
        try:
            resp = requests.post(url + "/v1/pll", json={"text": "the movie was great"},
                                 timeout=30)
            assert resp.status_code == 503
            # meta carries no inference and stays reachable
            assert requests.get(url + "/v1/meta", timeout=30).status_code == 200
        finally:
            app.state.gate._slots.release()
        resp = requests.post(url + "/v1/pll", json={"text": "the movie was great"},
                             timeout=30)
        assert resp.status_code == 200


def test_meta_labels(live_server):
    body = requests.get(live_server + "/v1/meta", timeout=30).json()
    assert body["labels"] == ["negative", "positive"]
