"""HTTP clients for the predictor/editor/fluency wire protocol.

Every response is validated against the engine contracts before values enter
the search: probability vectors must normalize, score lists must align with
the tokens sent, and candidate counts must match the request. A conformant
server is therefore indistinguishable from a local backend.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass, replace

import numpy as np
import requests

from contredit.core import (
    EngineError,
    InfillSet,
    LabelSpace,
    MaskedText,
    SearchConfig,
    TokenSeq,
    detokenize,
    render_masked,
    tokenize,
)
from contredit.editor import (
    fill_with_original,
    is_complete,
    parse_raw_generation,
    repair_degenerate,
)

RETRYABLE_STATUSES = frozenset({502, 503, 504})


class BackendError(EngineError):
    """The server failed (network error, busy after retries, or request rejected)."""


class ProtocolError(EngineError):
    """The server answered with data violating the wire contract."""


@dataclass(frozen=True)
class Endpoint:
    base_url: str
    timeout: float = 10.0
    max_retries: int = 2
    backoff: float = 0.2
    batch_size: int = 16
    max_in_flight: int = 8

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.batch_size < 1 or self.max_in_flight < 1:
            raise ValueError("batch_size and max_in_flight must be >= 1")


_GATES: dict[tuple[str, int], threading.BoundedSemaphore] = {}
_GATES_LOCK = threading.Lock()


def _gate_for(endpoint: Endpoint) -> threading.BoundedSemaphore:
    key = (endpoint.base_url, endpoint.max_in_flight)
    with _GATES_LOCK:
        if key not in _GATES:
            _GATES[key] = threading.BoundedSemaphore(endpoint.max_in_flight)
        return _GATES[key]


def _request(endpoint: Endpoint, method: str, path: str, payload: dict | None = None) -> dict:
    with _gate_for(endpoint):
        return _request_unguarded(endpoint, method, path, payload)


def _request_unguarded(endpoint: Endpoint, method: str, path: str,
                       payload: dict | None = None) -> dict:
    url = endpoint.base_url.rstrip("/") + path
    last_error: Exception | None = None
    for attempt in range(endpoint.max_retries + 1):
        if attempt:
            time.sleep(endpoint.backoff * (2 ** (attempt - 1)))
        try:
            if method == "GET":
                resp = requests.get(url, timeout=endpoint.timeout)
            else:
                resp = requests.post(url, json=payload, timeout=endpoint.timeout)
        except (requests.Timeout, requests.ConnectionError) as exc:
            last_error = exc
            continue
        if resp.status_code in RETRYABLE_STATUSES or resp.status_code >= 500:
            last_error = BackendError(f"{path}: server returned {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise BackendError(f"{path}: HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise ProtocolError(f"{path}: response is not JSON") from exc
        if not isinstance(body, dict):
            raise ProtocolError(f"{path}: response must be a JSON object")
        return body
    raise BackendError(f"{path}: no response after {endpoint.max_retries + 1} attempts "
                       f"({last_error})")


def validate_prob_vector(probs, n_labels: int, context: str) -> np.ndarray:
    if not isinstance(probs, (list, tuple)) or len(probs) != n_labels:
        raise ProtocolError(f"{context}: expected {n_labels} probabilities")
    vec = np.asarray(probs, dtype=np.float64)
    if not np.all(np.isfinite(vec)) or np.any(vec < -1e-9):
        raise ProtocolError(f"{context}: probabilities must be finite and non-negative")
    if abs(float(vec.sum()) - 1.0) > 1e-6:
        raise ProtocolError(f"{context}: probabilities sum to {vec.sum():.6f}, not 1")
    return vec


def validate_scores(scores, n_tokens: int, context: str) -> np.ndarray:
    if not isinstance(scores, (list, tuple)) or len(scores) != n_tokens:
        raise ProtocolError(f"{context}: expected {n_tokens} scores, got "
                            f"{len(scores) if isinstance(scores, (list, tuple)) else type(scores)}")
    vec = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(vec)) or np.any(vec < 0):
        raise ProtocolError(f"{context}: scores must be finite and non-negative")
    return vec


def validate_loss(loss, context: str) -> float:
    if not isinstance(loss, (int, float)) or isinstance(loss, bool):
        raise ProtocolError(f"{context}: loss must be a number")
    value = float(loss)
    if not math.isfinite(value) or value < 0:
        raise ProtocolError(f"{context}: loss must be finite and non-negative")
    return value


def fetch_meta(endpoint: Endpoint) -> dict:
    body = _request(endpoint, "GET", "/v1/meta")
    labels = body.get("labels")
    if not isinstance(labels, list) or not all(isinstance(x, str) for x in labels):
        raise ProtocolError("/v1/meta: labels must be a list of strings")
    return body


class RemotePredictor:
    """PredictorContract over POST /v1/predict and /v1/attribute."""

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint
        meta = fetch_meta(endpoint)
        self._labels = LabelSpace(tuple(meta["labels"]))
        self.name = meta.get("name", endpoint.base_url)

    @property
    def label_space(self) -> LabelSpace:
        return self._labels

    def predict_proba_many(self, token_seqs) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        texts = [detokenize(t) for t in token_seqs]
        for start in range(0, len(texts), self.endpoint.batch_size):
            chunk = texts[start : start + self.endpoint.batch_size]
            body = _request(self.endpoint, "POST", "/v1/predict", {"texts": chunk})
            probs = body.get("probs")
            if not isinstance(probs, list) or len(probs) != len(chunk):
                raise ProtocolError("/v1/predict: need one probability vector per text")
            out.extend(validate_prob_vector(vec, len(self._labels), "/v1/predict")
                       for vec in probs)
        return out

    def predict_proba(self, tokens: TokenSeq) -> np.ndarray:
        if not tokens:
            raise ValueError("cannot predict on empty input")
        return self.predict_proba_many([tokens])[0]

    def attribute(self, tokens: TokenSeq, target_label: str) -> np.ndarray:
        if not tokens:
            raise ValueError("cannot attribute on empty input")
        body = _request(self.endpoint, "POST", "/v1/attribute",
                        {"tokens": list(tokens), "target_label": target_label})
        return validate_scores(body.get("scores"), len(tokens), "/v1/attribute")


class _NoRequeryEditor:
    """Repair-time view of a remote editor: second-level degenerates are not
    re-queried again, just completed with the original span text."""

    def __init__(self, remote: "RemoteEditor"):
        self._remote = remote

    def infill(self, masked, target_label, num_samples, top_k, top_p, rng):
        candidates = self._remote._request_candidates(masked, target_label, num_samples,
                                                      top_k, top_p)
        return [c if is_complete(c, masked) else fill_with_original(c, masked)
                for c in candidates]


class RemoteEditor:
    """EditorContract over POST /v1/infill.

    Servers may answer with structured spans or raw sentinel text; raw text
    goes through the parse/repair pipeline, which needs a predictor to score
    intermediate candidates (without one, unresolved spans keep the original
    text).
    """

    def __init__(self, endpoint: Endpoint, predictor=None,
                 search_config: SearchConfig = SearchConfig()):
        self.endpoint = endpoint
        self.predictor = predictor
        self.search_config = search_config

    def _request_candidates(self, masked: MaskedText, target_label: str | None,
                            num_samples: int, top_k: int, top_p: float) -> list[InfillSet]:
        body = _request(self.endpoint, "POST", "/v1/infill", {
            "masked": render_masked(masked),
            "target_label": target_label,
            "num_return": num_samples,
            "top_k": top_k,
            "top_p": top_p,
        })
        raw_candidates = body.get("candidates")
        if not isinstance(raw_candidates, list) or len(raw_candidates) != num_samples:
            got = len(raw_candidates) if isinstance(raw_candidates, list) else "none"
            raise ProtocolError(f"/v1/infill: expected {num_samples} candidates, got {got}")
        n_spans = len(masked.spans)
        out: list[InfillSet] = []
        for i, cand in enumerate(raw_candidates):
            if not isinstance(cand, dict):
                raise ProtocolError(f"/v1/infill: candidate {i} must be an object")
            if "spans" in cand:
                spans = cand["spans"]
                if not isinstance(spans, list) or len(spans) != n_spans:
                    raise ProtocolError(f"/v1/infill: candidate {i} must carry {n_spans} spans")
                out.append({k: tokenize(s) for k, s in enumerate(spans)})
            elif "raw" in cand:
                if not isinstance(cand["raw"], str):
                    raise ProtocolError(f"/v1/infill: candidate {i} raw must be a string")
                out.append(parse_raw_generation(cand["raw"], masked))
            else:
                raise ProtocolError(f"/v1/infill: candidate {i} needs 'spans' or 'raw'")
        return out

    def infill(self, masked: MaskedText, target_label: str | None, num_samples: int,
               top_k: int, top_p: float, rng: np.random.Generator) -> list[InfillSet]:
        if not masked.spans:
            raise ValueError("nothing to infill: masked text has no spans")
        candidates = self._request_candidates(masked, target_label, num_samples,
                                              top_k, top_p)
        complete = [c for c in candidates if is_complete(c, masked)]
        partials = [c for c in candidates if not is_complete(c, masked)]
        if not partials:
            return complete
        needed = num_samples - len(complete)
        cfg = replace(self.search_config, top_k=top_k, top_p=top_p)
        if self.predictor is not None:
            repaired = repair_degenerate(
                partials, masked, _NoRequeryEditor(self), target_label, cfg, rng,
                predictor=self.predictor, contrast_label=target_label,
                num_return=needed)
        else:
            repaired = [fill_with_original(p, masked) for p in partials][:needed]
        while len(repaired) < needed:
            # short repair output (e.g. an early flip): repeat it up to the contract
            repaired.append(dict(repaired[0]) if repaired
                            else fill_with_original(partials[0], masked))
        return complete + repaired


class RemoteFluencyScorer:
    """FluencyScorerContract over POST /v1/pll."""

    def __init__(self, endpoint: Endpoint):
        self.endpoint = endpoint

    def pseudo_loss(self, tokens: TokenSeq) -> float:
        if not tokens:
            raise ValueError("pseudo_loss is undefined for empty input")
        body = _request(self.endpoint, "POST", "/v1/pll", {"text": detokenize(tokens)})
        return validate_loss(body.get("loss"), "/v1/pll")
