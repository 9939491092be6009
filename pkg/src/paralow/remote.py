"""HTTP client exposing a wire-protocol inference server as a LanguageModel.

Protocol (JSON over HTTP, UTF-8):

* ``GET /v1/vocab`` -> ``{"vocab_size", "eos_id", "bos_id", "vocab_hash",
  "tokens"}``; the hash is SHA-256 over the newline-joined token strings.
* ``POST /v1/logprobs`` with ``{"tokens": [int, ...]}`` -> ``{"log_probs":
  [float, ...]}``, natural log, normalized within 1e-3.
* ``POST /v1/tokenize`` with ``{"text": str}`` -> ``{"tokens": [...]}``;
  ``POST /v1/detokenize`` is the inverse.

Contexts travel as token ids, never text, so client and server cannot
drift on tokenization. The client prepends the server's BOS id (when it
declares one) to every context; servers never prepend anything. Every
logprob vector is validated on arrival and rejected with a
ProtocolViolationError naming the failed check.
"""

from __future__ import annotations

import threading
from collections import OrderedDict
from typing import Any, Sequence

import numpy as np
import requests

from .core import REMOTE_NORMALIZATION_TOL, Vocabulary, log_prob_violation, vocab_hash
from .errors import ModelUnavailableError, ProtocolViolationError


class RemoteModel:
    """LanguageModel (with text surface) backed by a wire-protocol server.

    Queries are read-only and deterministic on the server side, so
    responses are LRU-cached by context. The handle may be shared across
    threads; ``max_concurrency`` caps in-flight requests.
    """

    def __init__(
        self,
        base_url: str,
        timeout_ms: int = 30_000,
        retry_limit: int = 2,
        max_concurrency: int = 8,
        cache_size: int = 1024,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_ms / 1000.0
        self.retry_limit = retry_limit
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(max_concurrency)
        self._cache: OrderedDict[tuple[int, ...], np.ndarray] = OrderedDict()
        self._cache_size = cache_size
        self._cache_lock = threading.Lock()
        self._vocabulary = self._fetch_vocab()

    @property
    def vocabulary(self) -> Vocabulary:
        return self._vocabulary

    def _request(self, method: str, path: str, body: dict | None = None) -> Any:
        url = f"{self.base_url}{path}"
        last_error: Exception | None = None
        for _ in range(self.retry_limit + 1):
            try:
                with self._gate:
                    resp = self._session.request(method, url, json=body, timeout=self.timeout_s)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code >= 500:
                last_error = ModelUnavailableError(f"{url} answered {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolViolationError(f"{url} answered {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError:
                raise ProtocolViolationError(f"{url} returned a non-JSON body") from None
        raise ModelUnavailableError(f"{url} unreachable after {self.retry_limit + 1} attempts: {last_error}")

    def _fetch_vocab(self) -> Vocabulary:
        data = self._request("GET", "/v1/vocab")
        for key in ("vocab_size", "eos_id", "vocab_hash", "tokens"):
            if key not in data:
                raise ProtocolViolationError(f"vocab response is missing {key!r}")
        tokens = tuple(str(t) for t in data["tokens"])
        if len(tokens) != int(data["vocab_size"]):
            raise ProtocolViolationError(
                f"vocab response: {len(tokens)} tokens but vocab_size={data['vocab_size']}"
            )
        expected = vocab_hash(tokens)
        if str(data["vocab_hash"]).lower() != expected:
            raise ProtocolViolationError("vocab response: vocab_hash does not match the token list")
        bos = data.get("bos_id")
        return Vocabulary(
            tokens=tokens,
            eos_id=int(data["eos_id"]),
            bos_id=None if bos is None else int(bos),
            vocab_hash=expected,
        )

    def next_log_probs(self, context: Sequence[int]) -> np.ndarray:
        vocab = self._vocabulary
        vocab.check_ids(context)
        key = tuple(context)
        with self._cache_lock:
            cached = self._cache.get(key)
            if cached is not None:
                self._cache.move_to_end(key)
                return cached.copy()
        sent = list(key) if vocab.bos_id is None else [vocab.bos_id, *key]
        data = self._request("POST", "/v1/logprobs", {"tokens": sent})
        if "log_probs" not in data:
            raise ProtocolViolationError("logprobs response is missing 'log_probs'")
        values = np.asarray(data["log_probs"], dtype=np.float64)
        problem = log_prob_violation(values, vocab.size, REMOTE_NORMALIZATION_TOL)
        if problem is not None:
            raise ProtocolViolationError(f"logprobs response rejected: {problem}")
        with self._cache_lock:
            self._cache[key] = values
            self._cache.move_to_end(key)
            while len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return values.copy()

    def tokenize(self, text: str) -> list[int]:
        data = self._request("POST", "/v1/tokenize", {"text": text})
        if "tokens" not in data:
            raise ProtocolViolationError("tokenize response is missing 'tokens'")
        ids = [int(t) for t in data["tokens"]]
        self._vocabulary.check_ids(ids)
        return ids

    def detokenize(self, ids: Sequence[int]) -> str:
        self._vocabulary.check_ids(ids)
        data = self._request("POST", "/v1/detokenize", {"tokens": list(ids)})
        if "text" not in data:
            raise ProtocolViolationError("detokenize response is missing 'text'")
        return str(data["text"])


def connect(base_url: str, **kwargs) -> RemoteModel:
    """Connect to an inference server and return the validated handle.

    Fetches and verifies the vocabulary once; the handle is immutable for
    the session after that.
    """
    return RemoteModel(base_url, **kwargs)
