"""Embedding providers: a deterministic offline mock and an HTTP client.

Both expose the same surface: ``dimension``, ``token_limit``,
``count_tokens(text)``, ``split_text(text, limit)``, ``embed(texts)`` and
``config_dict()`` (used to key the on-disk cache).
"""

from __future__ import annotations

import hashlib
import logging
import os
import re
import threading
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Protocol, runtime_checkable

import httpx
import numpy as np

from ..errors import ConfigError, ProviderError

logger = logging.getLogger(__name__)

API_KEY_ENV = "EMBED_API_KEY"


@runtime_checkable
class EmbeddingProvider(Protocol):
    dimension: int
    token_limit: int

    def count_tokens(self, text: str) -> int: ...

    def split_text(self, text: str, limit: int) -> list[str]: ...

    def embed(self, texts: list[str]) -> list[np.ndarray]: ...

    def config_dict(self) -> dict: ...


class RegexTokenizer:
    """Word runs and single punctuation marks count as one token each.

    Splitting happens at token starts, so the pieces concatenate back to the
    original string and their counts add up.
    """

    pattern = re.compile(r"\w+|[^\w\s]")

    def count(self, text: str) -> int:
        return len(self.pattern.findall(text))

    def split(self, text: str, limit: int) -> list[str]:
        starts = [m.start() for m in self.pattern.finditer(text)]
        if len(starts) <= limit:
            return [text]
        cuts = [0] + starts[limit::limit] + [len(text)]
        return [text[a:b] for a, b in zip(cuts, cuts[1:])]

    def words(self, text: str) -> list[str]:
        return [w.lower() for w in self.pattern.findall(text)]


class MockProvider:
    """Bag-of-tokens random projection: a text embeds to the normalized sum of
    seeded per-token Gaussian vectors, so output depends only on (seed, text)
    and texts sharing words point in similar directions.

    With ``record=True`` every produced vector is logged so tests can map an
    output back to the exact input string (:meth:`decode`).
    """

    kind = "mock"

    def __init__(self, dimension: int = 64, token_limit: int = 8191, seed: int = 0,
                 scale: float = 1.0, record: bool = False):
        if dimension <= 0 or token_limit <= 0:
            raise ConfigError("mock provider needs positive dimension and token_limit")
        self.dimension = int(dimension)
        self.token_limit = int(token_limit)
        self.seed = int(seed)
        self.scale = float(scale)
        self.record = record
        self.tokenizer = RegexTokenizer()
        self.requests = 0
        self.inputs: list[str] = []
        self._log: dict[bytes, str] = {}
        self._vocab: dict[str, int] = {}
        self._rows: list[np.ndarray] = []
        self._matrix = np.zeros((0, self.dimension))
        self._lock = threading.Lock()

    def count_tokens(self, text: str) -> int:
        return self.tokenizer.count(text)

    def split_text(self, text: str, limit: int) -> list[str]:
        return self.tokenizer.split(text, limit)

    def config_dict(self) -> dict:
        return {"kind": "mock", "dimension": self.dimension, "seed": self.seed, "scale": self.scale}

    def _token_vector(self, token: str) -> np.ndarray:
        digest = hashlib.blake2b(f"{self.seed}\x00{token}".encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "little"))
        return rng.standard_normal(self.dimension)

    def _ids(self, words: list[str]) -> np.ndarray:
        vocab = self._vocab
        new = [w for w in dict.fromkeys(words) if w not in vocab]
        for w in new:
            vocab[w] = len(self._rows)
            self._rows.append(self._token_vector(w))
        if new:
            self._matrix = np.vstack(self._rows)
        return np.fromiter((vocab[w] for w in words), dtype=np.int64, count=len(words))

    def embed_one(self, text: str) -> np.ndarray:
        words = self.tokenizer.words(text) or ["\x00" + text]
        with self._lock:
            ids = self._ids(words)
            matrix = self._matrix
        vec = matrix[ids].sum(axis=0)
        norm = np.linalg.norm(vec)
        vec = vec / norm if norm > 0 else vec
        return self.scale * vec

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        out = [self.embed_one(t) for t in texts]
        with self._lock:
            self.requests += 1
            self.inputs.extend(texts)
            if self.record:
                for t, v in zip(texts, out):
                    self._log[v.tobytes()] = t
        return out

    def decode(self, vector: np.ndarray) -> str:
        """Input text that produced ``vector`` (record mode only)."""
        return self._log[np.asarray(vector, dtype=np.float64).tobytes()]


class RateLimiter:
    """At most ``rpm`` acquisitions in any 60-second sliding window."""

    window = 60.0

    def __init__(self, rpm: int, clock=time.monotonic, sleep=time.sleep):
        if rpm <= 0:
            raise ConfigError("rpm must be positive")
        self.rpm = int(rpm)
        self.clock = clock
        self.sleep = sleep
        self._stamps: deque[float] = deque()
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            while True:
                now = self.clock()
                # absolute deadlines avoid a rounding loop where now - stamp stays just under window
                while self._stamps and now >= self._stamps[0] + self.window:
                    self._stamps.popleft()
                if len(self._stamps) < self.rpm:
                    self._stamps.append(now)
                    return now
                self.sleep(self._stamps[0] + self.window - now)


class RemoteProvider:
    """Client for an embeddings endpoint speaking ``{"model", "input": [...]}``.

    Requests are rate limited and retried with capped exponential backoff on
    HTTP 429/5xx and transport errors.
    """

    kind = "remote"
    retry_statuses = frozenset({408, 409, 429, 500, 502, 503, 504})

    def __init__(self, endpoint: str, model: str = "text-embedding-ada-002", dimension: int = 1536,
                 token_limit: int = 8191, rpm: int = 60, max_retries: int = 5, api_key: str | None = None,
                 backoff_base: float = 1.0, backoff_max: float = 30.0, inputs_per_request: int = 16,
                 max_workers: int = 1, timeout: float = 60.0, transport: httpx.BaseTransport | None = None,
                 clock=time.monotonic, sleep=time.sleep, tokenizer=None):
        if not endpoint:
            raise ConfigError("remote provider needs an endpoint URL")
        self.endpoint = endpoint
        self.model = model
        self.dimension = int(dimension)
        self.token_limit = int(token_limit)
        self.max_retries = int(max_retries)
        self.backoff_base = backoff_base
        self.backoff_max = backoff_max
        self.inputs_per_request = int(inputs_per_request)
        self.max_workers = int(max_workers)
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        self.tokenizer = tokenizer or RegexTokenizer()
        self.limiter = RateLimiter(rpm, clock=clock, sleep=sleep)
        self.sleep = sleep
        self.requests = 0
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        self._lock = threading.Lock()

    def count_tokens(self, text: str) -> int:
        return self.tokenizer.count(text)

    def split_text(self, text: str, limit: int) -> list[str]:
        return self.tokenizer.split(text, limit)

    def config_dict(self) -> dict:
        return {"kind": "remote", "endpoint": self.endpoint, "model": self.model, "dimension": self.dimension}

    def close(self):
        self._client.close()

    def _parse(self, payload, n: int) -> list[np.ndarray]:
        if isinstance(payload, dict) and isinstance(payload.get("data"), list):
            items = sorted(payload["data"], key=lambda d: d.get("index", 0))
            vectors = [d.get("embedding") for d in items]
        elif isinstance(payload, dict) and isinstance(payload.get("embeddings"), list):
            vectors = payload["embeddings"]
        else:
            raise ProviderError("unrecognized embeddings response")
        if len(vectors) != n:
            raise ProviderError(f"expected {n} embeddings, got {len(vectors)}")
        out = []
        for v in vectors:
            arr = np.asarray(v, dtype=np.float64)
            if arr.shape != (self.dimension,):
                raise ProviderError(f"embedding has shape {arr.shape}, expected ({self.dimension},)")
            out.append(arr)
        return out

    def _request(self, texts: list[str]) -> list[np.ndarray]:
        body = {"model": self.model, "input": texts}
        last = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(min(self.backoff_base * 2 ** (attempt - 1), self.backoff_max))
            self.limiter.acquire()
            with self._lock:
                self.requests += 1
            try:
                resp = self._client.post(self.endpoint, json=body)
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
                continue
            if resp.status_code in self.retry_statuses:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise ProviderError(f"invalid JSON response: {exc}") from exc
            return self._parse(payload, len(texts))
        raise ProviderError(f"giving up after {self.max_retries + 1} attempts ({last})")

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        groups = [texts[i:i + self.inputs_per_request] for i in range(0, len(texts), self.inputs_per_request)]
        if self.max_workers > 1 and len(groups) > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                results = list(pool.map(self._request, groups))
        else:
            results = [self._request(g) for g in groups]
        return [v for group in results for v in group]


def make_provider(config: dict, **overrides):
    """Build a provider from the JSON provider config."""
    cfg = {**config, **overrides}
    kind = cfg.pop("kind", "mock")
    known = {"dimension", "token_limit", "model", "endpoint", "rpm", "seed", "max_retries",
             "inputs_per_request", "max_workers", "scale"}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigError(f"unknown provider config fields: {sorted(unknown)}")
    if kind == "mock":
        return MockProvider(dimension=cfg.get("dimension", 64), token_limit=cfg.get("token_limit", 8191),
                            seed=cfg.get("seed", 0), scale=cfg.get("scale", 1.0))
    if kind == "remote":
        return RemoteProvider(endpoint=cfg.get("endpoint", ""), model=cfg.get("model", "text-embedding-ada-002"),
                              dimension=cfg.get("dimension", 1536), token_limit=cfg.get("token_limit", 8191),
                              rpm=cfg.get("rpm", 60), max_retries=cfg.get("max_retries", 5),
                              inputs_per_request=cfg.get("inputs_per_request", 16),
                              max_workers=cfg.get("max_workers", 1))
    raise ConfigError(f"unknown provider kind {kind!r}")
