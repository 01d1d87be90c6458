"""On-disk embedding cache.

One file per ``sha256(provider config, text)``: a little-endian uint32
dimension header followed by float32 components. Vectors are always
returned at float32 precision, cached or not, so warm and cold runs agree.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
import threading
from pathlib import Path

import numpy as np

_HEADER = struct.Struct("<I")


def write_vector(path: Path, vec: np.ndarray) -> None:
    data = _HEADER.pack(vec.shape[0]) + np.asarray(vec, dtype="<f4").tobytes()
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_vector(path: Path) -> np.ndarray | None:
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        return None
    if len(raw) < _HEADER.size:
        return None
    (dim,) = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size:]
    if len(body) != 4 * dim:
        return None
    return np.frombuffer(body, dtype="<f4").astype(np.float64)


def to_float32(vec) -> np.ndarray:
    return np.asarray(vec, dtype=np.float64).astype("<f4").astype(np.float64)


class CachedProvider:
    """Wraps a provider; consults ``cache_dir`` before calling it."""

    def __init__(self, inner, cache_dir):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.hits = 0
        self.misses = 0
        self._prefix = hashlib.sha256(json.dumps(inner.config_dict(), sort_keys=True).encode()).hexdigest()
        self._lock = threading.Lock()

    @property
    def dimension(self) -> int:
        return self.inner.dimension

    @property
    def token_limit(self) -> int:
        return self.inner.token_limit

    def count_tokens(self, text: str) -> int:
        return self.inner.count_tokens(text)

    def split_text(self, text: str, limit: int) -> list[str]:
        return self.inner.split_text(text, limit)

    def config_dict(self) -> dict:
        return self.inner.config_dict()

    def path_for(self, text: str) -> Path:
        key = hashlib.sha256((self._prefix + "\x00" + text).encode("utf-8")).hexdigest()
        return self.cache_dir / f"{key}.f32"

    def embed(self, texts: list[str]) -> list[np.ndarray]:
        out: list[np.ndarray | None] = []
        missing = []
        for i, text in enumerate(texts):
            vec = read_vector(self.path_for(text))
            if vec is None or vec.shape[0] != self.dimension:
                missing.append(i)
                out.append(None)
            else:
                out.append(vec)
        if missing:
            fresh = self.inner.embed([texts[i] for i in missing])
            for i, vec in zip(missing, fresh):
                vec = to_float32(vec)
                write_vector(self.path_for(texts[i]), vec)
                out[i] = vec
        with self._lock:
            self.hits += len(texts) - len(missing)
            self.misses += len(missing)
        return out
