"""Embedder clients.

The engine never encodes text in-process. Vectors come from an external
service speaking a one-route contract:

    POST <endpoint>  {"texts": ["..."]}  ->  {"vectors": [[f32 x d], ...]}

Results are cached by text hash, so repeated queries for identical text
never hit the wire twice and are guaranteed identical even against a
non-deterministic provider.

``HashEmbedder`` is a self-contained deterministic stand-in (unit vector
drawn from a text-hash-seeded RNG) used when no endpoint is configured;
it keeps offline sessions and test corpora fully reproducible.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import httpx
import numpy as np

from .errors import DimensionMismatchError, EmbedderUnavailableError, InvalidArgumentError


class Embedder(Protocol):
    dim: int
    model_id: str

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        """Return an (n, dim) float32 array, one row per input text."""
        ...


def _text_key(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class HttpEmbedderClient:
    """Client for the external encoder endpoint, with a by-text-hash cache.

    ``calls`` counts actual round-trips; cache hits do not increment it.
    """

    def __init__(
        self,
        endpoint: str,
        dim: int,
        model_id: str = "external",
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.dim = dim
        self.model_id = model_id
        self.calls = 0
        self._cache: dict[str, np.ndarray] = {}
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        for t in texts:
            if not t:
                raise InvalidArgumentError("cannot embed empty text")
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        misses: list[int] = []
        for i, t in enumerate(texts):
            hit = self._cache.get(_text_key(t))
            if hit is None:
                misses.append(i)
            else:
                out[i] = hit
        if misses:
            fetched = self._fetch([texts[i] for i in misses])
            for i, vec in zip(misses, fetched):
                self._cache[_text_key(texts[i])] = vec
                out[i] = vec
        return out

    def _fetch(self, texts: list[str]) -> np.ndarray:
        try:
            resp = self._client.post(self.endpoint, json={"texts": texts})
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise EmbedderUnavailableError(
                f"embedder at {self.endpoint} unreachable: {exc}; retry once the service is up",
                detail={"endpoint": self.endpoint},
            ) from exc
        vectors = resp.json().get("vectors")
        if vectors is None or len(vectors) != len(texts):
            raise EmbedderUnavailableError(
                f"embedder at {self.endpoint} returned a malformed payload"
            )
        arr = np.asarray(vectors, dtype=np.float32)
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise DimensionMismatchError(
                f"embedder returned dimension {arr.shape[-1] if arr.ndim else '?'}, expected {self.dim}"
            )
        self.calls += 1
        return arr


class HashEmbedder:
    """Deterministic offline embedder: unit vector seeded by the text hash.

    Identical text maps to an identical vector in any process, which makes
    fixture corpora and cached-query tests reproducible without a network.
    """

    def __init__(self, dim: int = 32, seed: int = 0, model_id: str = "hash"):
        if dim < 2:
            raise InvalidArgumentError("embedding dimension must be >= 2")
        self.dim = dim
        self.seed = seed
        self.model_id = f"{model_id}-{dim}d"
        self.calls = 0

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for i, t in enumerate(texts):
            if not t:
                raise InvalidArgumentError("cannot embed empty text")
            digest = hashlib.sha256(f"{self.seed}:{t}".encode("utf-8")).digest()
            rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
            v = rng.standard_normal(self.dim)
            out[i] = (v / np.linalg.norm(v)).astype(np.float32)
        self.calls += 1
        return out


def make_embedder(endpoint: str | None, dim: int, seed: int = 0) -> Embedder:
    if endpoint:
        return HttpEmbedderClient(endpoint, dim=dim)
    return HashEmbedder(dim=dim, seed=seed)
