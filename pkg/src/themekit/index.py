"""Cosine similarity primitives and exact nearest-neighbor search.

Search is an exact flat scan with vectorized dot products; stored vectors
are unit-norm so cosine reduces to a dot product. The index keeps an
immutable (ids, matrix) snapshot and swaps it whenever the store's
embedding set changes, so concurrent queries always see a consistent view.
"""

from __future__ import annotations

import threading
from typing import NamedTuple

import numpy as np

from .errors import DimensionMismatchError, InvalidArgumentError, UnscoreableThemeError, ZeroVectorError
from .store import CorpusStore, Instance


class NeighborHit(NamedTuple):
    id: str
    similarity: float


def cosine(u, v) -> float:
    """u.v / (|u||v|). Raises on zero vectors or mismatched dimensions."""
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"cosine: shapes {a.shape} and {b.shape} differ")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(np.dot(a, b) / (na * nb))


class EmbedIndex:
    """Exact k-NN over the store, filterable by assignment state."""

    def __init__(self, store: CorpusStore, embedder=None):
        self.store = store
        self.embedder = embedder
        self._lock = threading.Lock()
        self._snapshot: tuple[int, list[str], np.ndarray] | None = None

    def _current(self) -> tuple[list[str], np.ndarray]:
        snap = self._snapshot
        if snap is None or snap[0] != self.store.version:
            with self._lock:
                snap = self._snapshot
                if snap is None or snap[0] != self.store.version:
                    version = self.store.version
                    ids, mat = self.store.embedding_matrix()
                    snap = (version, ids, mat.astype(np.float64))
                    self._snapshot = snap
        return snap[1], snap[2]

    def _candidate_mask(self, ids: list[str], flt: str) -> np.ndarray:
        if flt == "all":
            return np.ones(len(ids), dtype=bool)
        if flt == "unassigned":
            return np.array(
                [not self.store.get_instance(i).assignment.assigned for i in ids], dtype=bool
            )
        # anything else is a theme id
        return np.array(
            [self.store.get_instance(i).assignment.theme_id == flt for i in ids], dtype=bool
        )

    def nearest_neighbors(self, query, k: int, flt: str = "all") -> list[NeighborHit]:
        """Top-k by cosine under the filter; ties break by ascending id."""
        if k < 1:
            raise InvalidArgumentError(f"k must be >= 1, got {k}")
        ids, mat = self._current()
        q = np.asarray(query, dtype=np.float64)
        if mat.shape[0] and q.shape != (mat.shape[1],):
            raise DimensionMismatchError(
                f"query has dimension {q.shape}, index expects ({mat.shape[1]},)"
            )
        nq = float(np.linalg.norm(q))
        if nq == 0.0:
            raise ZeroVectorError("cannot search with a zero query vector")
        mask = self._candidate_mask(ids, flt)
        if not mask.any():
            return []
        sims = mat @ (q / nq)
        cand = np.nonzero(mask)[0]
        order = sorted(cand, key=lambda i: (-sims[i], ids[i]))[:k]
        return [NeighborHit(ids[i], float(sims[i])) for i in order]

    def query_text(self, text: str, k: int, flt: str = "all") -> list[NeighborHit]:
        if not text:
            raise InvalidArgumentError("query text must be non-empty")
        if self.embedder is None:
            raise InvalidArgumentError("no embedder client configured for text queries")
        vec = self.embedder.embed([text])[0]
        return self.nearest_neighbors(vec, k, flt)


def theme_similarity(instance: Instance, theme) -> float:
    """Max cosine between the instance and the theme's positive exemplars
    (good examples and explanatory phrases; bad examples never score)."""
    positives = theme.positive_embeddings()
    if positives.shape[0] == 0:
        raise UnscoreableThemeError(
            f"theme {theme.theme_id!r} has no good examples or phrases",
            detail={"theme_id": theme.theme_id},
        )
    sims = positives.astype(np.float64) @ np.asarray(instance.embedding, dtype=np.float64)
    return float(sims.max())


def theme_similarity_matrix(embeddings: np.ndarray, themes) -> np.ndarray:
    """(n_instances, n_themes) of max-cosine scores; themes in given order."""
    x = np.asarray(embeddings, dtype=np.float64)
    out = np.empty((x.shape[0], len(themes)), dtype=np.float64)
    for j, theme in enumerate(themes):
        positives = theme.positive_embeddings()
        if positives.shape[0] == 0:
            raise UnscoreableThemeError(
                f"theme {theme.theme_id!r} has no good examples or phrases",
                detail={"theme_id": theme.theme_id},
            )
        out[:, j] = (x @ positives.astype(np.float64).T).max(axis=1)
    return out
