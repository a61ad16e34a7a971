"""Partition proposals over the unassigned instances.

Spherical k-means (cosine distance, seeded k-means++ init) because stored
embeddings are unit-norm and every other score in the engine is a cosine.
Density clustering runs HDBSCAN on the unit sphere with euclidean metric,
which is monotone-equivalent to cosine distance there (d^2 = 2 - 2cos).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.cluster import HDBSCAN

from .errors import InvalidArgumentError
from .store import CorpusStore

MAX_KMEANS_ROUNDS = 300


@dataclass
class Partition:
    partition_id: str
    member_ids: list[str]
    centroid: np.ndarray  # unit norm
    cohesion: float  # mean member-to-centroid cosine
    is_noise: bool = False

    @property
    def size(self) -> int:
        return len(self.member_ids)

    def to_json(self) -> dict:
        from .store import encode_f32

        return {
            "partition_id": self.partition_id,
            "member_ids": list(self.member_ids),
            "centroid": encode_f32(self.centroid),
            "cohesion": self.cohesion,
            "is_noise": self.is_noise,
        }

    @classmethod
    def from_json(cls, obj) -> "Partition":
        from .store import decode_f32

        return cls(
            partition_id=obj["partition_id"],
            member_ids=list(obj["member_ids"]),
            centroid=decode_f32(obj["centroid"]),
            cohesion=obj["cohesion"],
            is_noise=obj.get("is_noise", False),
        )


def default_min_cluster_size(population: int) -> int:
    return max(15, int(round(0.005 * population)))


def _unit_mean(rows: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    mean = rows.mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm == 0.0:
        return fallback
    return mean / norm


def _kmeanspp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    chosen = [int(rng.integers(n))]
    centers[0] = x[chosen[0]]
    # squared cosine distance to the nearest chosen center
    d = np.maximum(1.0 - x @ centers[0], 0.0)
    for j in range(1, k):
        weights = d * d
        total = weights.sum()
        if total <= 0.0:
            # remaining points coincide with chosen centers; take the first unchosen
            idx = next(i for i in range(n) if i not in set(chosen))
        else:
            idx = int(rng.choice(n, p=weights / total))
        chosen.append(idx)
        centers[j] = x[idx]
        d = np.minimum(d, np.maximum(1.0 - x @ centers[j], 0.0))
    return centers


def spherical_kmeans(
    x: np.ndarray, k: int, seed: int
) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations on the unit sphere.

    Returns (labels, centroids, per-round objective history) where the
    objective is sum(1 - cos(point, assigned centroid)).
    """
    n = x.shape[0]
    if k < 1 or k > n:
        raise InvalidArgumentError(f"k={k} invalid for population {n}")
    rng = np.random.default_rng(seed)
    x = np.asarray(x, dtype=np.float64)
    centers = _kmeanspp_init(x, k, rng)
    labels = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    for _ in range(MAX_KMEANS_ROUNDS):
        sims = x @ centers.T
        new_labels = np.argmax(sims, axis=1)
        # repair empty clusters by splitting the largest
        counts = np.bincount(new_labels, minlength=k)
        while (counts == 0).any():
            empty = int(np.argmin(counts))
            largest = int(np.argmax(counts))
            members = np.nonzero(new_labels == largest)[0]
            farthest = members[int(np.argmin(sims[members, largest]))]
            new_labels[farthest] = empty
            counts = np.bincount(new_labels, minlength=k)
        if (new_labels == labels).all():
            break
        labels = new_labels
        for j in range(k):
            rows = x[labels == j]
            centers[j] = _unit_mean(rows, centers[j])
        history.append(float(np.sum(1.0 - np.take_along_axis(
            x @ centers.T, labels[:, None], axis=1))))
    return labels, centers, history


def kmeans_partition(
    store: CorpusStore, ids: list[str], k: int, seed: int
) -> list[Partition]:
    """k partitions of the given (typically unassigned) instances."""
    ids = sorted(ids)
    if k < 2:
        raise InvalidArgumentError(f"k must be >= 2, got {k}")
    if len(ids) < k:
        raise InvalidArgumentError(f"population {len(ids)} smaller than k={k}")
    id_list, mat = store.embedding_matrix(ids)
    labels, centers, _ = spherical_kmeans(mat, k, seed)
    return _build_partitions(id_list, mat, labels, centers)


def density_partition(
    store: CorpusStore, ids: list[str], min_cluster_size: int | None = None
) -> list[Partition]:
    """HDBSCAN clusters plus one flagged noise bucket for sparse points."""
    ids = sorted(ids)
    id_list, mat = store.embedding_matrix(ids)
    n = len(id_list)
    if min_cluster_size is None:
        min_cluster_size = default_min_cluster_size(n)
    if min_cluster_size < 2:
        raise InvalidArgumentError(f"min_cluster_size must be >= 2, got {min_cluster_size}")
    if n == 0:
        return []
    x = mat.astype(np.float64)
    if n < min_cluster_size:
        return [_make_partition("noise", id_list, x, is_noise=True)]
    if np.allclose(x, x[0], atol=1e-12):
        # zero-diameter population: one cluster, no noise
        return [_make_partition("p0", id_list, x)]
    labels = HDBSCAN(min_cluster_size=min_cluster_size, metric="euclidean").fit_predict(x)
    partitions: list[Partition] = []
    for j in sorted(set(labels)):
        members = [i for i in range(n) if labels[i] == j]
        sub_ids = [id_list[i] for i in members]
        sub = x[members]
        if j == -1:
            partitions.append(_make_partition("noise", sub_ids, sub, is_noise=True))
        else:
            partitions.append(_make_partition(f"p{j}", sub_ids, sub))
    # keep dense clusters first, noise bucket last
    partitions.sort(key=lambda p: (p.is_noise, p.partition_id))
    return partitions


def _make_partition(pid: str, ids: list[str], rows: np.ndarray, is_noise: bool = False) -> Partition:
    centroid = _unit_mean(rows, rows[0] / np.linalg.norm(rows[0]))
    cohesion = float(np.mean(rows @ centroid))
    return Partition(pid, list(ids), centroid.astype(np.float32), cohesion, is_noise)


def _build_partitions(
    ids: list[str], mat: np.ndarray, labels: np.ndarray, centers: np.ndarray
) -> list[Partition]:
    x = mat.astype(np.float64)
    partitions = []
    for j in range(centers.shape[0]):
        members = np.nonzero(labels == j)[0]
        sub_ids = [ids[i] for i in members]
        partitions.append(_make_partition(f"p{j}", sub_ids, x[members]))
    return partitions


def rank_members(store: CorpusStore, partition: Partition, order: str = "closest-first") -> list[str]:
    """Members sorted by cosine to the partition centroid; ties by id."""
    if order not in ("closest-first", "farthest-first"):
        raise InvalidArgumentError(f"order must be closest-first|farthest-first, got {order!r}")
    if not partition.member_ids:
        raise InvalidArgumentError("cannot rank an empty partition")
    ids, mat = store.embedding_matrix(partition.member_ids)
    sims = mat.astype(np.float64) @ partition.centroid.astype(np.float64)
    sign = -1.0 if order == "closest-first" else 1.0
    ranked = sorted(range(len(ids)), key=lambda i: (sign * sims[i], ids[i]))
    return [ids[i] for i in ranked]


def balance_stats(partitions: list[Partition]) -> dict:
    """Spread of partition sizes; lets the guide judge "roughly equal"."""
    sizes = [p.size for p in partitions if not p.is_noise]
    if not sizes:
        return {"count": 0, "min": 0, "max": 0, "mean": 0.0, "ratio_max_min": 0.0}
    return {
        "count": len(sizes),
        "min": int(min(sizes)),
        "max": int(max(sizes)),
        "mean": float(np.mean(sizes)),
        "ratio_max_min": float(max(sizes) / max(1, min(sizes))),
    }
