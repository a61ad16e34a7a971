"""Synthetic corpora with planted structure.

Generates unit-norm embedding blobs around well-separated directions, with
categorical concept values correlated to blob membership at a chosen rate.
Used by the end-to-end benchmark and by clustering tests that need ground
truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .store import ConceptSchema, ConceptSpec


@dataclass
class PlantedCorpus:
    records: list[dict]
    schema: ConceptSchema
    blob_of: dict[str, int]  # instance id -> planted blob index
    centers: np.ndarray

    def ids_in_blob(self, blob: int) -> list[str]:
        return sorted(rid for rid, b in self.blob_of.items() if b == blob)


def _random_directions(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Well-spread unit directions: random Gaussian, then a few repulsion
    sweeps to keep pairwise cosines low."""
    dirs = rng.standard_normal((n, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    for _ in range(50):
        sims = dirs @ dirs.T
        np.fill_diagonal(sims, -1.0)
        worst = np.argmax(sims)
        i, j = divmod(worst, n)
        if sims[i, j] < 0.25:
            break
        push = dirs[i] - dirs[j]
        norm = np.linalg.norm(push)
        if norm < 1e-9:
            push = rng.standard_normal(dim)
            norm = np.linalg.norm(push)
        dirs[i] = dirs[i] + 0.5 * push / norm
        dirs[j] = dirs[j] - 0.5 * push / norm
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


_VOCAB_SIZE = 12


def planted_corpus(
    n_instances: int,
    n_blobs: int,
    dim: int = 32,
    noise: float = 0.9,
    concept_correlation: float = 0.8,
    concepts: dict[str, int] | None = None,
    outliers: int = 0,
    seed: int = 0,
) -> PlantedCorpus:
    """Build a corpus of ``n_instances`` spread evenly over ``n_blobs``.

    ``concepts`` maps concept name -> number of values; each blob is tied
    to one value (cycled) and members carry it with probability
    ``concept_correlation``, otherwise a uniform draw over the rest.
    ``outliers`` extra instances are sampled uniformly on the sphere with
    blob index -1.
    """
    rng = np.random.default_rng(seed)
    if concepts is None:
        concepts = {"stance": max(2, min(3, n_blobs)), "frame": max(2, min(4, n_blobs))}
    centers = _random_directions(n_blobs, dim, rng)
    schema = ConceptSchema(
        {
            name: ConceptSpec(tuple(f"{name}_v{i}" for i in range(k)), "predicted")
            for name, k in concepts.items()
        }
    )
    records: list[dict] = []
    blob_of: dict[str, int] = {}
    width = len(str(n_instances + outliers))
    for i in range(n_instances):
        blob = i % n_blobs
        vec = centers[blob] + noise * rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        rid = f"i{str(i).zfill(width)}"
        cmap = {}
        for name, k in concepts.items():
            tied = f"{name}_v{blob % k}"
            if rng.random() < concept_correlation or k == 1:
                cmap[name] = tied
            else:
                others = [v for v in schema.values(name) if v != tied]
                cmap[name] = others[int(rng.integers(len(others)))]
        tokens = " ".join(
            f"blob{blob}tok{int(rng.integers(_VOCAB_SIZE))}" for _ in range(6)
        )
        records.append(
            {
                "id": rid,
                "text": f"{tokens} about blob {blob}",
                "embedding": [float(v) for v in vec.astype(np.float32)],
                "concepts": cmap,
            }
        )
        blob_of[rid] = blob
    for i in range(outliers):
        vec = rng.standard_normal(dim)
        vec /= np.linalg.norm(vec)
        rid = f"o{str(i).zfill(width)}"
        records.append(
            {
                "id": rid,
                "text": f"outlier noise {i}",
                "embedding": [float(v) for v in vec.astype(np.float32)],
                "concepts": {},
            }
        )
        blob_of[rid] = -1
    return PlantedCorpus(records=records, schema=schema, blob_of=blob_of, centers=centers)
