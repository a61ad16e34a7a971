"""Shared fixtures: a small covid-flavored corpus with deterministic embeddings."""

from __future__ import annotations

import numpy as np
import pytest

from themekit.embedding import HashEmbedder
from themekit.index import EmbedIndex
from themekit.store import ConceptSchema, ConceptSpec, CorpusStore
from themekit.themes import ThemeRegistry

DIM = 8


def unit(*values: float) -> list[float]:
    v = np.asarray(values, dtype=np.float64)
    return [float(x) for x in v / np.linalg.norm(v)]


@pytest.fixture
def schema() -> ConceptSchema:
    return ConceptSchema(
        {
            "stance": ConceptSpec(("anti", "neutral", "pro"), "predicted"),
            "moral_frame": ConceptSpec(("care", "cheating", "fairness", "harm"), "predicted"),
        }
    )


@pytest.fixture
def embedder() -> HashEmbedder:
    return HashEmbedder(dim=DIM, seed=7)


def make_records(embedder: HashEmbedder, n: int = 12) -> list[dict]:
    stances = ("anti", "neutral", "pro")
    frames = ("care", "cheating", "fairness", "harm")
    records = []
    for i in range(n):
        text = f"tweet number {i} about the vaccine"
        records.append(
            {
                "id": f"i{i:03d}",
                "text": text,
                "embedding": [float(x) for x in embedder.embed([text])[0]],
                "concepts": {"stance": stances[i % 3], "moral_frame": frames[i % 4]},
                "meta": {"region": "us"},
            }
        )
    return records


@pytest.fixture
def store(schema, embedder) -> CorpusStore:
    s = CorpusStore(schema)
    s.ingest(make_records(embedder))
    return s


@pytest.fixture
def index(store, embedder) -> EmbedIndex:
    return EmbedIndex(store, embedder)


@pytest.fixture
def registry(store, embedder) -> ThemeRegistry:
    return ThemeRegistry(store, embedder)
