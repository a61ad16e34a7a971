"""Theme registry and intervention operations.

A theme is named by the expert and characterized by good/bad example
instances, authored phrases, and explanatory phrases. The centroid is the
normalized mean of positive exemplars only (good examples + explanatory
phrases); bad examples influence nothing but the mapper's training set.

Theme ids are immutable surrogate keys ("t1", "t2", ...); names are
display labels and may be renamed without touching assignments.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import (
    DuplicateThemeNameError,
    ExemplarConflictError,
    ExemplarNotFoundError,
    InvalidArgumentError,
    InvalidThemeNameError,
    UnknownThemeError,
)
from .store import Assignment, CorpusStore, decode_f32, encode_f32, normalize


@dataclass
class Exemplar:
    kind: str  # "instance" | "phrase"
    key: str  # instance id, or the phrase text itself
    embedding: np.ndarray
    concepts: dict[str, str] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "key": self.key,
            "embedding": encode_f32(self.embedding),
            "concepts": dict(sorted(self.concepts.items())),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Exemplar":
        return cls(obj["kind"], obj["key"], decode_f32(obj["embedding"]), dict(obj["concepts"]))


@dataclass
class Theme:
    theme_id: str
    name: str
    created_iteration: int = 1
    good: dict[str, Exemplar] = field(default_factory=dict)
    bad: dict[str, Exemplar] = field(default_factory=dict)
    phrases: dict[str, Exemplar] = field(default_factory=dict)  # explanatory phrases

    @property
    def scoreable(self) -> bool:
        return bool(self.good or self.phrases)

    def positive_exemplars(self) -> list[Exemplar]:
        """Good examples plus explanatory phrases, key-sorted for determinism."""
        out = [self.good[k] for k in sorted(self.good)]
        out += [self.phrases[k] for k in sorted(self.phrases)]
        return out

    def positive_embeddings(self) -> np.ndarray:
        exemplars = self.positive_exemplars()
        if not exemplars:
            dim = 0
        else:
            dim = exemplars[0].embedding.shape[0]
        if not exemplars:
            return np.zeros((0, dim), dtype=np.float32)
        return np.stack([e.embedding for e in exemplars])

    @property
    def centroid(self) -> np.ndarray | None:
        """Normalized mean of positive-exemplar embeddings; None when empty."""
        mat = self.positive_embeddings()
        if mat.shape[0] == 0:
            return None
        return normalize(mat.astype(np.float64).mean(axis=0))

    def to_json(self) -> dict:
        centroid = self.centroid
        return {
            "theme_id": self.theme_id,
            "name": self.name,
            "created_iteration": self.created_iteration,
            "good": [self.good[k].to_json() for k in sorted(self.good)],
            "bad": [self.bad[k].to_json() for k in sorted(self.bad)],
            "phrases": [self.phrases[k].to_json() for k in sorted(self.phrases)],
            "centroid": None if centroid is None else encode_f32(centroid),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Theme":
        theme = cls(obj["theme_id"], obj["name"], obj.get("created_iteration", 1))
        for entry in obj.get("good", ()):
            ex = Exemplar.from_json(entry)
            theme.good[ex.key] = ex
        for entry in obj.get("bad", ()):
            ex = Exemplar.from_json(entry)
            theme.bad[ex.key] = ex
        for entry in obj.get("phrases", ()):
            ex = Exemplar.from_json(entry)
            theme.phrases[ex.key] = ex
        return theme


class ThemeRegistry:
    """All theme CRUD and exemplar interventions, serialized with the store
    writer so expert marks and assignment updates never interleave."""

    def __init__(
        self,
        store: CorpusStore,
        embedder,
        iteration: Callable[[], int] | None = None,
    ):
        self.store = store
        self.embedder = embedder
        self._iteration = iteration or (lambda: 1)
        self._themes: dict[str, Theme] = {}
        self._counter = 0
        self._lock = threading.RLock()
        store.bind_theme_lookup(lambda tid: tid in self._themes)

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------

    def __contains__(self, theme_id: str) -> bool:
        return theme_id in self._themes

    def __len__(self) -> int:
        return len(self._themes)

    def get(self, theme_id: str) -> Theme:
        theme = self._themes.get(theme_id)
        if theme is None:
            raise UnknownThemeError(f"unknown theme id {theme_id!r}", detail={"theme_id": theme_id})
        return theme

    def themes(self) -> list[Theme]:
        return [self._themes[t] for t in sorted(self._themes)]

    def scoreable_themes(self) -> list[Theme]:
        return [t for t in self.themes() if t.scoreable]

    def clamped_instances(self) -> dict[str, str]:
        """instance-id -> theme-id for every expert good-mark; these outrank
        any machine assignment."""
        clamps: dict[str, str] = {}
        for theme in self.themes():
            for key, ex in theme.good.items():
                if ex.kind == "instance":
                    clamps[key] = theme.theme_id
        return clamps

    # ------------------------------------------------------------------
    # theme CRUD
    # ------------------------------------------------------------------

    def _check_name(self, name: str, ignore: str | None = None) -> None:
        if not name or not name.strip():
            raise InvalidThemeNameError("theme name must be non-empty")
        for theme in self._themes.values():
            if theme.theme_id != ignore and theme.name == name:
                raise DuplicateThemeNameError(f"theme name {name!r} already in use")

    def create_theme(self, name: str) -> Theme:
        with self._lock:
            self._check_name(name)
            self._counter += 1
            theme = Theme(f"t{self._counter}", name, created_iteration=self._iteration())
            self._themes[theme.theme_id] = theme
            return theme

    def rename_theme(self, theme_id: str, name: str) -> Theme:
        with self._lock:
            theme = self.get(theme_id)
            self._check_name(name, ignore=theme_id)
            theme.name = name
            return theme

    def delete_theme(self, theme_id: str) -> int:
        """Removes the theme and releases its instances; returns how many."""
        with self._lock:
            self.get(theme_id)
            released = self.store.release_theme(theme_id)
            del self._themes[theme_id]
            return released

    # ------------------------------------------------------------------
    # exemplars and phrases
    # ------------------------------------------------------------------

    def _resolve_source(self, source: str) -> Exemplar:
        if source in self.store:
            inst = self.store.get_instance(source)
            return Exemplar("instance", source, inst.embedding, dict(inst.concepts))
        if not source or not source.strip():
            raise InvalidArgumentError("exemplar phrase must be non-empty")
        vec = normalize(self.embedder.embed([source])[0])
        return Exemplar("phrase", source, vec)

    def add_exemplar(self, theme_id: str, polarity: str, source: str) -> Theme:
        """Mark an instance or authored phrase as a good/bad example.

        Good instance marks also assign the instance to the theme with
        score 1.0 -- expert judgment outranks the machine mapping.
        """
        if polarity not in ("good", "bad"):
            raise InvalidArgumentError(f"polarity must be good|bad, got {polarity!r}")
        with self._lock:
            theme = self.get(theme_id)
            opposite = theme.bad if polarity == "good" else theme.good
            if source in opposite:
                raise ExemplarConflictError(
                    f"{source!r} is already a {'bad' if polarity == 'good' else 'good'} "
                    f"example of theme {theme.name!r}; remove it first"
                )
            exemplar = self._resolve_source(source)
            target = theme.good if polarity == "good" else theme.bad
            target[exemplar.key] = exemplar
            if polarity == "good" and exemplar.kind == "instance":
                self.store.set_assignment(
                    exemplar.key, Assignment(theme_id, 1.0, max(1, self._iteration()))
                )
            return theme

    def add_phrase(self, theme_id: str, text: str) -> Theme:
        """Attach an explanatory phrase (counts as a positive exemplar)."""
        with self._lock:
            theme = self.get(theme_id)
            if not text or not text.strip():
                raise InvalidArgumentError("explanatory phrase must be non-empty")
            if text in theme.bad:
                raise ExemplarConflictError(
                    f"{text!r} is a bad example of theme {theme.name!r}; remove it first"
                )
            vec = normalize(self.embedder.embed([text])[0])
            theme.phrases[text] = Exemplar("phrase", text, vec)
            return theme

    def _find_exemplar(self, theme: Theme, source: str) -> tuple[str, Exemplar]:
        for bucket_name in ("good", "bad", "phrases"):
            bucket = getattr(theme, bucket_name)
            if source in bucket:
                return bucket_name, bucket[source]
        raise ExemplarNotFoundError(
            f"{source!r} is not an exemplar or phrase of theme {theme.name!r}"
        )

    def remove_exemplar(self, theme_id: str, source: str) -> Theme:
        """Drop an exemplar/phrase. Prior assignments survive; a theme whose
        last positive exemplar disappears merely becomes unscoreable."""
        with self._lock:
            theme = self.get(theme_id)
            bucket_name, _ = self._find_exemplar(theme, source)
            del getattr(theme, bucket_name)[source]
            return theme

    def set_exemplar_concepts(self, theme_id: str, source: str, concepts: Mapping[str, str]) -> Exemplar:
        """Record expert concept judgments on an exemplar; instance exemplars
        also write through to the corpus store as corrections."""
        with self._lock:
            theme = self.get(theme_id)
            _, exemplar = self._find_exemplar(theme, source)
            if not concepts:
                return exemplar
            self.store.schema.validate_map(concepts, context=f"exemplar {source!r}")
            exemplar.concepts.update(concepts)
            if exemplar.kind == "instance":
                self.store.upsert_concepts(exemplar.key, concepts)
            return exemplar

    # ------------------------------------------------------------------
    # serialization (the feedback file)
    # ------------------------------------------------------------------

    def state_json(self) -> dict:
        return {
            "counter": self._counter,
            "themes": [t.to_json() for t in self.themes()],
        }

    def load_state(self, state: Mapping) -> None:
        with self._lock:
            self._counter = state.get("counter", 0)
            self._themes = {}
            for obj in state.get("themes", ()):
                theme = Theme.from_json(obj)
                self._themes[theme.theme_id] = theme
