"""Session lifecycle: explore -> intervene -> map -> commit -> re-partition.

One session owns one corpus, one theme registry, and the iteration
counter. The full session state exports to a single canonical-JSON file;
importing it into a fresh process reproduces identical stats, themes,
assignments, and metrics (re-exporting yields identical bytes).
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .embedding import make_embedder
from .errors import InvalidArgumentError, PhaseConflictError, SnapshotCorruptError, SnapshotVersionError
from .index import EmbedIndex
from .mapper import DEFAULT_K, DEFAULT_TAU, MappingResult, NesyMapper, RuleWeightModel
from .partition import Partition, balance_stats, default_min_cluster_size, density_partition, kmeans_partition
from .store import ConceptSchema, CorpusStore
from .stopwords import load_stopwords
from .themes import ThemeRegistry

EXPORT_FORMAT_VERSION = 1

PHASE_EXPLORING = "exploring"
PHASE_MAPPING = "mapping"


@dataclass
class SessionConfig:
    k: int = 10
    tau: float = DEFAULT_TAU
    K: int = DEFAULT_K
    seed: int = 0
    embedder_endpoint: str | None = None
    embedder_dim: int = 32
    stopwords_path: str | None = None
    token: str | None = None
    autosave_path: str | None = None

    @classmethod
    def from_file(cls, path: str | Path) -> "SessionConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        embedder = raw.pop("embedder", {}) or {}
        cfg = cls(
            k=raw.get("k", 10),
            tau=raw.get("tau", DEFAULT_TAU),
            K=raw.get("K", DEFAULT_K),
            seed=raw.get("seed", 0),
            embedder_endpoint=embedder.get("endpoint"),
            embedder_dim=embedder.get("dim", 32),
            stopwords_path=raw.get("stopwords"),
            token=raw.get("token"),
            autosave_path=raw.get("autosave"),
        )
        return cfg

    def to_json(self) -> dict:
        return {
            "k": self.k,
            "tau": self.tau,
            "K": self.K,
            "seed": self.seed,
            "embedder": {"endpoint": self.embedder_endpoint, "dim": self.embedder_dim},
            "stopwords": self.stopwords_path,
            "token": self.token,
            "autosave": self.autosave_path,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "SessionConfig":
        embedder = obj.get("embedder", {}) or {}
        return cls(
            k=obj.get("k", 10),
            tau=obj.get("tau", DEFAULT_TAU),
            K=obj.get("K", DEFAULT_K),
            seed=obj.get("seed", 0),
            embedder_endpoint=embedder.get("endpoint"),
            embedder_dim=embedder.get("dim", 32),
            stopwords_path=obj.get("stopwords"),
            token=obj.get("token"),
            autosave_path=obj.get("autosave"),
        )


class Session:
    def __init__(self, schema: ConceptSchema, config: SessionConfig | None = None):
        self.config = config or SessionConfig()
        self.store = CorpusStore(schema)
        self.embedder = make_embedder(
            self.config.embedder_endpoint, self.config.embedder_dim, self.config.seed
        )
        self.index = EmbedIndex(self.store, self.embedder)
        self.iteration = 1
        self.phase = PHASE_EXPLORING
        self.registry = ThemeRegistry(self.store, self.embedder, iteration=lambda: self.iteration)
        self.mapper = NesyMapper(self.store, self.index, self.registry)
        self.stopwords = load_stopwords(self.config.stopwords_path)
        self.partitions: list[Partition] = []
        self.mapping_history: list[MappingResult] = []  # committed, one per iteration
        self._lock = threading.RLock()

    # ------------------------------------------------------------------
    # lifecycle guards
    # ------------------------------------------------------------------

    def check_mutable(self) -> None:
        if self.phase == PHASE_MAPPING:
            raise PhaseConflictError(
                "a mapping job is running; interventions are locked until it finishes"
            )

    def begin_mapping(self) -> None:
        with self._lock:
            self.check_mutable()
            self.phase = PHASE_MAPPING

    def end_mapping(self) -> None:
        with self._lock:
            self.phase = PHASE_EXPLORING

    # ------------------------------------------------------------------
    # operations
    # ------------------------------------------------------------------

    def run_kmeans(self, k: int | None = None, seed: int | None = None) -> list[Partition]:
        with self._lock:
            self.check_mutable()
            ids = self.store.unassigned_ids()
            parts = kmeans_partition(
                self.store,
                ids,
                k if k is not None else self.config.k,
                seed if seed is not None else self.config.seed,
            )
            self.partitions = parts
            return parts

    def run_density(self, min_cluster_size: int | None = None) -> list[Partition]:
        with self._lock:
            self.check_mutable()
            ids = self.store.unassigned_ids()
            if min_cluster_size is None:
                min_cluster_size = default_min_cluster_size(len(ids))
            parts = density_partition(self.store, ids, min_cluster_size)
            self.partitions = parts
            return parts

    def partition_balance(self) -> dict:
        return balance_stats(self.partitions)

    def run_mapping(self, method: str = "nesy", tau: float | None = None,
                    scope: str = "full", progress=None) -> tuple[MappingResult, RuleWeightModel | None]:
        """Train (for nesy) and infer; does not commit."""
        tau = self.config.tau if tau is None else tau
        if method == "nns":
            return self.mapper.nns_baseline(tau, scope, self.iteration, progress=progress), None
        if method != "nesy":
            raise InvalidArgumentError(f"method must be nesy|nns, got {method!r}")
        data = self.mapper.generate_training_data(self.config.K, seed=self.config.seed)
        model = self.mapper.learn_weights(data, tau=tau)
        return self.mapper.infer(model, scope, self.iteration, progress=progress), model

    def commit_mapping(self, result: MappingResult) -> list[Partition]:
        """Commit assignments, advance the iteration, re-partition leftovers."""
        with self._lock:
            parts = self.mapper.repartition_after_mapping(
                result, self.config.k, seed=self.config.seed
            )
            self.mapping_history.append(result)
            self.partitions = parts
            self.iteration += 1
            if self.config.autosave_path:
                self.export(self.config.autosave_path)
            return parts

    def committed_result(self, iteration: int) -> MappingResult:
        for result in self.mapping_history:
            if result.iteration == iteration:
                return result
        raise InvalidArgumentError(f"no committed mapping for iteration {iteration}")

    def latest_result(self) -> MappingResult:
        if not self.mapping_history:
            raise InvalidArgumentError("no mapping has been committed yet")
        return self.mapping_history[-1]

    def theme_names(self) -> dict[str, str]:
        return {t.theme_id: t.name for t in self.registry.themes()}

    # ------------------------------------------------------------------
    # export / import
    # ------------------------------------------------------------------

    def export_json(self) -> dict:
        return {
            "format_version": EXPORT_FORMAT_VERSION,
            "config": self.config.to_json(),
            "iteration": self.iteration,
            "store": self.store.state_json(),
            "themes": self.registry.state_json(),
            "partitions": [p.to_json() for p in self.partitions],
            "mapping_history": [r.to_json() for r in self.mapping_history],
        }

    def export_bytes(self) -> bytes:
        return json.dumps(self.export_json(), sort_keys=True, separators=(",", ":")).encode()

    def export(self, path: str | Path) -> str:
        """Write the snapshot; returns its sha256 for audit trails."""
        blob = self.export_bytes()
        tmp = Path(path).with_suffix(Path(path).suffix + ".tmp")
        tmp.parent.mkdir(parents=True, exist_ok=True)
        tmp.write_bytes(blob)
        tmp.replace(path)
        return hashlib.sha256(blob).hexdigest()

    def load_snapshot(self, obj: Mapping) -> None:
        version = obj.get("format_version")
        if version is None:
            raise SnapshotCorruptError("snapshot missing format_version")
        if version > EXPORT_FORMAT_VERSION:
            raise SnapshotVersionError(
                f"snapshot format {version} is newer than supported {EXPORT_FORMAT_VERSION}"
            )
        with self._lock:
            self.check_mutable()
            self.config = SessionConfig.from_json(obj["config"])
            self.store.load_state(obj["store"])
            self.registry.load_state(obj["themes"])
            self.iteration = obj["iteration"]
            self.partitions = [Partition.from_json(p) for p in obj.get("partitions", ())]
            self.mapping_history = [
                MappingResult.from_json(r) for r in obj.get("mapping_history", ())
            ]
            self.stopwords = load_stopwords(self.config.stopwords_path)
            self.embedder = make_embedder(
                self.config.embedder_endpoint, self.config.embedder_dim, self.config.seed
            )
            self.index.embedder = self.embedder
            self.registry.embedder = self.embedder

    @classmethod
    def import_file(cls, path: str | Path) -> "Session":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SnapshotCorruptError(f"snapshot at {path} is not valid JSON: {exc}") from exc
        session = cls(ConceptSchema({}), SessionConfig())
        session.load_snapshot(obj)
        return session
