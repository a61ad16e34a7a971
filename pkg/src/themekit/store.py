"""Corpus store: instances, concept schema, assignment state, durability.

One record per line on disk (UTF-8 JSON): ``{"id", "text", "concepts"?,
"embedding"?, "meta"?}`` with embeddings as arrays of 32-bit floats.
Records without embeddings are queued and resolved through the embedder
client before the store reports ready.

Durability is an append-log (one JSON event per mutation) plus a periodic
compaction snapshot; reopening a store replays snapshot + log and must
reproduce identical state.

Concurrency: multi-reader / single-writer. All mutations funnel through
``_writer`` (an RLock); reads hand out references into state that mutators
replace rather than edit in place.
"""

from __future__ import annotations

import base64
import json
import threading
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator, Mapping

import numpy as np

from .errors import (
    DimensionMismatchError,
    DuplicateIdError,
    InvalidArgumentError,
    SchemaViolationError,
    StoreNotReadyError,
    UnknownInstanceError,
    UnknownThemeError,
    ZeroVectorError,
)

NORM_TOL = 1e-6


def encode_f32(vec: np.ndarray) -> str:
    return base64.b64encode(np.asarray(vec, dtype=np.float32).tobytes()).decode("ascii")


def decode_f32(blob: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(blob), dtype=np.float32).copy()


def normalize(vec: np.ndarray) -> np.ndarray:
    """L2-normalize to float32. Zero vectors are rejected."""
    v = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVectorError("cannot normalize a zero vector")
    return (v / norm).astype(np.float32)


@dataclass(frozen=True)
class Assignment:
    """Either unassigned (theme_id is None) or assigned with a confidence
    score in [0,1] and the iteration that produced it (>= 1)."""

    theme_id: str | None = None
    score: float = 0.0
    iteration: int = 0

    @property
    def assigned(self) -> bool:
        return self.theme_id is not None

    def to_json(self) -> dict:
        if not self.assigned:
            return {"theme_id": None}
        return {"theme_id": self.theme_id, "score": self.score, "iteration": self.iteration}

    @classmethod
    def from_json(cls, obj: Mapping) -> "Assignment":
        if obj.get("theme_id") is None:
            return UNASSIGNED
        return cls(obj["theme_id"], float(obj["score"]), int(obj["iteration"]))


UNASSIGNED = Assignment()


@dataclass
class Instance:
    id: str
    text: str
    embedding: np.ndarray  # unit-norm float32, length = store dim
    concepts: dict[str, str] = field(default_factory=dict)
    assignment: Assignment = UNASSIGNED
    source_meta: dict[str, str] = field(default_factory=dict)
    corrected: frozenset[str] = frozenset()  # concept names overridden by experts

    @property
    def concept_corrected(self) -> bool:
        return bool(self.corrected)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "text": self.text,
            "embedding": encode_f32(self.embedding),
            "concepts": dict(sorted(self.concepts.items())),
            "assignment": self.assignment.to_json(),
            "source_meta": dict(sorted(self.source_meta.items())),
            "corrected": sorted(self.corrected),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "Instance":
        return cls(
            id=obj["id"],
            text=obj["text"],
            embedding=decode_f32(obj["embedding"]),
            concepts=dict(obj.get("concepts", {})),
            assignment=Assignment.from_json(obj.get("assignment", {})),
            source_meta=dict(obj.get("source_meta", {})),
            corrected=frozenset(obj.get("corrected", ())),
        )


@dataclass(frozen=True)
class ConceptSpec:
    values: tuple[str, ...]
    provenance: str = "predicted"  # annotated | predicted


class ConceptSchema:
    """Finite categorical concepts and their allowed values."""

    def __init__(self, concepts: Mapping[str, ConceptSpec]):
        for name, spec in concepts.items():
            if len(spec.values) < 2:
                raise InvalidArgumentError(f"concept {name!r} needs >= 2 allowed values")
            if len(set(spec.values)) != len(spec.values):
                raise InvalidArgumentError(f"concept {name!r} has duplicate allowed values")
            if spec.provenance not in ("annotated", "predicted"):
                raise InvalidArgumentError(f"concept {name!r}: bad provenance {spec.provenance!r}")
        self.concepts: dict[str, ConceptSpec] = dict(concepts)

    def __contains__(self, name: str) -> bool:
        return name in self.concepts

    def names(self) -> list[str]:
        return sorted(self.concepts)

    def values(self, name: str) -> tuple[str, ...]:
        return self.concepts[name].values

    def validate(self, name: str, value: str, *, context: str = "") -> None:
        spec = self.concepts.get(name)
        where = f" in {context}" if context else ""
        if spec is None:
            raise SchemaViolationError(
                f"unknown concept {name!r}{where}", detail={"concept": name}
            )
        if value not in spec.values:
            raise SchemaViolationError(
                f"value {value!r} not allowed for concept {name!r}{where}",
                detail={"concept": name, "value": value},
            )

    def validate_map(self, concepts: Mapping[str, str], *, context: str = "") -> None:
        for name, value in concepts.items():
            self.validate(name, value, context=context)

    def to_json(self) -> dict:
        return {
            name: {"values": list(spec.values), "provenance": spec.provenance}
            for name, spec in sorted(self.concepts.items())
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ConceptSchema":
        return cls(
            {
                name: ConceptSpec(tuple(spec["values"]), spec.get("provenance", "predicted"))
                for name, spec in obj.items()
            }
        )


@dataclass(frozen=True)
class AuditEntry:
    instance_id: str
    concept: str
    old_value: str | None
    new_value: str
    timestamp: float

    def to_json(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "concept": self.concept,
            "old_value": self.old_value,
            "new_value": self.new_value,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "AuditEntry":
        return cls(
            obj["instance_id"], obj["concept"], obj["old_value"], obj["new_value"], obj["timestamp"]
        )


@dataclass(frozen=True)
class CorpusStats:
    instance_count: int
    embedding_dim: int
    concept_histograms: dict[str, dict[str, int]]
    assigned_count: int
    unassigned_count: int

    def to_json(self) -> dict:
        return {
            "instance_count": self.instance_count,
            "embedding_dim": self.embedding_dim,
            "concept_histograms": {
                c: dict(sorted(h.items())) for c, h in sorted(self.concept_histograms.items())
            },
            "assigned_count": self.assigned_count,
            "unassigned_count": self.unassigned_count,
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()


LOG_FORMAT_VERSION = 1


class CorpusStore:
    """Owns instances, concepts, assignment state, and the audit trail."""

    def __init__(
        self,
        schema: ConceptSchema,
        dim: int | None = None,
        log_path: str | Path | None = None,
    ):
        self.schema = schema
        self.dim = dim
        self._instances: dict[str, Instance] = {}
        self._ids_sorted: list[str] = []
        self._audits: list[AuditEntry] = []
        self._pending_embedding: list[str] = []
        self._writer = threading.RLock()
        self._theme_exists: Callable[[str], bool] | None = None
        self.version = 0  # bumped on any embedding-set mutation, for index snapshots
        self._log_path = Path(log_path) if log_path else None
        if self._log_path is not None and not self._log_path.exists():
            self._log_path.parent.mkdir(parents=True, exist_ok=True)
            self._append_log(
                {"kind": "header", "format": LOG_FORMAT_VERSION, "schema": schema.to_json()}
            )

    # ------------------------------------------------------------------
    # wiring
    # ------------------------------------------------------------------

    def bind_theme_lookup(self, fn: Callable[[str], bool]) -> None:
        """Themes module registers its existence check here so assignments
        keep referential integrity."""
        self._theme_exists = fn

    # ------------------------------------------------------------------
    # ingestion
    # ------------------------------------------------------------------

    def ingest(
        self,
        records: Iterable[Mapping],
        *,
        on_duplicate: str = "error",
        _log: bool = True,
    ) -> CorpusStats:
        """Load records. ``on_duplicate`` is ``error`` or ``skip`` (dedup-on-id).

        Records missing an embedding are queued; resolve them with
        :meth:`resolve_pending_embeddings` before using the store.
        """
        if on_duplicate not in ("error", "skip"):
            raise InvalidArgumentError(f"on_duplicate must be error|skip, got {on_duplicate!r}")
        with self._writer:
            seen_in_stream: set[str] = set()
            for pos, rec in enumerate(records, start=1):
                rid = rec.get("id")
                if not rid or not isinstance(rid, str):
                    raise InvalidArgumentError(f"record {pos} has no usable id")
                if rid in seen_in_stream or rid in self._instances:
                    if on_duplicate == "skip":
                        continue
                    raise DuplicateIdError(
                        f"duplicate id {rid!r} at record {pos}", detail={"id": rid, "record": pos}
                    )
                seen_in_stream.add(rid)
                text = rec.get("text", "")
                concepts = dict(rec.get("concepts") or {})
                self.schema.validate_map(concepts, context=f"record {pos} (id {rid!r})")
                raw = rec.get("embedding")
                if raw is not None:
                    vec = np.asarray(raw, dtype=np.float32)
                    if self.dim is None:
                        self.dim = int(vec.shape[0])
                    if vec.shape != (self.dim,):
                        raise DimensionMismatchError(
                            f"record {pos} (id {rid!r}): embedding has length "
                            f"{vec.shape[0] if vec.ndim == 1 else vec.shape}, expected {self.dim}"
                        )
                    emb = normalize(vec)
                else:
                    emb = None
                inst = Instance(
                    id=rid,
                    text=text,
                    embedding=emb if emb is not None else np.zeros(0, dtype=np.float32),
                    concepts=concepts,
                    source_meta={k: str(v) for k, v in (rec.get("meta") or {}).items()},
                )
                self._instances[rid] = inst
                if emb is None:
                    self._pending_embedding.append(rid)
                if _log:
                    self._append_log({"kind": "ingest", "record": inst.to_json()})
            self._ids_sorted = sorted(self._instances)
            self.version += 1
        return self.stats()

    def ingest_file(self, path: str | Path, **kwargs) -> CorpusStats:
        def lines() -> Iterator[dict]:
            with open(path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        yield json.loads(line)

        return self.ingest(lines(), **kwargs)

    @property
    def pending_embedding_ids(self) -> list[str]:
        return list(self._pending_embedding)

    @property
    def ready(self) -> bool:
        return not self._pending_embedding

    def resolve_pending_embeddings(self, embedder, batch_size: int = 256) -> int:
        """Embed queued texts through the client; returns how many were filled."""
        with self._writer:
            pending = list(self._pending_embedding)
            if not pending:
                return 0
            for start in range(0, len(pending), batch_size):
                chunk = pending[start : start + batch_size]
                vectors = embedder.embed([self._instances[i].text for i in chunk])
                if self.dim is None:
                    self.dim = int(vectors.shape[1])
                if vectors.shape[1] != self.dim:
                    raise DimensionMismatchError(
                        f"embedder produced dimension {vectors.shape[1]}, store has {self.dim}"
                    )
                for rid, vec in zip(chunk, vectors):
                    emb = normalize(vec)
                    self._instances[rid] = replace(self._instances[rid], embedding=emb)
                    self._append_log({"kind": "embed", "id": rid, "embedding": encode_f32(emb)})
            self._pending_embedding.clear()
            self.version += 1
            return len(pending)

    def require_ready(self) -> None:
        if not self.ready:
            raise StoreNotReadyError(
                f"{len(self._pending_embedding)} instances still lack embeddings"
            )

    # ------------------------------------------------------------------
    # reads
    # ------------------------------------------------------------------

    def __len__(self) -> int:
        return len(self._instances)

    def __contains__(self, rid: str) -> bool:
        return rid in self._instances

    def ids(self) -> list[str]:
        return list(self._ids_sorted)

    def get_instance(self, rid: str) -> Instance:
        inst = self._instances.get(rid)
        if inst is None:
            raise UnknownInstanceError(f"unknown instance id {rid!r}", detail={"id": rid})
        return inst

    def unassigned_ids(self) -> list[str]:
        return [i for i in self._ids_sorted if not self._instances[i].assignment.assigned]

    def assigned_ids(self) -> list[str]:
        return [i for i in self._ids_sorted if self._instances[i].assignment.assigned]

    def embedding_matrix(self, ids: Iterable[str] | None = None) -> tuple[list[str], np.ndarray]:
        """Rows aligned to the returned id list (sorted when ids is None)."""
        self.require_ready()
        id_list = self._ids_sorted if ids is None else list(ids)
        if not id_list:
            return [], np.zeros((0, self.dim or 0), dtype=np.float32)
        mat = np.stack([self.get_instance(i).embedding for i in id_list])
        return list(id_list), mat

    def audits(self) -> list[AuditEntry]:
        return list(self._audits)

    def stats(self) -> CorpusStats:
        histograms: dict[str, dict[str, int]] = {name: {} for name in self.schema.names()}
        assigned = 0
        for inst in self._instances.values():
            if inst.assignment.assigned:
                assigned += 1
            for name, value in inst.concepts.items():
                histograms[name][value] = histograms[name].get(value, 0) + 1
        return CorpusStats(
            instance_count=len(self._instances),
            embedding_dim=self.dim or 0,
            concept_histograms=histograms,
            assigned_count=assigned,
            unassigned_count=len(self._instances) - assigned,
        )

    # ------------------------------------------------------------------
    # mutations
    # ------------------------------------------------------------------

    def upsert_concepts(self, rid: str, edits: Mapping[str, str]) -> Instance:
        """Apply expert concept corrections; appends one audit entry per
        changed concept and flags the instance as corrected."""
        with self._writer:
            inst = self.get_instance(rid)
            if not edits:
                return inst
            self.schema.validate_map(edits, context=f"instance {rid!r}")
            ts = time.time()
            new_concepts = dict(inst.concepts)
            corrected = set(inst.corrected)
            entries = []
            for name, value in edits.items():
                entries.append(AuditEntry(rid, name, inst.concepts.get(name), value, ts))
                new_concepts[name] = value
                corrected.add(name)
            self._audits.extend(entries)
            updated = replace(inst, concepts=new_concepts, corrected=frozenset(corrected))
            self._instances[rid] = updated
            self._append_log(
                {
                    "kind": "upsert",
                    "id": rid,
                    "edits": dict(sorted(edits.items())),
                    "audits": [e.to_json() for e in entries],
                }
            )
            return updated

    def set_assignment(self, rid: str, assignment: Assignment) -> None:
        with self._writer:
            inst = self.get_instance(rid)
            self._validate_assignment(assignment)
            self._instances[rid] = replace(inst, assignment=assignment)
            self._append_log({"kind": "assign", "id": rid, "assignment": assignment.to_json()})

    def set_assignments(self, updates: Mapping[str, Assignment]) -> None:
        """Atomic batch commit: validates everything, then swaps state."""
        with self._writer:
            staged = {}
            for rid, assignment in updates.items():
                inst = self.get_instance(rid)
                self._validate_assignment(assignment)
                staged[rid] = replace(inst, assignment=assignment)
            self._instances.update(staged)
            self._append_log(
                {
                    "kind": "assign_batch",
                    "assignments": {
                        rid: a.to_json() for rid, a in sorted(updates.items())
                    },
                }
            )

    def release_theme(self, theme_id: str) -> int:
        """Move every instance assigned to the theme back to unassigned."""
        with self._writer:
            released = [
                rid
                for rid, inst in self._instances.items()
                if inst.assignment.theme_id == theme_id
            ]
            for rid in released:
                self._instances[rid] = replace(self._instances[rid], assignment=UNASSIGNED)
            self._append_log({"kind": "release_theme", "theme_id": theme_id})
            return len(released)

    def _validate_assignment(self, assignment: Assignment) -> None:
        if not assignment.assigned:
            return
        if not (0.0 <= assignment.score <= 1.0):
            raise InvalidArgumentError(f"assignment score {assignment.score} outside [0,1]")
        if assignment.iteration < 1:
            raise InvalidArgumentError("assignment iteration must be >= 1")
        if self._theme_exists is not None and not self._theme_exists(assignment.theme_id):
            raise UnknownThemeError(
                f"unknown theme id {assignment.theme_id!r}",
                detail={"theme_id": assignment.theme_id},
            )

    # ------------------------------------------------------------------
    # durability: append-log + compaction snapshot
    # ------------------------------------------------------------------

    def _append_log(self, event: dict) -> None:
        if self._log_path is None:
            return
        with open(self._log_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")

    def state_json(self) -> dict:
        return {
            "format": LOG_FORMAT_VERSION,
            "schema": self.schema.to_json(),
            "dim": self.dim,
            "instances": [self._instances[i].to_json() for i in self._ids_sorted],
            "audits": [a.to_json() for a in self._audits],
            "pending_embedding": list(self._pending_embedding),
        }

    def load_state(self, state: Mapping) -> None:
        if state.get("format", 0) > LOG_FORMAT_VERSION:
            from .errors import SnapshotVersionError

            raise SnapshotVersionError(
                f"snapshot format {state.get('format')} is newer than supported "
                f"{LOG_FORMAT_VERSION}"
            )
        with self._writer:
            self.schema = ConceptSchema.from_json(state["schema"])
            self.dim = state.get("dim")
            self._instances = {
                obj["id"]: Instance.from_json(obj) for obj in state.get("instances", ())
            }
            self._ids_sorted = sorted(self._instances)
            self._audits = [AuditEntry.from_json(o) for o in state.get("audits", ())]
            self._pending_embedding = list(state.get("pending_embedding", ()))
            self.version += 1

    @property
    def snapshot_path(self) -> Path | None:
        return None if self._log_path is None else self._log_path.with_suffix(".snapshot")

    def compact(self) -> None:
        """Write the full-state snapshot and truncate the log."""
        if self._log_path is None:
            raise InvalidArgumentError("store has no log path")
        with self._writer:
            tmp = self.snapshot_path.with_suffix(".snapshot.tmp")
            with open(tmp, "w", encoding="utf-8") as fh:
                json.dump(self.state_json(), fh, sort_keys=True, separators=(",", ":"))
            tmp.replace(self.snapshot_path)
            with open(self._log_path, "w", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "kind": "header",
                            "format": LOG_FORMAT_VERSION,
                            "schema": self.schema.to_json(),
                        },
                        sort_keys=True,
                        separators=(",", ":"),
                    )
                    + "\n"
                )

    @classmethod
    def open(cls, log_path: str | Path) -> "CorpusStore":
        """Reload a store from its snapshot (if any) plus log tail."""
        log_path = Path(log_path)
        snapshot = log_path.with_suffix(".snapshot")
        events: list[dict] = []
        header = None
        if log_path.exists():
            with open(log_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    obj = json.loads(line)
                    if obj.get("kind") == "header":
                        header = obj
                    else:
                        events.append(obj)
        if header is None and not snapshot.exists():
            raise InvalidArgumentError(f"no store log at {log_path}")
        if header is not None and header.get("format", 0) > LOG_FORMAT_VERSION:
            from .errors import SnapshotVersionError

            raise SnapshotVersionError("log format newer than supported")
        schema = ConceptSchema.from_json(header["schema"]) if header else ConceptSchema({})
        store = cls(schema, log_path=None)
        if snapshot.exists():
            with open(snapshot, "r", encoding="utf-8") as fh:
                store.load_state(json.load(fh))
        for event in events:
            store._replay(event)
        store._log_path = log_path
        return store

    def _replay(self, event: Mapping) -> None:
        kind = event.get("kind")
        if kind == "ingest":
            obj = event["record"]
            inst = Instance.from_json(obj)
            self._instances[inst.id] = inst
            if inst.embedding.size == 0:
                self._pending_embedding.append(inst.id)
            elif self.dim is None:
                self.dim = int(inst.embedding.shape[0])
            self._ids_sorted = sorted(self._instances)
        elif kind == "embed":
            rid = event["id"]
            emb = decode_f32(event["embedding"])
            if self.dim is None:
                self.dim = int(emb.shape[0])
            self._instances[rid] = replace(self._instances[rid], embedding=emb)
            if rid in self._pending_embedding:
                self._pending_embedding.remove(rid)
        elif kind == "upsert":
            rid = event["id"]
            inst = self._instances[rid]
            entries = [AuditEntry.from_json(o) for o in event["audits"]]
            self._audits.extend(entries)
            new_concepts = dict(inst.concepts)
            new_concepts.update(event["edits"])
            corrected = frozenset(set(inst.corrected) | set(event["edits"]))
            self._instances[rid] = replace(inst, concepts=new_concepts, corrected=corrected)
        elif kind == "assign":
            rid = event["id"]
            self._instances[rid] = replace(
                self._instances[rid], assignment=Assignment.from_json(event["assignment"])
            )
        elif kind == "assign_batch":
            for rid, obj in event["assignments"].items():
                self._instances[rid] = replace(
                    self._instances[rid], assignment=Assignment.from_json(obj)
                )
        elif kind == "release_theme":
            tid = event["theme_id"]
            for rid, inst in list(self._instances.items()):
                if inst.assignment.theme_id == tid:
                    self._instances[rid] = replace(inst, assignment=UNASSIGNED)
        else:
            raise InvalidArgumentError(f"unknown log event kind {kind!r}")
        self.version += 1
