"""HTTP/JSON API over one session.

Single-session service: one corpus, one coder group per process. Mapping
runs as an asynchronous job with progress polling and an exclusive
mutation lock; everything else is synchronous. Errors always carry
``{code, message, detail}``.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass
from typing import Optional

from fastapi import Depends, FastAPI, Header, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import analytics
from .errors import InvalidArgumentError, PhaseConflictError, SnapshotCorruptError, ThemekitError
from .index import theme_similarity
from .mapper import MappingResult
from .partition import rank_members
from .session import Session
from .themes import Theme

_STATUS_BY_CODE = {
    "unknown_instance": 404,
    "unknown_theme": 404,
    "exemplar_not_found": 404,
    "unknown_concept": 404,
    "phase_conflict": 409,
    "exemplar_conflict": 409,
    "duplicate_theme_name": 409,
    "duplicate_id": 409,
    "embedder_unavailable": 502,
    "store_not_ready": 503,
}


# ----------------------------------------------------------------------
# request bodies
# ----------------------------------------------------------------------


class KmeansBody(BaseModel):
    k: Optional[int] = None
    seed: Optional[int] = None


class DensityBody(BaseModel):
    min_cluster_size: Optional[int] = None


class TextQueryBody(BaseModel):
    text: str
    k: int = 10
    filter: str = "all"


class NeighborQueryBody(BaseModel):
    instance_id: str
    k: int = 10
    filter: str = "all"


class ConceptEditsBody(BaseModel):
    edits: dict[str, str]


class ThemeBody(BaseModel):
    name: str


class ExemplarBody(BaseModel):
    polarity: str
    source: str


class SourceBody(BaseModel):
    source: str


class PhraseBody(BaseModel):
    text: str


class ExemplarConceptsBody(BaseModel):
    source: str
    concepts: dict[str, str]


class MappingRunBody(BaseModel):
    method: str = "nesy"
    tau: Optional[float] = None
    scope: str = "full"


class CommitBody(BaseModel):
    job_id: str


class OverlapSide(BaseModel):
    iteration: Optional[int] = None
    sets: Optional[dict[str, list[str]]] = None


class OverlapBody(BaseModel):
    a: OverlapSide
    b: OverlapSide


class EvaluationBody(BaseModel):
    gold: dict[str, str]
    average: str = "micro"
    iteration: Optional[int] = None


class SampleBody(BaseModel):
    n: int
    seed: int = 0
    iteration: Optional[int] = None


class PathBody(BaseModel):
    path: str


class ReportBody(BaseModel):
    path: str
    iteration: Optional[int] = None
    prev_iteration: Optional[int] = None


# ----------------------------------------------------------------------
# mapping jobs
# ----------------------------------------------------------------------


@dataclass
class MappingJob:
    job_id: str
    method: str
    tau: float | None
    scope: str
    state: str = "running"  # running | done | failed | committed
    progress: float = 0.0
    error: str | None = None
    error_code: str | None = None
    result: MappingResult | None = None
    model: object | None = None  # RuleWeightModel for nesy jobs
    commit_payload: dict | None = None

    def summary(self) -> dict:
        out = {
            "job_id": self.job_id,
            "method": self.method,
            "scope": self.scope,
            "state": self.state,
            "progress": self.progress,
        }
        if self.error:
            out["error"] = {"code": self.error_code, "message": self.error}
        if self.result is not None:
            out["counts"] = {
                "total": self.result.total,
                "mapped": self.result.mapped_count,
                "unmapped": self.result.unmapped_count,
            }
            out["iteration"] = self.result.iteration
            out["tau"] = self.result.tau
        return out


def _theme_payload(session: Session, theme: Theme) -> dict:
    mapped = sum(
        1
        for rid in session.store.ids()
        if session.store.get_instance(rid).assignment.theme_id == theme.theme_id
    )
    return {
        "theme_id": theme.theme_id,
        "name": theme.name,
        "created_iteration": theme.created_iteration,
        "scoreable": theme.scoreable,
        "mapped_count": mapped,
        "good": [
            {"kind": e.kind, "key": e.key, "concepts": e.concepts}
            for e in (theme.good[k] for k in sorted(theme.good))
        ],
        "bad": [
            {"kind": e.kind, "key": e.key, "concepts": e.concepts}
            for e in (theme.bad[k] for k in sorted(theme.bad))
        ],
        "phrases": sorted(theme.phrases),
    }


def _instance_payload(session: Session, rid: str) -> dict:
    inst = session.store.get_instance(rid)
    a = inst.assignment
    return {
        "id": inst.id,
        "text": inst.text,
        "concepts": dict(sorted(inst.concepts.items())),
        "corrected": sorted(inst.corrected),
        "assignment": a.to_json(),
        "meta": dict(sorted(inst.source_meta.items())),
    }


def create_app(session: Session) -> FastAPI:
    app = FastAPI(title="themekit", version="0.1.0")
    jobs: dict[str, MappingJob] = {}
    jobs_lock = threading.Lock()

    class _AuthError(Exception):
        pass

    # static-token check; anonymous when no token configured
    def require_auth(authorization: str | None = Header(default=None),
                     x_auth_token: str | None = Header(default=None)) -> None:
        token = session.config.token
        if not token:
            return
        supplied = x_auth_token
        if authorization and authorization.lower().startswith("bearer "):
            supplied = authorization[7:]
        if supplied != token:
            raise _AuthError()

    guarded = [Depends(require_auth)]

    @app.exception_handler(ThemekitError)
    async def themekit_error(_req: Request, exc: ThemekitError) -> JSONResponse:
        status = _STATUS_BY_CODE.get(exc.code, 400)
        return JSONResponse(
            status_code=status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.exception_handler(_AuthError)
    async def auth_error(_req: Request, _exc: _AuthError) -> JSONResponse:
        return JSONResponse(
            status_code=401,
            content={"code": "unauthorized", "message": "missing or bad token", "detail": None},
        )

    def check_mutable() -> None:
        session.check_mutable()

    def committed(iteration: int | None) -> MappingResult:
        if iteration is None:
            return session.latest_result()
        return session.committed_result(iteration)

    # ------------------------------------------------------------------
    # corpus
    # ------------------------------------------------------------------

    @app.get("/healthz")
    def healthz() -> dict:
        return {"ok": True, "ready": session.store.ready}

    @app.get("/stats", dependencies=guarded)
    def stats() -> dict:
        return session.store.stats().to_json()

    @app.get("/schema", dependencies=guarded)
    def schema() -> dict:
        return session.store.schema.to_json()

    @app.get("/session", dependencies=guarded)
    def session_state() -> dict:
        return {
            "iteration": session.iteration,
            "phase": session.phase,
            "config": session.config.to_json(),
            "partition_count": len(session.partitions),
            "committed_iterations": [r.iteration for r in session.mapping_history],
        }

    @app.get("/instances/{rid}", dependencies=guarded)
    def get_instance(rid: str) -> dict:
        return _instance_payload(session, rid)

    @app.post("/instances/{rid}/concepts", dependencies=guarded)
    def upsert_concepts(rid: str, body: ConceptEditsBody) -> dict:
        check_mutable()
        session.store.upsert_concepts(rid, body.edits)
        return _instance_payload(session, rid)

    # ------------------------------------------------------------------
    # partitions
    # ------------------------------------------------------------------

    def _partition_payload(p) -> dict:
        return {
            "partition_id": p.partition_id,
            "size": p.size,
            "cohesion": p.cohesion,
            "is_noise": p.is_noise,
        }

    @app.post("/partitions/kmeans", dependencies=guarded)
    def partitions_kmeans(body: KmeansBody) -> dict:
        check_mutable()
        parts = session.run_kmeans(body.k, body.seed)
        return {
            "partitions": [_partition_payload(p) for p in parts],
            "balance": session.partition_balance(),
        }

    @app.post("/partitions/density", dependencies=guarded)
    def partitions_density(body: DensityBody) -> dict:
        check_mutable()
        parts = session.run_density(body.min_cluster_size)
        return {
            "partitions": [_partition_payload(p) for p in parts],
            "balance": session.partition_balance(),
        }

    @app.get("/partitions", dependencies=guarded)
    def partitions_list() -> dict:
        return {
            "partitions": [_partition_payload(p) for p in session.partitions],
            "balance": session.partition_balance(),
        }

    @app.get("/partitions/{pid}/members", dependencies=guarded)
    def partition_members(pid: str, order: str = "closest-first", limit: int = 50) -> dict:
        for p in session.partitions:
            if p.partition_id == pid:
                ranked = rank_members(session.store, p, order)[: max(0, limit)]
                return {
                    "partition_id": pid,
                    "order": order,
                    "members": [_instance_payload(session, rid) for rid in ranked],
                }
        raise InvalidArgumentError(f"no active partition {pid!r}")

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    @app.post("/query/text", dependencies=guarded)
    def query_text(body: TextQueryBody) -> dict:
        hits = session.index.query_text(body.text, body.k, body.filter)
        return {
            "hits": [
                {"id": h.id, "similarity": h.similarity, "text": session.store.get_instance(h.id).text}
                for h in hits
            ]
        }

    @app.post("/query/neighbors", dependencies=guarded)
    def query_neighbors(body: NeighborQueryBody) -> dict:
        inst = session.store.get_instance(body.instance_id)
        hits = session.index.nearest_neighbors(inst.embedding, body.k, body.filter)
        return {
            "hits": [
                {"id": h.id, "similarity": h.similarity, "text": session.store.get_instance(h.id).text}
                for h in hits
            ]
        }

    # ------------------------------------------------------------------
    # themes
    # ------------------------------------------------------------------

    @app.get("/themes", dependencies=guarded)
    def list_themes() -> dict:
        return {"themes": [_theme_payload(session, t) for t in session.registry.themes()]}

    @app.post("/themes", dependencies=guarded, status_code=201)
    def create_theme(body: ThemeBody) -> dict:
        check_mutable()
        return _theme_payload(session, session.registry.create_theme(body.name))

    @app.patch("/themes/{tid}", dependencies=guarded)
    def rename_theme(tid: str, body: ThemeBody) -> dict:
        check_mutable()
        return _theme_payload(session, session.registry.rename_theme(tid, body.name))

    @app.delete("/themes/{tid}", dependencies=guarded)
    def delete_theme(tid: str) -> dict:
        check_mutable()
        released = session.registry.delete_theme(tid)
        return {"deleted": tid, "released_instances": released}

    @app.get("/themes/{tid}/members", dependencies=guarded)
    def theme_members(tid: str, order: str = "closest-first", limit: int = 50) -> dict:
        theme = session.registry.get(tid)
        members = [
            rid
            for rid in session.store.ids()
            if session.store.get_instance(rid).assignment.theme_id == tid
        ]
        sims = {
            rid: theme_similarity(session.store.get_instance(rid), theme) for rid in members
        }
        reverse = order == "closest-first"
        if order not in ("closest-first", "farthest-first"):
            raise InvalidArgumentError(f"order must be closest-first|farthest-first, got {order!r}")
        ranked = sorted(members, key=lambda r: ((-sims[r]) if reverse else sims[r], r))
        ranked = ranked[: max(0, limit)]
        return {
            "theme_id": tid,
            "order": order,
            "members": [
                dict(_instance_payload(session, rid), similarity=sims[rid]) for rid in ranked
            ],
        }

    @app.post("/themes/{tid}/exemplars", dependencies=guarded)
    def add_exemplar(tid: str, body: ExemplarBody) -> dict:
        check_mutable()
        return _theme_payload(session, session.registry.add_exemplar(tid, body.polarity, body.source))

    @app.post("/themes/{tid}/exemplars/remove", dependencies=guarded)
    def remove_exemplar(tid: str, body: SourceBody) -> dict:
        check_mutable()
        return _theme_payload(session, session.registry.remove_exemplar(tid, body.source))

    @app.post("/themes/{tid}/phrases", dependencies=guarded)
    def add_phrase(tid: str, body: PhraseBody) -> dict:
        check_mutable()
        return _theme_payload(session, session.registry.add_phrase(tid, body.text))

    @app.post("/themes/{tid}/exemplars/concepts", dependencies=guarded)
    def set_exemplar_concepts(tid: str, body: ExemplarConceptsBody) -> dict:
        check_mutable()
        ex = session.registry.set_exemplar_concepts(tid, body.source, body.concepts)
        return {"kind": ex.kind, "key": ex.key, "concepts": dict(sorted(ex.concepts.items()))}

    @app.post("/themes/export", dependencies=guarded)
    def themes_export(body: PathBody) -> dict:
        """Write the feedback file: full registry with exemplars, phrases,
        and concept annotations, for offline mapping runs."""
        blob = json.dumps(session.registry.state_json(), sort_keys=True, separators=(",", ":"))
        with open(body.path, "w", encoding="utf-8") as fh:
            fh.write(blob)
        return {"path": body.path, "themes": len(session.registry)}

    @app.post("/themes/import", dependencies=guarded)
    def themes_import(body: PathBody) -> dict:
        check_mutable()
        try:
            with open(body.path, "r", encoding="utf-8") as fh:
                state = json.load(fh)
        except FileNotFoundError as exc:
            raise InvalidArgumentError(f"no feedback file at {body.path}") from exc
        except json.JSONDecodeError as exc:
            raise SnapshotCorruptError(f"feedback file at {body.path} is not valid JSON") from exc
        session.registry.load_state(state)
        return {"themes": len(session.registry)}

    @app.get("/themes/{tid}/explanation", dependencies=guarded)
    def theme_explanation(tid: str, iteration: Optional[int] = None) -> dict:
        session.registry.get(tid)
        result = committed(iteration)
        payload = analytics.local_explanation(result, session.store, tid, session.stopwords)
        payload["name"] = session.registry.get(tid).name
        return payload

    # ------------------------------------------------------------------
    # mapping jobs
    # ------------------------------------------------------------------

    @app.post("/mapping/run", dependencies=guarded, status_code=202)
    def mapping_run(body: MappingRunBody) -> dict:
        job = MappingJob(uuid.uuid4().hex[:12], body.method, body.tau, body.scope)
        session.begin_mapping()  # raises 409 when another job is live
        with jobs_lock:
            jobs[job.job_id] = job

        def run() -> None:
            try:
                result, model = session.run_mapping(
                    job.method, job.tau, job.scope,
                    progress=lambda p: setattr(job, "progress", p),
                )
                job.result = result
                job.model = model
                job.state = "done"
                job.progress = 1.0
            except Exception as exc:  # surfaced via job polling
                job.state = "failed"
                job.error = str(exc)
                job.error_code = getattr(exc, "code", "error")
            finally:
                session.end_mapping()

        threading.Thread(target=run, daemon=True).start()
        return job.summary()

    @app.get("/mapping/jobs/{job_id}", dependencies=guarded)
    def mapping_job(job_id: str) -> dict:
        job = jobs.get(job_id)
        if job is None:
            raise InvalidArgumentError(f"unknown mapping job {job_id!r}")
        return job.summary()

    @app.get("/mapping/jobs/{job_id}/metrics", dependencies=guarded)
    def mapping_job_metrics(job_id: str) -> dict:
        """Quality numbers for a finished-but-uncommitted job, so coders can
        weigh coverage against purity before committing."""
        job = jobs.get(job_id)
        if job is None:
            raise InvalidArgumentError(f"unknown mapping job {job_id!r}")
        if job.result is None:
            raise PhaseConflictError(f"job {job_id} has no result yet")
        result = job.result
        return {
            "job_id": job_id,
            "method": result.method,
            "tau": result.tau,
            "coverage": analytics.coverage(result),
            "average_purity": analytics.avg_concept_purity(result, session.store),
            "per_concept": {
                c: analytics.concept_purity(result, session.store, c)
                for c in session.store.schema.names()
            },
        }

    @app.post("/mapping/commit", dependencies=guarded)
    def mapping_commit(body: CommitBody) -> dict:
        job = jobs.get(body.job_id)
        if job is None:
            raise InvalidArgumentError(f"unknown mapping job {body.job_id!r}")
        if job.state == "committed":
            return job.commit_payload  # idempotent: repeating a commit is a no-op
        if job.state == "failed":
            raise InvalidArgumentError(f"job {body.job_id} failed: {job.error}")
        if job.state != "done":
            raise PhaseConflictError(f"job {body.job_id} is still running")
        parts = session.commit_mapping(job.result)
        job.state = "committed"
        job.commit_payload = {
            "job_id": job.job_id,
            "committed_iteration": job.result.iteration,
            "iteration": session.iteration,
            "coverage": analytics.coverage(job.result),
            "partitions": [_partition_payload(p) for p in parts],
        }
        return job.commit_payload

    @app.get("/mapping/jobs/{job_id}/model", dependencies=guarded)
    def mapping_job_model(job_id: str) -> Response:
        """Serialized rule-weight model of a finished nesy job."""
        job = jobs.get(job_id)
        if job is None:
            raise InvalidArgumentError(f"unknown mapping job {job_id!r}")
        if job.model is None:
            raise InvalidArgumentError(f"job {job_id} has no model (baseline or unfinished)")
        return Response(content=job.model.dumps(), media_type="application/json")

    @app.get("/mapping/preview", dependencies=guarded)
    def mapping_preview(tau: float) -> dict:
        """Instant coverage preview from the cheap similarity scorer."""
        result, _ = session.run_mapping("nns", tau)
        return {"tau": tau, "coverage": analytics.coverage(result)}

    # ------------------------------------------------------------------
    # analytics
    # ------------------------------------------------------------------

    @app.get("/analytics/coverage", dependencies=guarded)
    def analytics_coverage(iteration: Optional[int] = None) -> dict:
        result = committed(iteration)
        return {
            "iteration": result.iteration,
            "method": result.method,
            "coverage": analytics.coverage(result),
            "counts": {"total": result.total, "mapped": result.mapped_count},
        }

    @app.get("/analytics/purity", dependencies=guarded)
    def analytics_purity(concept: str, iteration: Optional[int] = None) -> dict:
        result = committed(iteration)
        return {
            "iteration": result.iteration,
            "concept": concept,
            "purity": analytics.concept_purity(result, session.store, concept),
        }

    @app.get("/analytics/purity/average", dependencies=guarded)
    def analytics_avg_purity(iteration: Optional[int] = None) -> dict:
        result = committed(iteration)
        return {
            "iteration": result.iteration,
            "average_purity": analytics.avg_concept_purity(result, session.store),
            "per_concept": {
                c: analytics.concept_purity(result, session.store, c)
                for c in session.store.schema.names()
            },
        }

    @app.get("/analytics/quartiles", dependencies=guarded)
    def analytics_quartiles(iteration: Optional[int] = None) -> dict:
        result = committed(iteration)
        return dict(analytics.quartile_slices(result).to_json(), iteration=result.iteration)

    @app.post("/analytics/overlap", dependencies=guarded)
    def analytics_overlap(body: OverlapBody) -> dict:
        def side(s: OverlapSide) -> dict[str, set[str]]:
            if s.sets is not None:
                return {k: set(v) for k, v in s.sets.items()}
            result = committed(s.iteration)
            names = session.theme_names()
            return {names.get(tid, tid): ids for tid, ids in result.id_sets().items()}

        matrix = analytics.overlap_matrix(side(body.a), side(body.b))
        return matrix.to_json()

    @app.get("/analytics/shift", dependencies=guarded)
    def analytics_shift(prev: int, next: int) -> dict:
        matrix = analytics.shift_matrix(committed(prev), committed(next))
        names = session.theme_names()
        return {
            "rows": [names.get(l, l) for l in matrix.row_labels],
            "cols": [names.get(l, l) for l in matrix.col_labels],
            "values": matrix.values,
        }

    @app.post("/analytics/evaluation", dependencies=guarded)
    def analytics_evaluation(body: EvaluationBody) -> dict:
        result = committed(body.iteration)
        report = analytics.evaluation_report(result, body.gold, body.average)
        return dict(report.to_json(), iteration=result.iteration)

    @app.post("/analytics/sample", dependencies=guarded)
    def analytics_sample(body: SampleBody) -> dict:
        result = committed(body.iteration)
        ids = analytics.stratified_sample(result, body.n, body.seed)
        return {"iteration": result.iteration, "ids": ids}

    @app.get("/analytics/global", dependencies=guarded)
    def analytics_global(sample_size: int = 2000, seed: int = 0) -> dict:
        return analytics.global_state(
            session.store, session.theme_names(), sample_size=sample_size, seed=seed
        )

    @app.post("/analytics/report", dependencies=guarded)
    def analytics_report(body: ReportBody) -> dict:
        """Write the iteration's metric tables (TSV + manifest) to a directory."""
        result = committed(body.iteration)
        prev = None
        if body.prev_iteration is not None:
            prev = session.committed_result(body.prev_iteration)
        manifest = analytics.write_report(
            body.path, result, session.store, session.theme_names(), prev_result=prev
        )
        return {"path": body.path, "manifest": manifest}

    # ------------------------------------------------------------------
    # export / import
    # ------------------------------------------------------------------

    @app.post("/session/export", dependencies=guarded)
    def session_export(body: PathBody) -> dict:
        digest = session.export(body.path)
        return {"path": body.path, "sha256": digest}

    @app.get("/session/snapshot", dependencies=guarded)
    def session_snapshot() -> Response:
        return Response(content=session.export_bytes(), media_type="application/json")

    @app.post("/session/import", dependencies=guarded)
    def session_import(body: PathBody) -> dict:
        check_mutable()
        try:
            with open(body.path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except FileNotFoundError as exc:
            raise InvalidArgumentError(f"no snapshot at {body.path}") from exc
        except json.JSONDecodeError as exc:
            raise SnapshotCorruptError(f"snapshot at {body.path} is not valid JSON") from exc
        session.load_snapshot(obj)
        return {
            "iteration": session.iteration,
            "stats": session.store.stats().to_json(),
            "themes": len(session.registry),
        }

    return app
