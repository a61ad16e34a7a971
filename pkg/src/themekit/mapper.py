"""Weighted-rule mapping of instances to themes.

Four rule-template families drive the mapping:

  * per-theme base rules: instance evidence -> theme, realized as one
    binary scorer per theme over embedding-similarity features;
  * per-concept rules: instance evidence -> concept value, realized as one
    multinomial scorer per concept, used only to impute values an instance
    does not carry;
  * concept-theme affinity rules: (instance has concept value) -> theme,
    realized as the learned coefficients on the concept one-hot block of
    each theme scorer;
  * pairwise exclusion between themes, realized structurally: scores are
    per-instance, so the most-likely joint assignment under exactly-one
    semantics factorizes into an independent argmax per instance (verified
    against exhaustive enumeration in the test suite).

Training data comes from expert feedback: the K closest corpus instances
to each good/bad exemplar inherit its polarity, plus cross-theme negatives
drawn from other themes' positives. An instance scores into a theme when
its calibrated score clears the threshold tau, otherwise it stays
unassigned and is re-partitioned for the next session.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy.optimize import minimize

from .errors import (
    DegenerateTrainingError,
    InvalidArgumentError,
    NoPositiveExemplarsError,
    UnscoreableThemeError,
)
from .index import EmbedIndex, theme_similarity_matrix
from .partition import Partition, kmeans_partition
from .store import Assignment, CorpusStore, UNASSIGNED
from .themes import Theme, ThemeRegistry

DEFAULT_K = 100
DEFAULT_TAU = 0.6
L2_PENALTY = 1e-2
MAX_OPT_ITER = 200
SCORE_CHUNK = 4096

PROV_EXPERT = "expert-exemplar"
PROV_NEIGHBOR = "neighbor-of-exemplar"
PROV_CROSS = "cross-theme-negative"


@dataclass(frozen=True)
class TrainingRow:
    instance_id: str
    theme_id: str
    polarity: int  # +1 positive, -1 negative
    provenance: str
    closeness: float  # cosine to the generating exemplar
    concepts: Mapping[str, str]  # instance concepts merged with exemplar overrides


@dataclass
class TrainingSet:
    rows: list[TrainingRow]
    theme_ids: list[str]

    def __post_init__(self):
        seen: dict[tuple[str, str], int] = {}
        for row in self.rows:
            key = (row.instance_id, row.theme_id)
            if key in seen and seen[key] != row.polarity:
                raise InvalidArgumentError(
                    f"instance {row.instance_id!r} is both positive and negative "
                    f"for theme {row.theme_id!r}"
                )
            seen[key] = row.polarity

    def rows_for(self, theme_id: str) -> list[TrainingRow]:
        return [r for r in self.rows if r.theme_id == theme_id]


@dataclass(frozen=True)
class InstanceAssignment:
    theme_id: str | None
    score: float
    centroid_sim: float | None  # similarity to the assigned theme's centroid

    @property
    def assigned(self) -> bool:
        return self.theme_id is not None


@dataclass
class MappingResult:
    """Per-iteration snapshot of the full corpus assignment state."""

    iteration: int
    method: str  # "nesy" | "nns"
    tau: float
    assignments: dict[str, InstanceAssignment]

    @property
    def total(self) -> int:
        return len(self.assignments)

    @property
    def mapped_count(self) -> int:
        return sum(1 for a in self.assignments.values() if a.assigned)

    @property
    def unmapped_count(self) -> int:
        return self.total - self.mapped_count

    def label(self, instance_id: str) -> str | None:
        return self.assignments[instance_id].theme_id

    def id_sets(self) -> dict[str, set[str]]:
        """Mapped instance ids grouped by theme id."""
        out: dict[str, set[str]] = {}
        for rid, a in self.assignments.items():
            if a.assigned:
                out.setdefault(a.theme_id, set()).add(rid)
        return out

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "method": self.method,
            "tau": self.tau,
            "assignments": {
                rid: [a.theme_id, a.score, a.centroid_sim]
                for rid, a in sorted(self.assignments.items())
            },
            "counts": {
                "total": self.total,
                "mapped": self.mapped_count,
                "unmapped": self.unmapped_count,
            },
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "MappingResult":
        return cls(
            iteration=obj["iteration"],
            method=obj["method"],
            tau=obj["tau"],
            assignments={
                rid: InstanceAssignment(entry[0], entry[1], entry[2])
                for rid, entry in obj["assignments"].items()
            },
        )


MODEL_FORMAT_VERSION = 1


@dataclass
class RuleWeightModel:
    """Learned rule weights plus the unassigned threshold tau.

    ``theme_weights[tid]`` is (w, b) over [theme sims | concept one-hots];
    themes without both training classes fall back to pure similarity.
    ``concept_models[c]`` is (W, b) mapping sim features to value logits.
    """

    theme_ids: list[str]
    concept_slots: list[tuple[str, str]]  # (concept, value) in feature order
    theme_weights: dict[str, tuple[np.ndarray, float]] = field(default_factory=dict)
    fallback_themes: set[str] = field(default_factory=set)
    concept_models: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)
    concept_values: dict[str, tuple[str, ...]] = field(default_factory=dict)
    tau: float = DEFAULT_TAU

    def with_tau(self, tau: float) -> "RuleWeightModel":
        return replace(self, tau=tau)

    def concept_affinities(self, theme_id: str) -> dict[tuple[str, str], float]:
        """Learned weight of each concept value toward this theme."""
        if theme_id in self.fallback_themes:
            return {slot: 0.0 for slot in self.concept_slots}
        w, _ = self.theme_weights[theme_id]
        offset = len(self.theme_ids)
        return {slot: float(w[offset + i]) for i, slot in enumerate(self.concept_slots)}

    def to_json(self) -> dict:
        return {
            "format": MODEL_FORMAT_VERSION,
            "tau": self.tau,
            "theme_ids": list(self.theme_ids),
            "concept_slots": [list(s) for s in self.concept_slots],
            "fallback_themes": sorted(self.fallback_themes),
            "theme_weights": {
                tid: {"w": [float(v) for v in w], "b": float(b)}
                for tid, (w, b) in sorted(self.theme_weights.items())
            },
            "concept_models": {
                c: {
                    "values": list(self.concept_values[c]),
                    "W": [[float(v) for v in row] for row in W],
                    "b": [float(v) for v in b],
                }
                for c, (W, b) in sorted(self.concept_models.items())
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, obj: Mapping) -> "RuleWeightModel":
        if obj.get("format", 0) > MODEL_FORMAT_VERSION:
            from .errors import SnapshotVersionError

            raise SnapshotVersionError("model format newer than supported")
        model = cls(
            theme_ids=list(obj["theme_ids"]),
            concept_slots=[tuple(s) for s in obj["concept_slots"]],
            tau=obj["tau"],
        )
        model.fallback_themes = set(obj.get("fallback_themes", ()))
        for tid, entry in obj.get("theme_weights", {}).items():
            model.theme_weights[tid] = (np.asarray(entry["w"], dtype=np.float64), entry["b"])
        for c, entry in obj.get("concept_models", {}).items():
            model.concept_values[c] = tuple(entry["values"])
            model.concept_models[c] = (
                np.asarray(entry["W"], dtype=np.float64),
                np.asarray(entry["b"], dtype=np.float64),
            )
        return model

    @classmethod
    def loads(cls, text: str) -> "RuleWeightModel":
        return cls.from_json(json.loads(text))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _fit_logistic(x: np.ndarray, y: np.ndarray, l2: float = L2_PENALTY) -> tuple[np.ndarray, float]:
    """Binary logistic regression, mean NLL + l2/2 |w|^2 (bias free).

    Mean-normalized loss keeps the optimum invariant under dataset
    duplication; L-BFGS with a fixed iteration cap keeps it deterministic.
    """
    n, f = x.shape
    signs = np.where(y > 0, 1.0, -1.0)

    def objective(params: np.ndarray):
        w, b = params[:f], params[f]
        z = signs * (x @ w + b)
        # log(1 + exp(-z)) computed stably
        loss = np.logaddexp(0.0, -z).mean() + 0.5 * l2 * float(w @ w)
        p = _sigmoid(-z)  # d/dz log(1+exp(-z)) = -sigmoid(-z)
        gz = -(signs * p) / n
        grad = np.concatenate([x.T @ gz + l2 * w, [gz.sum()]])
        return loss, grad

    result = minimize(
        objective,
        np.zeros(f + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": MAX_OPT_ITER},
    )
    return result.x[:f].copy(), float(result.x[f])


def _fit_softmax(x: np.ndarray, y: np.ndarray, n_classes: int, l2: float = L2_PENALTY):
    """Multinomial logistic regression; same determinism rules as above."""
    n, f = x.shape
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y] = 1.0

    def objective(params: np.ndarray):
        W = params[: n_classes * f].reshape(n_classes, f)
        b = params[n_classes * f :]
        logits = x @ W.T + b
        logits -= logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        probs = expl / expl.sum(axis=1, keepdims=True)
        nll = -np.log(np.maximum(probs[np.arange(n), y], 1e-300)).mean()
        loss = nll + 0.5 * l2 * float((W * W).sum())
        diff = (probs - onehot) / n
        grad_w = diff.T @ x + l2 * W
        grad_b = diff.sum(axis=0)
        return loss, np.concatenate([grad_w.ravel(), grad_b])

    result = minimize(
        objective,
        np.zeros(n_classes * f + n_classes),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": MAX_OPT_ITER},
    )
    W = result.x[: n_classes * f].reshape(n_classes, f).copy()
    b = result.x[n_classes * f :].copy()
    return W, b


class NesyMapper:
    """Training-data generation, weight learning, and constrained inference."""

    def __init__(self, store: CorpusStore, index: EmbedIndex, registry: ThemeRegistry):
        self.store = store
        self.index = index
        self.registry = registry

    # ------------------------------------------------------------------
    # training data
    # ------------------------------------------------------------------

    def generate_training_data(self, k_neighbors: int = DEFAULT_K, seed: int = 0) -> TrainingSet:
        """K-neighborhood expansion of expert exemplars into labeled rows.

        Good neighborhoods are positives, bad neighborhoods negatives; other
        themes' positives become seeded equal-count negatives. Conflicts on
        (instance, theme) resolve toward the closer exemplar, positives
        winning exact ties. Exemplar concept judgments override the
        instance's own concepts on its rows.
        """
        if k_neighbors < 1:
            raise InvalidArgumentError(f"K must be >= 1, got {k_neighbors}")
        themes = self.registry.scoreable_themes()
        if not themes:
            raise NoPositiveExemplarsError("no theme has a positive exemplar")
        theme_ids = [t.theme_id for t in themes]

        # candidate rows per (theme, instance); closest exemplar wins
        candidates: dict[tuple[str, str], TrainingRow] = {}

        def offer(row: TrainingRow) -> None:
            key = (row.theme_id, row.instance_id)
            cur = candidates.get(key)
            if cur is None or (row.closeness, row.polarity) > (cur.closeness, cur.polarity):
                candidates[key] = row

        for theme in themes:
            for polarity, bucket in ((+1, theme.good), (-1, theme.bad)):
                for key in sorted(bucket):
                    exemplar = bucket[key]
                    hits = self.index.nearest_neighbors(exemplar.embedding, k_neighbors, "all")
                    for hit in hits:
                        inst = self.store.get_instance(hit.id)
                        merged = dict(inst.concepts)
                        merged.update(exemplar.concepts)
                        expert = exemplar.kind == "instance" and hit.id == exemplar.key
                        offer(
                            TrainingRow(
                                instance_id=hit.id,
                                theme_id=theme.theme_id,
                                polarity=polarity,
                                provenance=PROV_EXPERT if expert else PROV_NEIGHBOR,
                                closeness=1.0 if expert else hit.similarity,
                                concepts=merged,
                            )
                        )

        rows = [candidates[k] for k in sorted(candidates)]

        # cross-theme negatives: per theme, an equal-count seeded sample of
        # the other themes' positive rows
        positives_by_theme = {
            tid: [r for r in rows if r.theme_id == tid and r.polarity > 0] for tid in theme_ids
        }
        cross: list[TrainingRow] = []
        for j, tid in enumerate(theme_ids):
            taken = {(r.theme_id, r.instance_id) for r in rows}
            pool = [
                r
                for other, prows in sorted(positives_by_theme.items())
                if other != tid
                for r in prows
                if (tid, r.instance_id) not in taken
            ]
            pool.sort(key=lambda r: (r.instance_id, r.theme_id))
            # one instance may be positive for two other themes; keep first
            deduped: list[TrainingRow] = []
            seen_inst: set[str] = set()
            for r in pool:
                if r.instance_id not in seen_inst:
                    seen_inst.add(r.instance_id)
                    deduped.append(r)
            want = min(len(positives_by_theme[tid]), len(deduped))
            if want == 0:
                continue
            rng = np.random.default_rng([seed, j])
            picks = rng.choice(len(deduped), size=want, replace=False)
            for i in sorted(int(p) for p in picks):
                src = deduped[i]
                cross.append(
                    TrainingRow(
                        instance_id=src.instance_id,
                        theme_id=tid,
                        polarity=-1,
                        provenance=PROV_CROSS,
                        closeness=src.closeness,
                        concepts=src.concepts,
                    )
                )
        return TrainingSet(rows=rows + cross, theme_ids=theme_ids)

    # ------------------------------------------------------------------
    # features
    # ------------------------------------------------------------------

    def _concept_slots(self) -> list[tuple[str, str]]:
        schema = self.store.schema
        return [(c, v) for c in schema.names() for v in schema.values(c)]

    def _featurize_rows(
        self, data: TrainingSet, themes: list[Theme], slots: list[tuple[str, str]]
    ) -> np.ndarray:
        ids = sorted({r.instance_id for r in data.rows})
        _, mat = self.store.embedding_matrix(ids)
        sims = theme_similarity_matrix(mat, themes)
        sim_by_id = {rid: sims[i] for i, rid in enumerate(ids)}
        slot_index = {slot: i for i, slot in enumerate(slots)}
        out = np.zeros((len(data.rows), len(themes) + len(slots)))
        for i, row in enumerate(data.rows):
            out[i, : len(themes)] = sim_by_id[row.instance_id]
            for c, v in row.concepts.items():
                j = slot_index.get((c, v))
                if j is not None:
                    out[i, len(themes) + j] = 1.0
        return out

    # ------------------------------------------------------------------
    # learning
    # ------------------------------------------------------------------

    def learn_weights(self, data: TrainingSet, tau: float = DEFAULT_TAU) -> RuleWeightModel:
        """Deterministic convex training of per-theme and per-concept scorers.

        Themes lacking either training class fall back to pure similarity
        scoring with zero concept affinities; an empty set (phrase-only
        feedback) therefore yields an all-fallback model. A set that is all
        negatives carries no mappable signal at all and is rejected.
        """
        if data.rows and not any(r.polarity > 0 for r in data.rows):
            raise DegenerateTrainingError(
                "degenerate training data: every row is negative, no theme has positive rows"
            )
        themes = [self.registry.get(tid) for tid in data.theme_ids]
        slots = self._concept_slots()
        x = self._featurize_rows(data, themes, slots)
        model = RuleWeightModel(theme_ids=list(data.theme_ids), concept_slots=slots, tau=tau)

        row_index = {id(r): i for i, r in enumerate(data.rows)}
        for tid in data.theme_ids:
            rows_t = data.rows_for(tid)
            has_pos = any(r.polarity > 0 for r in rows_t)
            has_neg = any(r.polarity < 0 for r in rows_t)
            if not (has_pos and has_neg):
                model.fallback_themes.add(tid)
                continue
            idx = [row_index[id(r)] for r in rows_t]
            y = np.array([1 if r.polarity > 0 else 0 for r in rows_t])
            w, b = _fit_logistic(x[idx], y)
            model.theme_weights[tid] = (w, b)

        # per-concept imputation scorers over the similarity block
        schema = self.store.schema
        sim_block = x[:, : len(themes)]
        for c in schema.names():
            values = schema.values(c)
            observed = [
                (i, values.index(r.concepts[c]))
                for i, r in enumerate(data.rows)
                if c in r.concepts and r.concepts[c] in values
            ]
            model.concept_values[c] = tuple(values)
            if len({v for _, v in observed}) >= 2:
                rows_idx = [i for i, _ in observed]
                y_c = np.array([v for _, v in observed])
                W, b = _fit_softmax(sim_block[rows_idx], y_c, len(values))
            else:
                W = np.zeros((len(values), len(themes)))
                b = np.zeros(len(values))
                if observed:  # constant predictor of the single observed value
                    b[observed[0][1]] = 1.0
            model.concept_models[c] = (W, b)
        return model

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    def _check_scoreable(self) -> None:
        themes = self.registry.themes()
        if not themes:
            raise UnscoreableThemeError("no themes exist; create and exemplify one first")
        dead = [t.name for t in themes if not t.scoreable]
        if dead:
            raise UnscoreableThemeError(
                f"themes without positive exemplars: {', '.join(sorted(dead))}",
                detail={"themes": sorted(dead)},
            )

    def _scope_ids(self, scope: str) -> list[str]:
        if scope == "full":
            return self.store.ids()
        if scope == "unassigned":
            return self.store.unassigned_ids()
        raise InvalidArgumentError(f"scope must be full|unassigned, got {scope!r}")

    def _centroid_sims(self, ids: list[str], labels: list[str | None]) -> list[float | None]:
        centroids = {
            t.theme_id: t.centroid.astype(np.float64)
            for t in self.registry.themes()
            if t.scoreable
        }
        out: list[float | None] = []
        for rid, tid in zip(ids, labels):
            centroid = None if tid is None else centroids.get(tid)
            if centroid is None:
                out.append(None)
            else:
                emb = self.store.get_instance(rid).embedding.astype(np.float64)
                out.append(float(emb @ centroid))
        return out

    def _carryover(self, scope_ids: list[str]) -> dict[str, InstanceAssignment]:
        scope = set(scope_ids)
        carried: dict[str, InstanceAssignment] = {}
        keep_ids, keep_labels = [], []
        for rid in self.store.ids():
            if rid in scope:
                continue
            a = self.store.get_instance(rid).assignment
            keep_ids.append(rid)
            keep_labels.append(a.theme_id)
            carried[rid] = InstanceAssignment(a.theme_id, a.score if a.assigned else 0.0, None)
        for rid, sim in zip(keep_ids, self._centroid_sims(keep_ids, keep_labels)):
            carried[rid] = replace(carried[rid], centroid_sim=sim)
        return carried

    def _assemble(
        self,
        method: str,
        tau: float,
        iteration: int,
        scope_ids: list[str],
        scores: np.ndarray,
        theme_ids: list[str],
        progress: Callable[[float], None] | None = None,
    ) -> MappingResult:
        clamps = self.registry.clamped_instances()
        labels: list[str | None] = []
        final_scores: list[float] = []
        for i, rid in enumerate(scope_ids):
            clamp = clamps.get(rid)
            if clamp is not None:
                labels.append(clamp)
                final_scores.append(1.0)
                continue
            j = int(np.argmax(scores[i]))
            s = float(scores[i, j])
            if s >= tau:
                labels.append(theme_ids[j])
                final_scores.append(s)
            else:
                labels.append(None)
                final_scores.append(s)
        sims = self._centroid_sims(scope_ids, labels)
        assignments = self._carryover(scope_ids)
        for rid, tid, s, csim in zip(scope_ids, labels, final_scores, sims):
            assignments[rid] = InstanceAssignment(tid, s, csim)
        if progress is not None:
            progress(1.0)
        return MappingResult(iteration=iteration, method=method, tau=tau, assignments=assignments)

    def score_instances(
        self,
        model: RuleWeightModel,
        ids: list[str],
        progress: Callable[[float], None] | None = None,
    ) -> np.ndarray:
        """(n, themes) calibrated scores in [0,1], before clamps/threshold.

        Observed concept values clamp their one-hot; missing values are
        imputed by the per-concept scorer's argmax.
        """
        themes = [self.registry.get(tid) for tid in model.theme_ids]
        n = len(ids)
        scores = np.zeros((n, len(themes)))
        slot_index = {slot: i for i, slot in enumerate(model.concept_slots)}
        schema = self.store.schema
        for start in range(0, n, SCORE_CHUNK):
            chunk = ids[start : start + SCORE_CHUNK]
            _, mat = self.store.embedding_matrix(chunk)
            sims = theme_similarity_matrix(mat, themes)
            feats = np.zeros((len(chunk), len(themes) + len(model.concept_slots)))
            feats[:, : len(themes)] = sims
            for i, rid in enumerate(chunk):
                inst = self.store.get_instance(rid)
                for c in schema.names():
                    value = inst.concepts.get(c)
                    if value is None:
                        W, b = model.concept_models[c]
                        value = model.concept_values[c][int(np.argmax(W @ sims[i] + b))]
                    j = slot_index.get((c, value))
                    if j is not None:
                        feats[i, len(themes) + j] = 1.0
            for j, tid in enumerate(model.theme_ids):
                if tid in model.fallback_themes:
                    scores[start : start + len(chunk), j] = np.clip(sims[:, j], 0.0, 1.0)
                else:
                    w, b = model.theme_weights[tid]
                    scores[start : start + len(chunk), j] = _sigmoid(feats @ w + b)
            if progress is not None:
                progress(min(1.0, (start + len(chunk)) / max(1, n)))
        return scores

    def infer(
        self,
        model: RuleWeightModel,
        scope: str = "full",
        iteration: int = 1,
        progress: Callable[[float], None] | None = None,
    ) -> MappingResult:
        """Most-likely assignment per instance under the learned rule weights.

        Expert good-marks are clamped to their theme. Per-instance
        independence makes this argmax equal to the global MAP under
        exactly-one semantics.
        """
        self._check_scoreable()
        scope_ids = self._scope_ids(scope)
        scores = self.score_instances(model, scope_ids, progress)
        return self._assemble("nesy", model.tau, iteration, scope_ids, scores, model.theme_ids, progress)

    def nns_baseline(
        self, tau: float = DEFAULT_TAU, scope: str = "full", iteration: int = 1,
        progress: Callable[[float], None] | None = None,
    ) -> MappingResult:
        """Thresholded max-similarity mapping; no concepts, no learning."""
        self._check_scoreable()
        themes = self.registry.scoreable_themes()
        theme_ids = [t.theme_id for t in themes]
        scope_ids = self._scope_ids(scope)
        _, mat = self.store.embedding_matrix(scope_ids)
        sims = theme_similarity_matrix(mat, themes) if scope_ids else np.zeros((0, len(themes)))
        scores = np.clip(sims, 0.0, 1.0)
        return self._assemble("nns", tau, iteration, scope_ids, scores, theme_ids, progress)

    # ------------------------------------------------------------------
    # commit + re-partition
    # ------------------------------------------------------------------

    def commit(self, result: MappingResult) -> None:
        """Write the mapping into the store atomically."""
        updates = {}
        for rid, a in result.assignments.items():
            if a.assigned:
                updates[rid] = Assignment(a.theme_id, a.score, max(1, result.iteration))
            else:
                updates[rid] = UNASSIGNED
        self.store.set_assignments(updates)

    def repartition_after_mapping(
        self, result: MappingResult, k: int, seed: int = 0
    ) -> list[Partition]:
        """Commit, then cluster the unassigned remainder for the next round.

        The k-means seed is derived from the iteration number so each round
        explores a fresh initialization but reruns reproduce exactly.
        """
        self.commit(result)
        remainder = self.store.unassigned_ids()
        if not remainder:
            return []
        k_eff = min(k, len(remainder))
        if k_eff < 2:
            from .partition import _make_partition

            _, mat = self.store.embedding_matrix(remainder)
            return [_make_partition("p0", remainder, mat.astype(np.float64))]
        return kmeans_partition(self.store, remainder, k_eff, seed=seed + result.iteration)
