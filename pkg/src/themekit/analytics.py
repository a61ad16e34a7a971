"""Quantitative lenses over committed mappings.

Coverage, per-concept purity, quartile-sliced quality, overlap and shift
matrices, gold-judgment evaluation, and local/global explanations. All
functions are pure read-only computations over a MappingResult and the
store/registry, so they can run concurrently with anything.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    CorpusMismatchError,
    EmptyMappingError,
    GoldLabelError,
    InvalidArgumentError,
    UnknownConceptError,
)
from .mapper import MappingResult
from .store import CorpusStore
from .stopwords import DEFAULT_STOPWORDS

UNKNOWN = "Unknown"

_TOKEN_RE = re.compile(r"[a-z0-9']+")


# ----------------------------------------------------------------------
# coverage and purity
# ----------------------------------------------------------------------


def coverage(result: MappingResult) -> float:
    """Percent of the corpus carrying any theme assignment."""
    if result.total == 0:
        raise EmptyMappingError("mapping covers an empty corpus")
    return 100.0 * result.mapped_count / result.total


def concept_purity(result: MappingResult, store: CorpusStore, concept: str) -> float:
    """Modal-value share of the concept across theme clusters.

    For each theme cluster, count the members sharing the cluster's most
    common value; sum over clusters and divide by the number of mapped
    instances. Unmapped instances are excluded entirely.
    """
    if concept not in store.schema:
        raise UnknownConceptError(f"unknown concept {concept!r}")
    clusters = result.id_sets()
    mapped = sum(len(v) for v in clusters.values())
    if mapped == 0:
        raise EmptyMappingError("no mapped instances")
    total = 0
    for members in clusters.values():
        counts: Counter[str] = Counter()
        for rid in members:
            value = store.get_instance(rid).concepts.get(concept)
            if value is not None:
                counts[value] += 1
        if counts:
            # ties break toward the lexicographically smallest value; the
            # count is identical either way
            best = max(sorted(counts), key=lambda v: counts[v])
            total += counts[best]
    return 100.0 * total / mapped


def avg_concept_purity(result: MappingResult, store: CorpusStore) -> float:
    names = store.schema.names()
    if not names:
        raise UnknownConceptError("schema has no concepts")
    return sum(concept_purity(result, store, c) for c in names) / len(names)


# ----------------------------------------------------------------------
# quartile slices
# ----------------------------------------------------------------------


@dataclass
class QuartileSlices:
    """Cumulative slices of mapped instances by similarity to their theme
    centroid. Q1 holds the 25% most similar; slices nest Q1 ⊆ Q2 ⊆ Q3 ⊆ All."""

    similarities: dict[str, float]
    thresholds: tuple[float, float, float]  # similarity cutoffs for Q1..Q3
    q1_ids: list[str]
    q2_ids: list[str]
    q3_ids: list[str]
    all_ids: list[str]

    def slices(self) -> list[tuple[str, list[str]]]:
        return [("Q1", self.q1_ids), ("Q2", self.q2_ids), ("Q3", self.q3_ids), ("All", self.all_ids)]

    def band(self, rid: str) -> int:
        """1..4: the tightest cumulative slice containing the instance."""
        sim = self.similarities[rid]
        for k, cutoff in enumerate(self.thresholds, start=1):
            if sim >= cutoff:
                return k
        return 4

    def to_json(self) -> dict:
        return {
            "thresholds": list(self.thresholds),
            "sizes": {
                "Q1": len(self.q1_ids),
                "Q2": len(self.q2_ids),
                "Q3": len(self.q3_ids),
                "All": len(self.all_ids),
            },
            "q1_ids": self.q1_ids,
            "q2_ids": self.q2_ids,
            "q3_ids": self.q3_ids,
            "all_ids": self.all_ids,
        }


def quartile_slices(result: MappingResult) -> QuartileSlices:
    """Nearest-rank quartile cuts of the mapped-similarity distribution."""
    sims = {
        rid: a.centroid_sim
        for rid, a in result.assignments.items()
        if a.assigned and a.centroid_sim is not None
    }
    n = len(sims)
    if n < 4:
        raise InvalidArgumentError(f"need >= 4 mapped instances for quartiles, have {n}")
    ordered = sorted(sims.values(), reverse=True)
    cutoffs = tuple(ordered[math.ceil(q * n) - 1] for q in (0.25, 0.5, 0.75))
    q_ids: list[list[str]] = [[], [], []]
    for k, cutoff in enumerate(cutoffs):
        q_ids[k] = sorted(rid for rid, s in sims.items() if s >= cutoff)
    return QuartileSlices(
        similarities=sims,
        thresholds=cutoffs,
        q1_ids=q_ids[0],
        q2_ids=q_ids[1],
        q3_ids=q_ids[2],
        all_ids=sorted(sims),
    )


# ----------------------------------------------------------------------
# overlap and shift matrices
# ----------------------------------------------------------------------


@dataclass
class OverlapMatrix:
    row_labels: list[str]
    col_labels: list[str]
    values: list[list[float]]  # Szymkiewicz-Simpson coefficients in [0,1]

    def at(self, row: str, col: str) -> float:
        return self.values[self.row_labels.index(row)][self.col_labels.index(col)]

    def to_json(self) -> dict:
        return {"rows": self.row_labels, "cols": self.col_labels, "values": self.values}


def overlap_coefficient(x: set, y: set) -> float:
    """|X ∩ Y| / min(|X|, |Y|); zero when either set is empty."""
    if not x or not y:
        return 0.0
    return len(x & y) / min(len(x), len(y))


def overlap_matrix(
    map_a: Mapping[str, Iterable[str]], map_b: Mapping[str, Iterable[str]]
) -> OverlapMatrix:
    if not map_a or not map_b:
        raise InvalidArgumentError("both label maps must be non-empty")
    rows = sorted(map_a)
    cols = sorted(map_b)
    sets_a = {k: set(v) for k, v in map_a.items()}
    sets_b = {k: set(v) for k, v in map_b.items()}
    values = [[overlap_coefficient(sets_a[r], sets_b[c]) for c in cols] for r in rows]
    return OverlapMatrix(rows, cols, values)


@dataclass
class ShiftMatrix:
    """Movement of instances between two iterations' labels, as percent of
    the full population. Entry (a, b): labeled a before, b after."""

    row_labels: list[str]
    col_labels: list[str]
    values: list[list[float]]

    def at(self, row: str, col: str) -> float:
        return self.values[self.row_labels.index(row)][self.col_labels.index(col)]

    @property
    def total(self) -> float:
        return float(sum(sum(row) for row in self.values))

    def to_json(self) -> dict:
        return {"rows": self.row_labels, "cols": self.col_labels, "values": self.values}


def shift_matrix(prev: MappingResult, nxt: MappingResult) -> ShiftMatrix:
    if set(prev.assignments) != set(nxt.assignments):
        raise CorpusMismatchError("mappings cover different corpora")
    n = prev.total
    if n == 0:
        raise EmptyMappingError("mappings cover an empty corpus")

    def lbl(a) -> str:
        return a.theme_id if a.assigned else UNKNOWN

    prev_labels = sorted({lbl(a) for a in prev.assignments.values()} - {UNKNOWN}) + [UNKNOWN]
    next_labels = sorted({lbl(a) for a in nxt.assignments.values()} - {UNKNOWN}) + [UNKNOWN]
    counts = {(r, c): 0 for r in prev_labels for c in next_labels}
    for rid in prev.assignments:
        counts[(lbl(prev.assignments[rid]), lbl(nxt.assignments[rid]))] += 1
    values = [[100.0 * counts[(r, c)] / n for c in next_labels] for r in prev_labels]
    return ShiftMatrix(prev_labels, next_labels, values)


# ----------------------------------------------------------------------
# gold-judgment evaluation
# ----------------------------------------------------------------------


def _f1_counts(pairs: list[tuple[str, str]], average: str) -> float:
    """F1 of (gold, predicted) label pairs; micro equals accuracy for
    single-label data, macro averages per-class F1 over observed labels."""
    if not pairs:
        return 0.0
    if average == "micro":
        tp = sum(1 for g, p in pairs if g == p)
        return 100.0 * tp / len(pairs)
    if average != "macro":
        raise InvalidArgumentError(f"average must be micro|macro, got {average!r}")
    labels = sorted({g for g, _ in pairs} | {p for _, p in pairs})
    scores = []
    for lab in labels:
        tp = sum(1 for g, p in pairs if g == lab and p == lab)
        fp = sum(1 for g, p in pairs if g != lab and p == lab)
        fn = sum(1 for g, p in pairs if g == lab and p != lab)
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 200.0 * tp / denom)
    return sum(scores) / len(scores)


@dataclass
class EvaluationReport:
    f1_by_slice: dict[str, float]  # Q1, Q2, Q3, All
    judged_by_slice: dict[str, int]
    confusion_labels_gold: list[str]
    confusion_labels_pred: list[str]
    confusion_counts: list[list[int]]
    confusion_normalized: list[list[float]]  # column-normalized over predictions
    average: str

    def to_json(self) -> dict:
        return {
            "f1_by_slice": self.f1_by_slice,
            "judged_by_slice": self.judged_by_slice,
            "confusion": {
                "gold_labels": self.confusion_labels_gold,
                "pred_labels": self.confusion_labels_pred,
                "counts": self.confusion_counts,
                "normalized": self.confusion_normalized,
            },
            "average": self.average,
        }


def evaluation_report(
    result: MappingResult, gold: Mapping[str, str], average: str = "micro"
) -> EvaluationReport:
    """Slice-wise F1 of assignments against manual judgments, plus the
    column-normalized confusion matrix. Gold may use labels outside the
    theme set (e.g. Other) but must reference mapped instances."""
    if not gold:
        raise GoldLabelError("no gold judgments supplied")
    for rid in gold:
        a = result.assignments.get(rid)
        if a is None:
            raise GoldLabelError(f"gold references unknown instance {rid!r}")
        if not a.assigned:
            raise GoldLabelError(f"gold references unmapped instance {rid!r}")
    slices = quartile_slices(result)
    f1_by_slice: dict[str, float] = {}
    judged_by_slice: dict[str, int] = {}
    for name, ids in slices.slices():
        members = set(ids)
        pairs = [
            (g, result.assignments[rid].theme_id) for rid, g in sorted(gold.items()) if rid in members
        ]
        f1_by_slice[name] = _f1_counts(pairs, average)
        judged_by_slice[name] = len(pairs)
    pairs_all = [(g, result.assignments[rid].theme_id) for rid, g in sorted(gold.items())]
    gold_labels = sorted({g for g, _ in pairs_all})
    pred_labels = sorted({p for _, p in pairs_all})
    counts = [[0] * len(pred_labels) for _ in gold_labels]
    for g, p in pairs_all:
        counts[gold_labels.index(g)][pred_labels.index(p)] += 1
    col_sums = [sum(counts[i][j] for i in range(len(gold_labels))) for j in range(len(pred_labels))]
    normalized = [
        [counts[i][j] / col_sums[j] if col_sums[j] else 0.0 for j in range(len(pred_labels))]
        for i in range(len(gold_labels))
    ]
    return EvaluationReport(
        f1_by_slice=f1_by_slice,
        judged_by_slice=judged_by_slice,
        confusion_labels_gold=gold_labels,
        confusion_labels_pred=pred_labels,
        confusion_counts=counts,
        confusion_normalized=normalized,
        average=average,
    )


def stratified_sample(result: MappingResult, n: int, seed: int = 0) -> list[str]:
    """Pick mapped instances spread uniformly across themes and their
    proximity bands, for manual validation."""
    if n < 1:
        raise InvalidArgumentError("sample size must be >= 1")
    slices = quartile_slices(result)
    by_theme_band: dict[tuple[str, int], list[str]] = {}
    for rid in slices.all_ids:
        key = (result.assignments[rid].theme_id, slices.band(rid))
        by_theme_band.setdefault(key, []).append(rid)
    rng = np.random.default_rng(seed)
    pools = []
    for key in sorted(by_theme_band):
        ids = sorted(by_theme_band[key])
        rng.shuffle(ids)
        pools.append(ids)
    picked: list[str] = []
    round_idx = 0
    while len(picked) < n and any(round_idx < len(p) for p in pools):
        for pool in pools:
            if round_idx < len(pool) and len(picked) < n:
                picked.append(pool[round_idx])
        round_idx += 1
    return sorted(picked)


# ----------------------------------------------------------------------
# explanations
# ----------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    return [t.strip("'") for t in _TOKEN_RE.findall(text.lower()) if t.strip("'")]


def local_explanation(
    result: MappingResult,
    store: CorpusStore,
    theme_id: str,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
    top_tokens: int = 30,
    digest_size: int = 5,
) -> dict:
    """Token frequencies, concept histograms, and a top/bottom member digest
    for one theme's mapped instances. Empty themes yield empty distributions."""
    members = sorted(result.id_sets().get(theme_id, ()))
    tokens: Counter[str] = Counter()
    histograms: dict[str, Counter[str]] = {c: Counter() for c in store.schema.names()}
    for rid in members:
        inst = store.get_instance(rid)
        tokens.update(t for t in tokenize(inst.text) if t not in stopwords)
        for c, v in inst.concepts.items():
            histograms[c][v] += 1
    ranked = sorted(
        members, key=lambda rid: (-(result.assignments[rid].centroid_sim or 0.0), rid)
    )
    return {
        "theme_id": theme_id,
        "member_count": len(members),
        "tokens": [
            {"token": t, "count": c}
            for t, c in sorted(tokens.items(), key=lambda kv: (-kv[1], kv[0]))[:top_tokens]
        ],
        "concept_histograms": {
            c: {
                v: {"count": k, "percent": 100.0 * k / max(1, len(members))}
                for v, k in sorted(hist.items())
            }
            for c, hist in histograms.items()
        },
        "digest": {"top": ranked[:digest_size], "bottom": ranked[-digest_size:][::-1] if members else []},
    }


def pca_projection(mat: np.ndarray) -> np.ndarray:
    """Deterministic 2D principal-component coordinates (sign-fixed)."""
    x = np.asarray(mat, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    comps = vt[:2] if vt.shape[0] >= 2 else np.vstack([vt, np.zeros((2 - vt.shape[0], vt.shape[1]))])
    for i in range(comps.shape[0]):
        pivot = np.argmax(np.abs(comps[i]))
        if comps[i, pivot] < 0:
            comps[i] = -comps[i]
    return centered @ comps.T


def write_report(
    out_dir,
    result: MappingResult,
    store: CorpusStore,
    theme_names: Mapping[str, str] | None = None,
    prev_result: MappingResult | None = None,
) -> dict:
    """Write the iteration's metric tables as TSV files plus a manifest.

    Returns the manifest (also saved as manifest.json in out_dir).
    """
    import json
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = theme_names or {}
    files: list[str] = []

    def write_tsv(name: str, header: list[str], rows: list[list]) -> None:
        with open(out / name, "w", encoding="utf-8") as fh:
            fh.write("\t".join(header) + "\n")
            for row in rows:
                fh.write("\t".join(str(v) for v in row) + "\n")
        files.append(name)

    write_tsv(
        "coverage.tsv",
        ["iteration", "method", "total", "mapped", "coverage_percent"],
        [[result.iteration, result.method, result.total, result.mapped_count, coverage(result)]],
    )
    write_tsv(
        "purity.tsv",
        ["concept", "purity_percent"],
        [[c, concept_purity(result, store, c)] for c in store.schema.names()]
        + [["__average__", avg_concept_purity(result, store)]],
    )
    sizes = {t: len(ids) for t, ids in result.id_sets().items()}
    write_tsv(
        "distribution.tsv",
        ["theme", "count", "percent"],
        [
            [names.get(t, t), n, 100.0 * n / result.total]
            for t, n in sorted(sizes.items())
        ]
        + [[UNKNOWN, result.unmapped_count, 100.0 * result.unmapped_count / result.total]],
    )
    mapped = sum(sizes.values())
    if mapped >= 4:
        slices = quartile_slices(result)
        write_tsv(
            "quartiles.tsv",
            ["slice", "size", "similarity_cutoff"],
            [
                ["Q1", len(slices.q1_ids), slices.thresholds[0]],
                ["Q2", len(slices.q2_ids), slices.thresholds[1]],
                ["Q3", len(slices.q3_ids), slices.thresholds[2]],
                ["All", len(slices.all_ids), ""],
            ],
        )
    if prev_result is not None:
        matrix = shift_matrix(prev_result, result)
        rows = [
            [names.get(r, r), names.get(c, c), matrix.values[i][j]]
            for i, r in enumerate(matrix.row_labels)
            for j, c in enumerate(matrix.col_labels)
        ]
        write_tsv("shift.tsv", ["from", "to", "percent_of_population"], rows)
    manifest = {
        "iteration": result.iteration,
        "method": result.method,
        "tau": result.tau,
        "files": files,
        "format": "tsv",
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def global_state(
    store: CorpusStore,
    theme_names: Mapping[str, str] | None = None,
    sample_size: int = 2000,
    seed: int = 0,
) -> dict:
    """Corpus-wide distribution, coverage, balance, and 2D projection."""
    store.require_ready()
    n = len(store)
    counts: Counter[str] = Counter()
    for rid in store.ids():
        a = store.get_instance(rid).assignment
        counts[a.theme_id if a.assigned else UNKNOWN] += 1
    names = theme_names or {}
    distribution = {
        names.get(label, label): {"count": c, "percent": 100.0 * c / n if n else 0.0}
        for label, c in sorted(counts.items())
    }
    if n == 0:
        distribution = {UNKNOWN: {"count": 0, "percent": 100.0}}
    theme_sizes = [c for label, c in counts.items() if label != UNKNOWN]
    balance = {
        "themes": len(theme_sizes),
        "min": int(min(theme_sizes)) if theme_sizes else 0,
        "max": int(max(theme_sizes)) if theme_sizes else 0,
        "mean": float(np.mean(theme_sizes)) if theme_sizes else 0.0,
    }
    ids = store.ids()
    if n > sample_size:
        rng = np.random.default_rng(seed)
        ids = sorted(rng.choice(ids, size=sample_size, replace=False))
    coords: list[list[float]] = []
    if ids:
        _, mat = store.embedding_matrix(ids)
        coords = [[float(a), float(b)] for a, b in pca_projection(mat)]
    mapped = n - counts[UNKNOWN]
    return {
        "distribution": distribution,
        "coverage": 100.0 * mapped / n if n else 0.0,
        "balance": balance,
        "projection": {"ids": list(ids), "coords": coords},
    }
