"""Synthetic corpora with known routing labels, routing-quality metrics,
policy/threshold sweeps, and a side-by-side report against published
reference statistics.

Synthetic geometry: topic centroids are rejection-sampled on the unit
sphere with a pairwise minimum angle; contexts, pseudo-queries, and
in-domain queries are drawn as ``normalize(kappa * anchor + N(0, I))``,
so larger ``intra_topic_concentration`` means tighter clusters.
Out-of-domain queries are rejection-sampled at least the minimum angle
away from every centroid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus as corpus_mod
from .corpus import CorpusIndex, NegativePairStrategy
from .distribution import AnalysisReport, PairSampleSet, PolicySpec, report
from .errors import EmptyQuerySetError, InfeasibleSpecError, ParseError
from .gate import GateConfig, build_gate, classify_batch

# Published reference statistics for the 17-topic, 1,700-context corpus
# embedded with all-mpnet-base-v2 (positive, negative), plus the
# reported positive-over-negative dominance rate. Informative only;
# replication drift of a few hundredths is expected.
PUBLISHED_REFERENCE = {
    "minimum": (0.110, -0.193),
    "p5": (0.554, -0.052),
    "q1": (0.662, -0.000),
    "mean": (0.705, 0.047),
    "median": (0.716, 0.039),
    "q3": (0.762, 0.086),
    "p95": (0.836, 0.219),
    "maximum": (0.912, 0.654),
}
PUBLISHED_DOMINANCE = 0.987
REFERENCE_TOLERANCE = 0.05


@dataclass(frozen=True)
class SyntheticSpec:
    topics: int = 17
    contexts_per_topic: int = 10
    pseudo_queries_per_context: int = 3
    dim: int = 64
    intra_topic_concentration: float = 8.0
    cross_topic_min_angle: float = 60.0  # degrees
    in_domain_queries: int = 100
    out_of_domain_queries: int = 100
    seed: int = 0

    def __post_init__(self):
        if self.topics < 2:
            raise ValueError("need at least 2 topics")
        if self.dim < 8:
            raise ValueError("dim must be >= 8")
        if self.intra_topic_concentration <= 0:
            raise ValueError("intra_topic_concentration must be positive")


@dataclass(frozen=True)
class LabeledQuery:
    embedding: np.ndarray
    label: bool  # True = should retrieve
    text: str = ""


@dataclass(frozen=True)
class RoutingMetrics:
    tp: int
    fp: int
    fn: int
    tn: int
    auc: float
    single_class: bool = False

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.n

    @property
    def precision(self) -> float | None:
        d = self.tp + self.fp
        return self.tp / d if d else None

    @property
    def recall(self) -> float | None:
        d = self.tp + self.fn
        return self.tp / d if d else None

    def as_dict(self) -> dict:
        return {
            "n": self.n, "tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn,
            "accuracy": self.accuracy, "precision": self.precision,
            "recall": self.recall, "auc": self.auc, "single_class": self.single_class,
        }


def _sample_centroids(rng: np.random.Generator, spec: SyntheticSpec,
                      max_attempts: int = 20_000) -> np.ndarray:
    max_cos = math.cos(math.radians(spec.cross_topic_min_angle))
    centroids: list[np.ndarray] = []
    attempts = 0
    while len(centroids) < spec.topics:
        if attempts >= max_attempts:
            raise InfeasibleSpecError(
                f"could not place {spec.topics} centroids at pairwise angle >= "
                f"{spec.cross_topic_min_angle} deg in dim {spec.dim} "
                f"(placed {len(centroids)} after {attempts} attempts)"
            )
        attempts += 1
        v = rng.standard_normal(spec.dim)
        v /= np.linalg.norm(v)
        if all(float(v @ c) <= max_cos for c in centroids):
            centroids.append(v)
    return np.stack(centroids)


def _around(rng: np.random.Generator, anchor: np.ndarray, kappa: float) -> np.ndarray:
    v = kappa * anchor + rng.standard_normal(anchor.size)
    return v / np.linalg.norm(v)


def generate_synthetic(spec: SyntheticSpec) -> tuple[list[dict], list[LabeledQuery]]:
    """Deterministic synthetic corpus (corpus-file-shaped records with
    inline embeddings) plus labeled queries: in-domain True,
    out-of-domain False."""
    rng = np.random.default_rng(spec.seed)
    centroids = _sample_centroids(rng, spec)
    max_cos = math.cos(math.radians(spec.cross_topic_min_angle))
    kappa = spec.intra_topic_concentration

    records: list[dict] = []
    context_embs: list[np.ndarray] = []
    for t in range(spec.topics):
        for c in range(spec.contexts_per_topic):
            ctx_emb = _around(rng, centroids[t], kappa)
            context_embs.append(ctx_emb)
            pqs = []
            for qn in range(spec.pseudo_queries_per_context):
                pq_emb = _around(rng, ctx_emb, kappa)
                pqs.append({
                    "text": f"question {qn} about topic {t} context {c}",
                    "embedding": [round(float(x), 9) for x in pq_emb],
                })
            records.append({
                "id": f"t{t:02d}c{c:03d}",
                "topic": f"topic{t:02d}",
                "text": f"synthetic passage for topic {t}, context {c}",
                "embedding": [round(float(x), 9) for x in ctx_emb],
                "pseudo_queries": pqs,
            })

    queries: list[LabeledQuery] = []
    for i in range(spec.in_domain_queries):
        anchor = context_embs[int(rng.integers(0, len(context_embs)))]
        queries.append(LabeledQuery(_around(rng, anchor, kappa), True,
                                    f"in-domain query {i}"))
    ood = 0
    attempts = 0
    while ood < spec.out_of_domain_queries:
        if attempts > 1000 * max(1, spec.out_of_domain_queries):
            raise InfeasibleSpecError(
                "could not sample out-of-domain queries far enough from all centroids"
            )
        attempts += 1
        v = rng.standard_normal(spec.dim)
        v /= np.linalg.norm(v)
        if float(np.max(centroids @ v)) <= max_cos:
            queries.append(LabeledQuery(v, False, f"out-of-domain query {ood}"))
            ood += 1
    return records, queries


def write_synthetic(spec: SyntheticSpec, corpus_path, queries_path) -> None:
    records, queries = generate_synthetic(spec)
    with open(corpus_path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    with open(queries_path, "w", encoding="utf-8") as fh:
        for q in queries:
            fh.write(json.dumps({
                "text": q.text,
                "embedding": [round(float(x), 9) for x in q.embedding],
                "label": q.label,
            }, ensure_ascii=False) + "\n")


def load_labeled_queries(path) -> list[LabeledQuery]:
    out: list[LabeledQuery] = []
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
        if "label" not in obj or "embedding" not in obj:
            raise ParseError("record needs 'embedding' and 'label'", line=lineno)
        out.append(LabeledQuery(np.asarray(obj["embedding"], dtype=np.float64),
                                bool(obj["label"]), obj.get("text", "")))
    if not out:
        raise EmptyQuerySetError(f"no labeled queries in {path}")
    return out


def evaluate_gate(index: CorpusIndex, config: GateConfig,
                  queries: list[LabeledQuery]) -> RoutingMetrics:
    """Run the classifier over labeled queries and score the decisions.

    AUC here is the dominance probability of in-domain scores over
    out-of-domain scores; flagged single_class when only one label is
    present (AUC then degenerates to 0.5)."""
    if not queries:
        raise EmptyQuerySetError("no labeled queries to evaluate")
    gate = build_gate(index, config)
    decisions = classify_batch(gate, [q.embedding for q in queries])
    tp = fp = fn = tn = 0
    pos_scores, neg_scores = [], []
    for q, d in zip(queries, decisions):
        (pos_scores if q.label else neg_scores).append(d.score)
        if q.label and d.retrieve:
            tp += 1
        elif q.label:
            fn += 1
        elif d.retrieve:
            fp += 1
        else:
            tn += 1
    single_class = not pos_scores or not neg_scores
    if single_class:
        auc = 0.5
    else:
        from .distribution import separation_auc
        auc = separation_auc(PairSampleSet("positive", np.array(pos_scores)),
                             PairSampleSet("negative", np.array(neg_scores)))
    return RoutingMetrics(tp, fp, fn, tn, auc, single_class)


def sweep(index: CorpusIndex, queries: list[LabeledQuery],
          policies: list[PolicySpec], thresholds: list[float],
          distribution_source: str = "positive") -> list[tuple[PolicySpec, float, RoutingMetrics]]:
    """One RoutingMetrics row per (policy, threshold) grid cell."""
    if not policies or not thresholds:
        raise ValueError("policy and threshold grids must be non-empty")
    rows = []
    for policy in policies:
        for t in thresholds:
            cfg = GateConfig(policy, t, distribution_source)
            rows.append((policy, t, evaluate_gate(index, cfg, queries)))
    return rows


def sweep_table(rows: list[tuple[PolicySpec, float, RoutingMetrics]]) -> str:
    lines = [f"{'policy':<10} {'T':>7} {'acc':>7} {'prec':>7} {'rec':>7} {'auc':>7}"]
    for policy, t, m in rows:
        prec = "-" if m.precision is None else f"{m.precision:.3f}"
        rec = "-" if m.recall is None else f"{m.recall:.3f}"
        lines.append(f"{str(policy):<10} {t:>7.3f} {m.accuracy:>7.3f} "
                     f"{prec:>7} {rec:>7} {m.auc:>7.3f}")
    return "\n".join(lines)


def replication_report(analysis: AnalysisReport) -> str:
    """Computed-vs-published statistics table with deltas.

    The published column is a fixed reference; deltas beyond
    +/-0.05 usually mean a different embedder, not a bug."""
    lines = [f"{'Statistic':<16} {'pos':>8} {'ref':>8} {'d':>7}   "
             f"{'neg':>8} {'ref':>8} {'d':>7}"]
    for name, (ref_pos, ref_neg) in PUBLISHED_REFERENCE.items():
        got_pos = getattr(analysis.positive, name)
        got_neg = getattr(analysis.negative, name)
        lines.append(
            f"{name:<16} {got_pos:>8.3f} {ref_pos:>8.3f} {got_pos - ref_pos:>+7.3f}   "
            f"{got_neg:>8.3f} {ref_neg:>8.3f} {got_neg - ref_neg:>+7.3f}"
        )
    lines.append(f"{'dominance auc':<16} {analysis.auc:>8.4f} {PUBLISHED_DOMINANCE:>8.4f} "
                 f"{analysis.auc - PUBLISHED_DOMINANCE:>+7.4f}")
    lines.append(f"(informative comparison, tolerance +/-{REFERENCE_TOLERANCE})")
    return "\n".join(lines)


def crsb_replication(corpus_path, embedder_config=None, transport=None,
                     negative_strategy: NegativePairStrategy = NegativePairStrategy()) -> tuple[AnalysisReport, str]:
    """Fit the published corpus and compare against the reference table.
    Needs the dataset on disk and, if embeddings are not inline, a
    configured embedder."""
    embedder = None
    fingerprint = None
    if embedder_config is not None:
        from .clients import embed_texts
        embedder = lambda texts: embed_texts(embedder_config, texts, transport)
        fingerprint = embedder_config.fingerprint
    index = corpus_mod.ingest_file(
        corpus_path, embed_missing=embedder is not None,
        embedder=embedder, embedder_fingerprint=fingerprint,
    )
    index = corpus_mod.fit_distributions(index, negative_strategy)
    analysis = report(index.positive_samples, index.negative_samples)
    return analysis, replication_report(analysis)
