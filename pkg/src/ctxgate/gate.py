"""Retrieve / no-retrieve classification of query embeddings.

The cutoff (policy statistic minus threshold) is computed exactly once
when the gate is built; classifying a query is then a single matrix-
vector product and a comparison, so per-request cost does not depend on
how the distributions were fitted.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from . import vecmath
from .corpus import CorpusIndex
from .distribution import PairSampleSet, PolicySpec, policy_value
from .errors import (
    EmptyCorpusError,
    EmptySamplesError,
    UnfittedIndexError,
    ZeroVectorError,
)


@dataclass(frozen=True)
class GateConfig:
    policy: PolicySpec = PolicySpec("percentile", 5.0)
    threshold: float = 0.0
    distribution_source: Literal["positive", "negative", "combined"] = "positive"

    def __post_init__(self):
        if not np.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.distribution_source not in ("positive", "negative", "combined"):
            raise ValueError(f"bad distribution_source: {self.distribution_source!r}")


@dataclass(frozen=True)
class GateDecision:
    retrieve: bool
    score: float
    cutoff: float
    margin: float
    best_context_id: str
    elapsed: float  # seconds

    def as_dict(self) -> dict:
        return {
            "retrieve": self.retrieve,
            "score": self.score,
            "cutoff": self.cutoff,
            "margin": self.margin,
            "best_context_id": self.best_context_id,
            "elapsed_ms": self.elapsed * 1000.0,
        }


@dataclass(frozen=True)
class Gate:
    """Immutable, precomputed classifier; safe for concurrent use."""

    config: GateConfig
    cutoff: float
    dim: int
    context_ids: tuple[str, ...]
    context_matrix: np.ndarray  # (n, dim) float64 unit rows

    def classify(self, query) -> GateDecision:
        return classify(self, query)

    def classify_batch(self, queries: Sequence) -> list[GateDecision]:
        return classify_batch(self, queries)

    def with_threshold(self, threshold: float) -> "Gate":
        """Same gate with a different risk slack; no refit involved."""
        base = self.cutoff + self.config.threshold
        cfg = GateConfig(self.config.policy, threshold, self.config.distribution_source)
        return Gate(cfg, base - threshold, self.dim, self.context_ids, self.context_matrix)


def _source_samples(index: CorpusIndex, source: str) -> PairSampleSet:
    if not index.fitted:
        raise UnfittedIndexError("index has no fitted distributions; run fit first")
    if source == "positive":
        return index.positive_samples
    if source == "negative":
        if index.negative_samples is None:
            raise UnfittedIndexError("index has no negative samples")
        return index.negative_samples
    neg = index.negative_samples.values if index.negative_samples is not None else []
    merged = np.concatenate([index.positive_samples.values, np.asarray(neg)])
    return PairSampleSet("positive", merged)


def build_gate(index: CorpusIndex, config: GateConfig = GateConfig()) -> Gate:
    """Precompute the decision cutoff and the normalized context matrix."""
    if not index.contexts:
        raise EmptyCorpusError("cannot build a gate over an empty corpus")
    samples = _source_samples(index, config.distribution_source)
    if samples.count == 0:
        raise EmptySamplesError("fitted sample set is empty")
    if samples.count == 1:
        warnings.warn(
            "gate cutoff derived from a single similarity sample; "
            "decisions will be statistically meaningless", stacklevel=2,
        )
    cutoff = policy_value(samples, config.policy) - config.threshold
    return Gate(
        config=config,
        cutoff=cutoff,
        dim=index.dim,
        context_ids=tuple(c.id for c in index.contexts),
        context_matrix=index.context_matrix,
    )


def classify(gate: Gate, query) -> GateDecision:
    """Single-query verdict: retrieve iff max context similarity > cutoff."""
    start = time.perf_counter()
    q = vecmath.normalize(vecmath.as_embedding(query, dim=gate.dim, name="query"),
                          name="query")
    sims = gate.context_matrix @ q
    idx = int(np.argmax(sims))
    score = float(np.clip(sims[idx], -1.0, 1.0))
    elapsed = time.perf_counter() - start
    return GateDecision(
        retrieve=score > gate.cutoff,
        score=score,
        cutoff=gate.cutoff,
        margin=score - gate.cutoff,
        best_context_id=gate.context_ids[idx],
        elapsed=elapsed,
    )


def classify_batch(gate: Gate, queries: Sequence) -> list[GateDecision]:
    """Vectorized classify; order of decisions matches order of queries."""
    if len(queries) == 0:
        return []
    start = time.perf_counter()
    q = np.stack([vecmath.as_embedding(e, dim=gate.dim, name=f"queries[{i}]")
                  for i, e in enumerate(queries)])
    norms = np.linalg.norm(q, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVectorError(f"queries[{int(zero[0])}]: zero vector")
    sims = gate.context_matrix @ (q / norms[:, None]).T
    idxs = np.argmax(sims, axis=0)
    scores = np.clip(sims[idxs, np.arange(len(queries))], -1.0, 1.0)
    per_query = (time.perf_counter() - start) / len(queries)
    return [
        GateDecision(
            retrieve=bool(s > gate.cutoff),
            score=float(s),
            cutoff=gate.cutoff,
            margin=float(s) - gate.cutoff,
            best_context_id=gate.context_ids[int(i)],
            elapsed=per_query,
        )
        for s, i in zip(scores, idxs)
    ]
