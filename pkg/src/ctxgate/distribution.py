"""Order statistics over labeled similarity samples.

Percentiles use linear interpolation between closest ranks with
inclusive endpoints (rank = p/100 * (n-1)). The evaluation report
states the method name so published-number comparisons stay
interpretable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import EmptySamplesError

PERCENTILE_METHOD = "linear interpolation, inclusive endpoints"

# Incremented on every policy_value call; lets tests prove the cutoff is
# computed once per gate build and never on the query path.
_policy_value_calls = 0


def policy_value_call_count() -> int:
    return _policy_value_calls


@dataclass(frozen=True)
class PairSampleSet:
    """Similarity samples for one pair label, kept sorted ascending."""

    label: Literal["positive", "negative"]
    values: np.ndarray

    def __post_init__(self):
        v = np.sort(np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "values", v)

    @property
    def count(self) -> int:
        return int(self.values.size)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, PairSampleSet)
            and self.label == other.label
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class DistributionSummary:
    minimum: float
    p5: float
    q1: float
    mean: float
    median: float
    q3: float
    p95: float
    maximum: float
    count: int

    ROW_ORDER = ("minimum", "p5", "q1", "mean", "median", "q3", "p95", "maximum")
    ROW_LABELS = {
        "minimum": "Minimum",
        "p5": "5th Percentile",
        "q1": "1st Quartile",
        "mean": "Mean",
        "median": "Median",
        "q3": "3rd Quartile",
        "p95": "95th Percentile",
        "maximum": "Maximum",
    }

    def as_dict(self) -> dict:
        d = {name: getattr(self, name) for name in self.ROW_ORDER}
        d["count"] = self.count
        return d


@dataclass(frozen=True)
class PolicySpec:
    """Named order statistic used as the gate's decision cutoff."""

    kind: Literal["minimum", "maximum", "mean", "median", "percentile", "quartile"]
    p: float | None = None

    def __post_init__(self):
        if self.kind == "percentile":
            if self.p is None or not (0.0 < self.p < 100.0):
                raise ValueError(f"percentile must lie strictly in (0, 100), got {self.p}")
        elif self.kind == "quartile":
            if self.p not in (1, 3):
                raise ValueError(f"quartile must be 1 or 3, got {self.p}")
        elif self.kind not in ("minimum", "maximum", "mean", "median"):
            raise ValueError(f"unknown policy kind: {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "PolicySpec":
        """Parse CLI/config spellings: min, max, mean, median, q1, q3, p<num>."""
        t = text.strip().lower()
        aliases = {"min": "minimum", "max": "maximum", "minimum": "minimum",
                   "maximum": "maximum", "mean": "mean", "median": "median"}
        if t in aliases:
            return cls(aliases[t])
        if t in ("q1", "q3"):
            return cls("quartile", int(t[1]))
        if t.startswith("p"):
            try:
                return cls("percentile", float(t[1:]))
            except ValueError:
                pass
        raise ValueError(f"unparseable policy: {text!r}")

    def __str__(self) -> str:
        if self.kind == "percentile":
            p = self.p
            return f"p{int(p) if float(p).is_integer() else p}"
        if self.kind == "quartile":
            return f"q{int(self.p)}"
        return {"minimum": "min", "maximum": "max"}.get(self.kind, self.kind)


def _percentile(sorted_values: np.ndarray, p: float) -> float:
    """Linear-interpolation percentile over an ascending array."""
    n = sorted_values.size
    if n == 1:
        return float(sorted_values[0])
    rank = (p / 100.0) * (n - 1)
    lo = int(np.floor(rank))
    hi = int(np.ceil(rank))
    frac = rank - lo
    return float(sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac)


def summarize(samples: PairSampleSet) -> DistributionSummary:
    """Eight order statistics over a sample set."""
    if samples.count == 0:
        raise EmptySamplesError("cannot summarize an empty sample set")
    v = samples.values
    return DistributionSummary(
        minimum=float(v[0]),
        p5=_percentile(v, 5.0),
        q1=_percentile(v, 25.0),
        mean=float(np.mean(v)),
        median=_percentile(v, 50.0),
        q3=_percentile(v, 75.0),
        p95=_percentile(v, 95.0),
        maximum=float(v[-1]),
        count=samples.count,
    )


def policy_value(samples: PairSampleSet, policy: PolicySpec) -> float:
    """Extract the policy's statistic from a sample set."""
    global _policy_value_calls
    _policy_value_calls += 1
    if samples.count == 0:
        raise EmptySamplesError("cannot take a policy value of an empty sample set")
    v = samples.values
    if policy.kind == "minimum":
        return float(v[0])
    if policy.kind == "maximum":
        return float(v[-1])
    if policy.kind == "mean":
        return float(np.mean(v))
    if policy.kind == "median":
        return _percentile(v, 50.0)
    if policy.kind == "quartile":
        return _percentile(v, 25.0 if policy.p == 1 else 75.0)
    return _percentile(v, float(policy.p))


def separation_auc(
    positive: PairSampleSet,
    negative: PairSampleSet,
    max_exact_pairs: int = 10_000_000,
    seed: int = 0,
) -> float:
    """Probability a random positive sample exceeds a random negative one.

    Ties count half. Exact over all pos x neg pairs when that product
    fits in max_exact_pairs, else estimated from max_exact_pairs seeded
    uniform pair draws.
    """
    if positive.count == 0 or negative.count == 0:
        raise EmptySamplesError("separation_auc needs both sample sets non-empty")
    pos, neg = positive.values, negative.values
    total = pos.size * neg.size
    if total <= max_exact_pairs:
        # neg is sorted: count strictly-below and tied negatives per positive
        below = np.searchsorted(neg, pos, side="left")
        below_or_tied = np.searchsorted(neg, pos, side="right")
        wins = float(np.sum(below))
        ties = float(np.sum(below_or_tied - below))
        return (wins + 0.5 * ties) / total
    rng = np.random.default_rng(seed)
    p = pos[rng.integers(0, pos.size, size=max_exact_pairs)]
    n = neg[rng.integers(0, neg.size, size=max_exact_pairs)]
    return float(np.mean((p > n) + 0.5 * (p == n)))


@dataclass(frozen=True)
class AnalysisReport:
    positive: DistributionSummary
    negative: DistributionSummary
    auc: float
    percentile_method: str = PERCENTILE_METHOD
    extras: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {
            "positive": self.positive.as_dict(),
            "negative": self.negative.as_dict(),
            "auc": self.auc,
            "percentile_method": self.percentile_method,
        }
        d.update(self.extras)
        return d

    def as_table(self) -> str:
        lines = [f"{'Policy':<16} {'Positive':>10} {'Negative':>10}"]
        lines.append("-" * 38)
        for name in DistributionSummary.ROW_ORDER:
            label = DistributionSummary.ROW_LABELS[name]
            lines.append(
                f"{label:<16} {getattr(self.positive, name):>10.3f} "
                f"{getattr(self.negative, name):>10.3f}"
            )
        lines.append("-" * 38)
        lines.append(f"{'Dominance AUC':<16} {self.auc:>10.4f}")
        lines.append(f"percentiles: {self.percentile_method}")
        return "\n".join(lines)


def report(positive: PairSampleSet, negative: PairSampleSet, **auc_kwargs) -> AnalysisReport:
    """Two summary columns plus the positive-over-negative dominance AUC."""
    return AnalysisReport(
        positive=summarize(positive),
        negative=summarize(negative),
        auc=separation_auc(positive, negative, **auc_kwargs),
    )
