#!/usr/bin/env python3
"""Run the full synthetic routing experiment: generate a corpus, fit the
distributions, print the statistics table, and sweep policy/threshold
grids over labeled queries."""

import argparse

from ctxgate import corpus, evalharness
from ctxgate.corpus import NegativePairStrategy
from ctxgate.distribution import PolicySpec, report
from ctxgate.evalharness import SyntheticSpec, sweep_table


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--topics", type=int, default=17)
    ap.add_argument("--contexts-per-topic", type=int, default=10)
    ap.add_argument("--dim", type=int, default=64)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--policies", default="min,p5,q1,median")
    ap.add_argument("--thresholds", default="-0.1,0,0.1")
    args = ap.parse_args()

    spec = SyntheticSpec(topics=args.topics,
                         contexts_per_topic=args.contexts_per_topic,
                         dim=args.dim, seed=args.seed)
    records, queries = evalharness.generate_synthetic(spec)
    index = corpus.ingest(enumerate(records, start=1))
    index = corpus.fit_distributions(index, NegativePairStrategy("cross_topic"))

    print(report(index.positive_samples, index.negative_samples).as_table())
    print()
    policies = [PolicySpec.parse(p) for p in args.policies.split(",")]
    thresholds = [float(t) for t in args.thresholds.split(",")]
    rows = evalharness.sweep(index, queries, policies, thresholds)
    print(sweep_table(rows))


if __name__ == "__main__":
    main()
