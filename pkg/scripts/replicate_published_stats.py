#!/usr/bin/env python3
"""Recompute the similarity-distribution statistics on the published
17-topic benchmark corpus and print them next to the reference values.

Needs the corpus as a JSONL file (see README for the record shape) and,
if it carries no inline embeddings, an embedding endpoint. Never run in
CI; the comparison is informative only."""

import argparse
import sys

from ctxgate.clients import EmbedderConfig
from ctxgate.corpus import NegativePairStrategy
from ctxgate.evalharness import crsb_replication


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("corpus", help="corpus JSONL file")
    ap.add_argument("--embedder-base-url", default=None)
    ap.add_argument("--embedder-model", default="all-mpnet-base-v2")
    ap.add_argument("--api-key-env", default="CTXGATE_API_KEY")
    ap.add_argument("--negative-strategy", default="cross_topic",
                    choices=["all_cross", "cross_topic", "sampled"])
    args = ap.parse_args()

    embedder = None
    if args.embedder_base_url:
        embedder = EmbedderConfig(base_url=args.embedder_base_url,
                                  model=args.embedder_model,
                                  api_key_env=args.api_key_env)
    _, text = crsb_replication(
        args.corpus, embedder,
        negative_strategy=NegativePairStrategy(args.negative_strategy))
    print(text)


if __name__ == "__main__":
    sys.exit(main())
