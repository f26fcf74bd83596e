import json

import numpy as np
import pytest

from ctxgate import corpus


def make_corpus_records(n_contexts, dim, k=3, rng=None, topics=4):
    """Random corpus records in corpus-file shape, embeddings inline.

    Pseudo-queries are noisy copies of their context so the positive
    distribution is meaningfully above the negative one.
    """
    rng = rng or np.random.default_rng(0)
    records = []
    for i in range(n_contexts):
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        pqs = []
        for j in range(k):
            w = 4.0 * v + rng.standard_normal(dim)
            w /= np.linalg.norm(w)
            pqs.append({"text": f"pq {i}.{j}", "embedding": w.tolist()})
        records.append({
            "id": f"c{i}",
            "topic": f"topic{i % topics}",
            "text": f"context text {i}",
            "embedding": v.tolist(),
            "pseudo_queries": pqs,
        })
    return records


def make_index(n_contexts=12, dim=8, k=3, seed=0, fitted=True,
               strategy=corpus.NegativePairStrategy("all_cross")):
    rng = np.random.default_rng(seed)
    records = make_corpus_records(n_contexts, dim, k, rng)
    index = corpus.ingest(enumerate(records, start=1))
    if fitted:
        index = corpus.fit_distributions(index, strategy)
    return index


def write_corpus_file(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


@pytest.fixture
def small_index():
    return make_index()
