import numpy as np
import pytest

from conftest import make_corpus_records, make_index
from ctxgate import corpus
from ctxgate.corpus import NegativePairStrategy
from ctxgate.errors import (
    CorruptIndexError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyCorpusError,
    InsufficientSamplesError,
    MissingEmbeddingError,
    ParseError,
    VersionUnsupportedError,
)


class TestIngest:
    def test_counts(self):
        records = make_corpus_records(2, dim=8, k=3)
        index = corpus.ingest(enumerate(records, start=1))
        assert len(index.contexts) == 2
        assert len(index.pseudo_queries) == 6
        assert index.dim == 8

    def test_dim_mismatch(self):
        records = make_corpus_records(2, dim=16, k=1)
        records[1]["embedding"] = [1.0] * 8
        with pytest.raises(DimensionMismatchError):
            corpus.ingest(enumerate(records, start=1))

    def test_duplicate_id(self):
        records = make_corpus_records(2, dim=8, k=1)
        records[1]["id"] = records[0]["id"]
        with pytest.raises(DuplicateIdError):
            corpus.ingest(enumerate(records, start=1))

    def test_missing_embedding_without_flag(self):
        records = make_corpus_records(1, dim=8, k=1)
        del records[0]["embedding"]
        with pytest.raises(MissingEmbeddingError, match="c0"):
            corpus.ingest(enumerate(records, start=1))

    def test_embed_missing_via_callable(self):
        records = make_corpus_records(2, dim=8, k=1)
        del records[0]["embedding"]
        del records[1]["pseudo_queries"][0]["embedding"]
        calls = []

        def embedder(texts):
            calls.append(list(texts))
            rng = np.random.default_rng(1)
            return [rng.standard_normal(8) for _ in texts]

        index = corpus.ingest(enumerate(records, start=1), embed_missing=True,
                              embedder=embedder, embedder_fingerprint="fake-model")
        assert calls == [[records[0]["text"], records[1]["pseudo_queries"][0]["text"]]]
        assert index.embedder_fingerprint == "fake-model"

    def test_parse_error_reports_line(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text('{"id": "a", "topic": "t", "text": "x", "embedding": [1,0]}\nnot json\n')
        with pytest.raises(ParseError, match="line 2"):
            corpus.ingest_file(path)

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpusError):
            corpus.ingest(iter([]))

    def test_embeddings_unit_normalized(self):
        records = make_corpus_records(3, dim=8)
        for rec in records:
            rec["embedding"] = [4 * x for x in rec["embedding"]]
        index = corpus.ingest(enumerate(records, start=1))
        for c in index.contexts:
            assert np.linalg.norm(c.embedding) == pytest.approx(1.0, rel=1e-6)

    def test_crsb_scale_counts(self):
        # 1,700 contexts x 3 pseudo-queries = 5,100 question-answer pairs
        rng = np.random.default_rng(0)
        records = []
        for i in range(1700):
            v = rng.standard_normal(8)
            records.append({
                "id": f"c{i}", "topic": f"topic{i % 17}", "text": f"ctx {i}",
                "embedding": v.tolist(),
                "pseudo_queries": [
                    {"text": f"q{i}.{j}", "embedding": (v + rng.standard_normal(8)).tolist()}
                    for j in range(3)
                ],
            })
        index = corpus.ingest(enumerate(records, start=1))
        assert len(index.pseudo_queries) == 5100

    def test_referential_integrity(self, small_index):
        ctx_ids = {c.id for c in small_index.contexts}
        listed = set()
        for c in small_index.contexts:
            listed.update(c.pseudo_query_ids)
        for q in small_index.pseudo_queries:
            assert q.parent_context_id in ctx_ids
            assert q.id in listed
            assert q.id in small_index.context_by_id(q.parent_context_id).pseudo_query_ids


class TestFitDistributions:
    def test_identical_pair_gives_one(self):
        v = np.random.default_rng(0).standard_normal(8)
        records = [{
            "id": "c0", "topic": "t", "text": "x", "embedding": v.tolist(),
            "pseudo_queries": [{"text": "q", "embedding": v.tolist()}],
        }]
        index = corpus.ingest(enumerate(records, start=1))
        with pytest.warns(UserWarning):
            index = corpus.fit_distributions(index, NegativePairStrategy("all_cross"))
        np.testing.assert_array_equal(index.positive_samples.values, [1.0])
        # a single context has no foreign pseudo-queries to pair with
        assert index.negative_samples is None

    def test_orthogonal_cross_pairs_are_zero(self):
        records = [
            {"id": "a", "topic": "t1", "text": "x", "embedding": [1, 0, 0, 0],
             "pseudo_queries": [{"text": "qa", "embedding": [1, 0, 0, 0]}]},
            {"id": "b", "topic": "t2", "text": "y", "embedding": [0, 0, 1, 0],
             "pseudo_queries": [{"text": "qb", "embedding": [0, 0, 1, 0]}]},
        ]
        index = corpus.ingest(enumerate(records, start=1))
        with pytest.warns(UserWarning):
            index = corpus.fit_distributions(index, NegativePairStrategy("all_cross"))
        np.testing.assert_allclose(index.positive_samples.values, [1.0, 1.0])
        np.testing.assert_allclose(index.negative_samples.values, [0.0, 0.0], atol=1e-12)

    def test_all_cross_counts(self):
        index = make_index(n_contexts=50, dim=8, k=3, fitted=False)
        index = corpus.fit_distributions(index, NegativePairStrategy("all_cross"))
        assert index.positive_samples.count == 150
        assert index.negative_samples.count == 50 * 3 * 49

    def test_cross_topic_excludes_same_topic(self):
        index = make_index(n_contexts=8, dim=8, k=2, fitted=False)
        fit = corpus.fit_distributions(index, NegativePairStrategy("cross_topic"))
        # 4 topics x 2 contexts each: each context pairs with 6 foreign-topic
        # contexts' queries -> 8 * 6 * 2
        assert fit.negative_samples.count == 8 * 6 * 2

    def test_sampled_strategy_deterministic(self):
        index = make_index(n_contexts=20, dim=8, fitted=False)
        s = NegativePairStrategy("sampled", n=100, seed=42)
        a = corpus.fit_distributions(index, s)
        b = corpus.fit_distributions(index, s)
        assert a.negative_samples.count == 100
        assert a.negative_samples == b.negative_samples

    def test_fit_determinism(self):
        index = make_index(fitted=False)
        a = corpus.fit_distributions(index, NegativePairStrategy("all_cross"))
        b = corpus.fit_distributions(index, NegativePairStrategy("all_cross"))
        assert a.positive_samples == b.positive_samples
        assert a.negative_samples == b.negative_samples

    def test_samples_in_range(self, small_index):
        for s in (small_index.positive_samples, small_index.negative_samples):
            assert np.all(s.values >= -1.0) and np.all(s.values <= 1.0)
            assert np.all(np.diff(s.values) >= 0)

    def test_strict_insufficient_samples(self):
        index = make_index(n_contexts=3, dim=8, k=1, fitted=False)
        with pytest.raises(InsufficientSamplesError):
            corpus.fit_distributions(index, strict=True)

    def test_small_fit_warns(self):
        index = make_index(n_contexts=3, dim=8, k=1, fitted=False)
        with pytest.warns(UserWarning, match="positive samples"):
            corpus.fit_distributions(index)


class TestPersistence:
    def test_round_trip_identity(self, small_index, tmp_path):
        path = tmp_path / "index.cagx"
        corpus.save_index(small_index, path)
        loaded = corpus.load_index(path)
        assert loaded.dim == small_index.dim
        assert loaded.embedder_fingerprint == small_index.embedder_fingerprint
        assert loaded.contexts == small_index.contexts
        assert loaded.pseudo_queries == small_index.pseudo_queries
        assert loaded.positive_samples == small_index.positive_samples
        assert loaded.negative_samples == small_index.negative_samples
        assert loaded.negative_strategy == small_index.negative_strategy
        assert loaded.cutoff_cache == small_index.cutoff_cache

    def test_truncated_file(self, small_index, tmp_path):
        path = tmp_path / "index.cagx"
        corpus.save_index(small_index, path)
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(CorruptIndexError):
            corpus.load_index(path)

    def test_corrupted_byte(self, small_index, tmp_path):
        path = tmp_path / "index.cagx"
        corpus.save_index(small_index, path)
        data = bytearray(path.read_bytes())
        data[30] ^= 0xFF
        path.write_bytes(bytes(data))
        with pytest.raises(CorruptIndexError):
            corpus.load_index(path)

    def test_unknown_version(self, small_index, tmp_path):
        import hashlib
        import struct
        path = tmp_path / "index.cagx"
        corpus.save_index(small_index, path)
        data = bytearray(path.read_bytes())[:-8]
        struct.pack_into("<H", data, 4, 99)  # version field follows the magic
        payload = bytes(data)
        path.write_bytes(payload + hashlib.sha256(payload).digest()[:8])
        with pytest.raises(VersionUnsupportedError):
            corpus.load_index(path)

    def test_unfitted_round_trip(self, tmp_path):
        index = make_index(fitted=False)
        path = tmp_path / "index.cagx"
        corpus.save_index(index, path)
        loaded = corpus.load_index(path)
        assert not loaded.fitted
        assert loaded.contexts == index.contexts
