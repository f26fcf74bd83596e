import json

import httpx
import numpy as np
import pytest

from ctxgate import clients
from ctxgate.clients import EmbedderConfig, GeneratorConfig, RetryPolicy
from ctxgate.errors import (
    AuthError,
    DimensionMismatchError,
    InconsistentDimError,
    MalformedResponseError,
    ParseError,
    ProviderError,
    ZeroVectorError,
)

CFG = EmbedderConfig(base_url="http://embed.test/v1", model="test-model",
                     max_batch=2, retry=RetryPolicy(count=3, backoff_base=0.0))


def embeddings_transport(handler):
    return httpx.MockTransport(handler)


def ok_response(texts, dim=4):
    data = [{"index": i, "embedding": [float(i + 1)] + [0.0] * (dim - 1)}
            for i in range(len(texts))]
    return httpx.Response(200, json={"data": data})


class TestEmbedTexts:
    def test_batching_and_order(self):
        calls = []

        def handler(request):
            body = json.loads(request.content)
            calls.append(body["input"])
            return ok_response(body["input"])

        out = clients.embed_texts(CFG, ["a", "b", "c", "d", "e"],
                                  transport=embeddings_transport(handler))
        assert len(calls) == 3  # batches of 2, 2, 1
        assert [len(c) for c in calls] == [2, 2, 1]
        assert len(out) == 5
        for v in out:
            assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-9)

    def test_retry_on_5xx_then_success(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            if len(attempts) <= 2:
                return httpx.Response(503, text="busy")
            return ok_response(json.loads(request.content)["input"])

        out = clients.embed_texts(CFG, ["x"], transport=embeddings_transport(handler))
        assert len(attempts) == 3
        assert len(out) == 1

    def test_no_retry_on_4xx(self):
        attempts = []

        def handler(request):
            attempts.append(1)
            return httpx.Response(422, text="bad input")

        with pytest.raises(ProviderError):
            clients.embed_texts(CFG, ["x"], transport=embeddings_transport(handler))
        assert len(attempts) == 1

    def test_auth_error(self):
        def handler(request):
            return httpx.Response(401, text="no")

        with pytest.raises(AuthError):
            clients.embed_texts(CFG, ["x"], transport=embeddings_transport(handler))

    def test_retries_exhausted(self):
        def handler(request):
            return httpx.Response(500, text="down")

        with pytest.raises(ProviderError):
            clients.embed_texts(CFG, ["x"], transport=embeddings_transport(handler))

    def test_empty_text_rejected_before_network(self):
        def handler(request):
            raise AssertionError("no request should be made")

        with pytest.raises(ValueError):
            clients.embed_texts(CFG, ["ok", "  "],
                                transport=embeddings_transport(handler))

    def test_mixed_dims_rejected(self):
        def handler(request):
            return httpx.Response(200, json={"data": [
                {"index": 0, "embedding": [1.0, 0.0]},
                {"index": 1, "embedding": [1.0, 0.0, 0.0]},
            ]})

        with pytest.raises(InconsistentDimError):
            clients.embed_texts(CFG, ["a", "b"],
                                transport=embeddings_transport(handler))

    def test_wrong_count(self):
        def handler(request):
            return httpx.Response(200, json={"data": []})

        with pytest.raises(MalformedResponseError):
            clients.embed_texts(CFG, ["a"], transport=embeddings_transport(handler))

    def test_bearer_header_from_env(self, monkeypatch):
        monkeypatch.setenv("CTXGATE_API_KEY", "sekrit")
        seen = {}

        def handler(request):
            seen["auth"] = request.headers.get("authorization")
            return ok_response(json.loads(request.content)["input"])

        clients.embed_texts(CFG, ["x"], transport=embeddings_transport(handler))
        assert seen["auth"] == "Bearer sekrit"


GEN_CFG = GeneratorConfig(base_url="http://gen.test/v1", model="gen-model",
                          retry=RetryPolicy(count=1, backoff_base=0.0))


def gen_transport(content):
    def handler(request):
        return httpx.Response(200, json={
            "choices": [{"message": {"content": content}}]})
    return httpx.MockTransport(handler)


class TestGeneratePseudoQueries:
    def test_three_lines(self):
        out = clients.generate_pseudo_queries(
            GEN_CFG, "some passage", 3, transport=gen_transport("q1\nq2\nq3"))
        assert out == ["q1", "q2", "q3"]

    def test_truncates_to_n(self):
        out = clients.generate_pseudo_queries(
            GEN_CFG, "p", 3, transport=gen_transport("a\nb\nc\nd\ne"))
        assert out == ["a", "b", "c"]

    def test_blank_lines_dropped(self):
        out = clients.generate_pseudo_queries(
            GEN_CFG, "p", 5, transport=gen_transport("a\n\n  \nb\n"))
        assert out == ["a", "b"]

    def test_empty_body(self):
        with pytest.raises(MalformedResponseError):
            clients.generate_pseudo_queries(GEN_CFG, "p", 3,
                                            transport=gen_transport(""))

    def test_preconditions(self):
        with pytest.raises(ValueError):
            clients.generate_pseudo_queries(GEN_CFG, "", 3)
        with pytest.raises(ValueError):
            clients.generate_pseudo_queries(GEN_CFG, "p", 0)


class TestLoadVectors:
    def write(self, tmp_path, rows):
        path = tmp_path / "vectors.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        return path

    def test_loads_and_normalizes(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = [{"id": f"v{i}", "embedding": rng.standard_normal(8).tolist()}
                for i in range(10)]
        out = clients.load_vectors(self.write(tmp_path, rows))
        assert len(out) == 10
        assert [rid for rid, _ in out] == [f"v{i}" for i in range(10)]
        for _, v in out:
            assert np.linalg.norm(v) == pytest.approx(1.0, rel=1e-9)

    def test_expected_dim_mismatch(self, tmp_path):
        rows = [{"id": "a", "embedding": [1.0] * 8}]
        with pytest.raises(DimensionMismatchError):
            clients.load_vectors(self.write(tmp_path, rows), expected_dim=16)

    def test_zero_vector_names_record(self, tmp_path):
        rows = [{"id": "c3", "embedding": [0.0] * 4}]
        with pytest.raises(ZeroVectorError, match="c3"):
            clients.load_vectors(self.write(tmp_path, rows))

    def test_parse_error(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text("{}\n")
        with pytest.raises(ParseError):
            clients.load_vectors(path)
