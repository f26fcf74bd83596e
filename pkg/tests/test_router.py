import numpy as np
import pytest

from conftest import make_index
from ctxgate.distribution import PolicySpec
from ctxgate.errors import EmptyCorpusError, TemplateError, TransformerFailure
from ctxgate.gate import GateConfig, build_gate
from ctxgate.router import (
    PromptTemplate,
    TemplateSet,
    default_templates,
    retrieve_top_k,
    route,
    transform_query,
    whitespace_transformer,
)


class TestTransformQuery:
    def test_identity(self):
        assert transform_query("what is RAG?") == ("what is RAG?", False)

    def test_whitespace(self):
        out, fell_back = transform_query("  what   is RAG? ", whitespace_transformer)
        assert out == "what is RAG?"
        assert not fell_back

    def test_failing_transformer_falls_back(self):
        def broken(_):
            raise RuntimeError("upstream down")
        out, fell_back = transform_query("q", broken, fallback_to_identity=True)
        assert out == "q"
        assert fell_back

    def test_failing_transformer_without_fallback(self):
        def broken(_):
            raise RuntimeError("upstream down")
        with pytest.raises(TransformerFailure):
            transform_query("q", broken, fallback_to_identity=False)

    def test_empty_query_rejected(self):
        with pytest.raises(ValueError):
            transform_query("")


class TestTemplates:
    def test_rag_requires_contexts_placeholder(self):
        with pytest.raises(TemplateError):
            PromptTemplate("bad", "rag", "answer {query}")

    def test_direct_must_not_have_contexts(self):
        with pytest.raises(TemplateError):
            PromptTemplate("bad", "direct", "{contexts} {query}")

    def test_unknown_placeholder(self):
        with pytest.raises(TemplateError):
            PromptTemplate("bad", "direct", "{query} {mystery}")

    def test_defaults_ship_with_package(self):
        ts = default_templates()
        modes = {t.mode for t in ts.templates.values()}
        assert modes == {"rag", "direct"}
        assert ts.get(ts.default_rag).mode == "rag"
        assert ts.get(ts.default_direct).mode == "direct"

    def test_unknown_id(self):
        with pytest.raises(TemplateError):
            default_templates().get("nope")

    def test_manifest_loader(self, tmp_path):
        (tmp_path / "r.txt").write_text("{contexts}\n{query}")
        (tmp_path / "d.txt").write_text("{query}")
        (tmp_path / "m.yaml").write_text(
            "templates:\n  r: {file: r.txt, mode: rag}\n  d: {file: d.txt, mode: direct}\n")
        ts = TemplateSet.load_manifest(tmp_path / "m.yaml")
        assert ts.get("r").mode == "rag"

    def test_set_requires_both_modes(self):
        with pytest.raises(TemplateError):
            TemplateSet(
                {"r": PromptTemplate("r", "rag", "{contexts} {query}")},
                default_rag="r", default_direct="r")


class TestRetrieveTopK:
    def test_exact_match_first(self, small_index):
        q = np.asarray(small_index.contexts[7].embedding, float)
        got = retrieve_top_k(small_index, q, k=1)
        assert got[0][0] == small_index.contexts[7].id
        assert got[0][1] == pytest.approx(1.0, abs=1e-6)

    def test_clips_to_corpus_size(self):
        index = make_index(n_contexts=2, dim=8, k=1, fitted=False)
        got = retrieve_top_k(index, np.ones(8), k=3)
        assert len(got) == 2

    def test_matches_sort_oracle(self):
        index = make_index(n_contexts=50, dim=8, fitted=False)
        rng = np.random.default_rng(17)
        q = rng.standard_normal(8)
        got = retrieve_top_k(index, q, k=5)
        qn = q / np.linalg.norm(q)
        sims = [(c.id, float(np.asarray(c.embedding, float) @ qn))
                for c in index.contexts]
        want = sorted(sims, key=lambda t: -t[1])[:5]
        assert [g[0] for g in got] == [w[0] for w in want]
        for g, w in zip(got, want):
            assert g[1] == pytest.approx(w[1], abs=1e-9)

    def test_full_sort_when_k_is_corpus_size(self, small_index):
        rng = np.random.default_rng(3)
        q = rng.standard_normal(small_index.dim)
        got = retrieve_top_k(small_index, q, k=len(small_index.contexts))
        scores = [s for _, s in got]
        assert scores == sorted(scores, reverse=True)

    def test_empty_corpus(self, small_index):
        from dataclasses import replace
        empty = replace(small_index, contexts=())
        with pytest.raises(EmptyCorpusError):
            retrieve_top_k(empty, np.ones(small_index.dim), k=1)


class TestRoute:
    @pytest.fixture
    def gate_and_index(self, small_index):
        gate = build_gate(small_index, GateConfig(PolicySpec("percentile", 5.0), 0.0))
        return gate, small_index

    def test_in_domain_gets_rag_plan(self, gate_and_index):
        gate, index = gate_and_index
        q = np.asarray(index.contexts[0].embedding, float)
        plan = route(gate, index, "tell me about context 0", q, k=3)
        assert plan.mode == "rag"
        assert len(plan.retrieved) == 3
        for cid, _ in plan.retrieved:
            assert index.context_by_id(cid).text in plan.rendered_prompt
        assert plan.decision.retrieve is True

    @staticmethod
    def _orthogonal_query(index, seed=0):
        # project every context direction out of a random vector; needs
        # a corpus that does not span the whole space
        q = np.random.default_rng(seed).standard_normal(index.dim)
        M = index.context_matrix
        q = q - M.T @ np.linalg.lstsq(M.T, q, rcond=None)[0]
        assert np.linalg.norm(q) > 1e-9
        return q

    @pytest.fixture
    def tall_gate_and_index(self):
        index = make_index(n_contexts=5, dim=16, k=3)
        gate = build_gate(index, GateConfig(PolicySpec("percentile", 5.0), 0.0))
        return gate, index

    def test_out_of_domain_gets_direct_plan(self, tall_gate_and_index):
        gate, index = tall_gate_and_index
        q = self._orthogonal_query(index)
        plan = route(gate, index, "who won the 1998 world cup?", q)
        assert plan.mode == "direct"
        assert plan.retrieved == ()
        assert "who won the 1998 world cup?" in plan.rendered_prompt

    def test_route_mode_equals_gate_decision(self, gate_and_index):
        gate, index = gate_and_index
        rng = np.random.default_rng(23)
        for _ in range(30):
            q = rng.standard_normal(index.dim)
            plan = route(gate, index, "q", q)
            assert (plan.mode == "rag") == gate.classify(q).retrieve

    def test_deterministic(self, gate_and_index):
        gate, index = gate_and_index
        q = np.asarray(index.contexts[1].embedding, float)
        a = route(gate, index, "q", q)
        b = route(gate, index, "q", q)
        assert a.rendered_prompt == b.rendered_prompt
        assert a.retrieved == b.retrieved

    def test_few_shot_examples_rendered(self, tall_gate_and_index):
        gate, index = tall_gate_and_index
        q = self._orthogonal_query(index)
        plan = route(gate, index, "q", q,
                     few_shot_examples=[{"question": "2+2?", "answer": "4"}])
        assert plan.mode == "direct"
        assert "Q: 2+2?" in plan.rendered_prompt
        assert "A: 4" in plan.rendered_prompt

    def test_retrieved_in_score_order(self, gate_and_index):
        gate, index = gate_and_index
        q = np.asarray(index.contexts[2].embedding, float)
        plan = route(gate, index, "q", q, k=4)
        scores = [s for _, s in plan.retrieved]
        assert scores == sorted(scores, reverse=True)

    def test_wrong_mode_template_id(self, gate_and_index):
        gate, index = gate_and_index
        q = np.asarray(index.contexts[0].embedding, float)
        with pytest.raises(TemplateError):
            route(gate, index, "q", q, rag_template_id="direct_fewshot")
