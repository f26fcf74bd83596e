"""Prompt routing: retrieval + RAG template when the gate says retrieve,
direct few-shot / chain-of-thought template otherwise."""

from __future__ import annotations

import logging
import string
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Literal

import numpy as np
import yaml

from . import vecmath
from .corpus import CorpusIndex
from .errors import EmptyCorpusError, TemplateError, TransformerFailure
from .gate import Gate, GateDecision

log = logging.getLogger(__name__)

ALLOWED_PLACEHOLDERS = {"query", "contexts", "examples"}

QueryTransformer = Callable[[str], str]


def identity_transformer(text: str) -> str:
    return text


def whitespace_transformer(text: str) -> str:
    return " ".join(text.split())


def transform_query(
    query_text: str,
    transformer: QueryTransformer = identity_transformer,
    fallback_to_identity: bool = True,
) -> tuple[str, bool]:
    """Apply the configured transformer; returns (text, fell_back).

    On transformer failure the original query is returned when fallback
    is enabled, otherwise TransformerFailure propagates.
    """
    if not query_text:
        raise ValueError("query_text must be non-empty")
    try:
        return transformer(query_text), False
    except Exception as e:
        if fallback_to_identity:
            log.warning("query transformer failed (%s); using original query", e)
            return query_text, True
        raise TransformerFailure(str(e)) from e


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    mode: Literal["rag", "direct"]
    body: str

    def __post_init__(self):
        fields = {f for _, f, _, _ in string.Formatter().parse(self.body) if f}
        unknown = fields - ALLOWED_PLACEHOLDERS
        if unknown:
            raise TemplateError(f"template {self.id!r}: unknown placeholders {sorted(unknown)}")
        if self.mode == "rag" and "contexts" not in fields:
            raise TemplateError(f"rag template {self.id!r} must contain {{contexts}}")
        if self.mode == "direct" and "contexts" in fields:
            raise TemplateError(f"direct template {self.id!r} must not contain {{contexts}}")

    def render(self, **values) -> str:
        try:
            return self.body.format(**values)
        except (KeyError, IndexError) as e:
            raise TemplateError(f"template {self.id!r}: unresolved placeholder {e}") from e


@dataclass(frozen=True)
class TemplateSet:
    templates: dict[str, PromptTemplate]
    default_rag: str
    default_direct: str

    def __post_init__(self):
        modes = {t.mode for t in self.templates.values()}
        if "rag" not in modes or "direct" not in modes:
            raise TemplateError("template set needs at least one rag and one direct template")
        for tid in (self.default_rag, self.default_direct):
            if tid not in self.templates:
                raise TemplateError(f"default template {tid!r} not in set")

    def get(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise TemplateError(f"unknown template id {template_id!r}") from None

    @classmethod
    def load_manifest(cls, manifest_path) -> "TemplateSet":
        """Manifest: YAML mapping template_id -> {file, mode}, plus
        optional defaults {rag, direct}."""
        manifest_path = Path(manifest_path)
        raw = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
        templates = {}
        for tid, entry in raw.get("templates", {}).items():
            body = (manifest_path.parent / entry["file"]).read_text(encoding="utf-8")
            templates[tid] = PromptTemplate(tid, entry["mode"], body)
        defaults = raw.get("defaults", {})
        rag_ids = [t for t in templates.values() if t.mode == "rag"]
        direct_ids = [t for t in templates.values() if t.mode == "direct"]
        if not rag_ids or not direct_ids:
            raise TemplateError("manifest needs at least one rag and one direct template")
        return cls(
            templates=templates,
            default_rag=defaults.get("rag", rag_ids[0].id),
            default_direct=defaults.get("direct", direct_ids[0].id),
        )


def default_templates() -> TemplateSet:
    """Templates shipped with the package: one RAG, one few-shot, one CoT."""
    root = resources.files("ctxgate") / "templates"
    with resources.as_file(root / "manifest.yaml") as p:
        return TemplateSet.load_manifest(p)


@dataclass(frozen=True)
class PromptPlan:
    mode: Literal["rag", "direct"]
    rendered_prompt: str
    retrieved: tuple[tuple[str, float], ...]
    template_id: str
    transformed_query: str
    decision: GateDecision
    transformer_fell_back: bool = False

    def as_dict(self) -> dict:
        return {
            "mode": self.mode,
            "prompt": self.rendered_prompt,
            "retrieved": [{"id": cid, "score": s} for cid, s in self.retrieved],
            "template_id": self.template_id,
            "transformed_query": self.transformed_query,
            "decision": self.decision.as_dict(),
        }


def retrieve_top_k(index: CorpusIndex, query, k: int = 3) -> list[tuple[str, float]]:
    """k highest-cosine contexts, descending; ties resolve to the
    smallest context index. Returns fewer than k on a small corpus."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not index.contexts:
        raise EmptyCorpusError("empty corpus")
    q = vecmath.normalize(vecmath.as_embedding(query, dim=index.dim, name="query"))
    sims = index.context_matrix @ q
    # stable mergesort on -sims keeps original order among ties
    order = np.argsort(-sims, kind="stable")[:k]
    return [(index.contexts[int(i)].id, float(np.clip(sims[int(i)], -1.0, 1.0)))
            for i in order]


def _render_contexts(index: CorpusIndex, retrieved: list[tuple[str, float]]) -> str:
    blocks = []
    for rank, (cid, _score) in enumerate(retrieved, start=1):
        blocks.append(f"[{rank}] {index.context_by_id(cid).text}")
    return "\n\n".join(blocks)


def _render_examples(examples: list[dict]) -> str:
    if not examples:
        return ""
    return "\n\n".join(f"Q: {ex['question']}\nA: {ex['answer']}" for ex in examples)


def route(
    gate: Gate,
    index: CorpusIndex,
    query_text: str,
    query_embedding,
    k: int = 3,
    templates: TemplateSet | None = None,
    few_shot_examples: list[dict] | None = None,
    transformer: QueryTransformer = identity_transformer,
    fallback_to_identity: bool = True,
    rag_template_id: str | None = None,
    direct_template_id: str | None = None,
) -> PromptPlan:
    """Classify the query and render the matching prompt.

    The transformer runs on the query text ahead of the gate; callers
    that transform before embedding should pass the embedding of the
    transformed text (the default identity transformer makes the two
    paths coincide).
    """
    templates = templates or default_templates()
    transformed, fell_back = transform_query(query_text, transformer, fallback_to_identity)
    decision = gate.classify(query_embedding)
    if decision.retrieve:
        tpl = templates.get(rag_template_id or templates.default_rag)
        if tpl.mode != "rag":
            raise TemplateError(f"template {tpl.id!r} is not a rag template")
        retrieved = retrieve_top_k(index, query_embedding, k)
        prompt = tpl.render(query=transformed, contexts=_render_contexts(index, retrieved))
        return PromptPlan("rag", prompt, tuple(retrieved), tpl.id, transformed,
                          decision, fell_back)
    tpl = templates.get(direct_template_id or templates.default_direct)
    if tpl.mode != "direct":
        raise TemplateError(f"template {tpl.id!r} is not a direct template")
    prompt = tpl.render(query=transformed, examples=_render_examples(few_shot_examples or []))
    return PromptPlan("direct", prompt, (), tpl.id, transformed, decision, fell_back)
