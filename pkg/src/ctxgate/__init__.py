"""ctxgate: a statistical retrieve-or-answer gate for RAG pipelines.

Learn the corpus's context/pseudo-query cosine similarity distribution
once, then classify each incoming query in O(1) per request and route
it into a RAG prompt or a direct-answer prompt.
"""

from .corpus import (
    ContextRecord,
    CorpusIndex,
    NegativePairStrategy,
    PseudoQueryRecord,
    fit_distributions,
    ingest,
    ingest_file,
    load_index,
    save_index,
)
from .distribution import (
    AnalysisReport,
    DistributionSummary,
    PairSampleSet,
    PolicySpec,
    policy_value,
    report,
    separation_auc,
    summarize,
)
from .gate import Gate, GateConfig, GateDecision, build_gate, classify, classify_batch
from .router import PromptPlan, PromptTemplate, TemplateSet, retrieve_top_k, route
from .vecmath import cosine, max_similarity, normalize, similarity_matrix

__version__ = "0.1.0"

__all__ = [
    "AnalysisReport",
    "ContextRecord",
    "CorpusIndex",
    "DistributionSummary",
    "Gate",
    "GateConfig",
    "GateDecision",
    "NegativePairStrategy",
    "PairSampleSet",
    "PolicySpec",
    "PromptPlan",
    "PromptTemplate",
    "PseudoQueryRecord",
    "TemplateSet",
    "build_gate",
    "classify",
    "classify_batch",
    "cosine",
    "fit_distributions",
    "ingest",
    "ingest_file",
    "load_index",
    "max_similarity",
    "normalize",
    "policy_value",
    "report",
    "retrieve_top_k",
    "route",
    "save_index",
    "separation_auc",
    "similarity_matrix",
    "summarize",
]
