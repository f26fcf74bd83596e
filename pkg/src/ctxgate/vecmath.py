"""Vector and batched-matrix cosine similarity primitives.

Embeddings are plain numpy arrays. Storage elsewhere is float32; all
accumulation here happens in float64 so percentiles over 1e5+ samples
stay stable. Everything in this module is a pure function.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, EmptyCorpusError, ZeroVectorError

__all__ = [
    "as_embedding",
    "normalize",
    "cosine",
    "similarity_matrix",
    "max_similarity",
]


def as_embedding(values, dim: int | None = None, name: str = "embedding") -> np.ndarray:
    """Validate an array-like as a finite 1-D embedding, returned as float64."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatchError(f"{name}: expected a non-empty 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ZeroVectorError(f"{name}: contains NaN or infinity")
    if dim is not None and v.size != dim:
        raise DimensionMismatchError(f"{name}: dimension {v.size} != expected {dim}")
    return v


def normalize(v, name: str = "embedding") -> np.ndarray:
    """Unit-normalize a vector. Raises ZeroVectorError on an all-zero input."""
    v = as_embedding(v, name=name)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise ZeroVectorError(f"{name}: zero vector cannot be normalized")
    return v / norm


def cosine(a, b) -> float:
    """Cosine similarity of two vectors, clamped to [-1, 1]."""
    a = as_embedding(a, name="a")
    b = as_embedding(b, name="b")
    if a.size != b.size:
        raise DimensionMismatchError(f"dimension mismatch: {a.size} vs {b.size}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroVectorError("cosine undefined for a zero vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def _stack(embeddings: Sequence, what: str) -> np.ndarray:
    """Stack embeddings into an (n, dim) float64 matrix of unit rows."""
    if len(embeddings) == 0:
        raise EmptyCorpusError(f"no {what} given")
    rows = np.stack([np.asarray(e, dtype=np.float64) for e in embeddings])
    if rows.ndim != 2:
        raise DimensionMismatchError(f"{what} do not share one dimension")
    if not np.all(np.isfinite(rows)):
        bad = int(np.argwhere(~np.isfinite(rows).all(axis=1))[0, 0])
        raise ZeroVectorError(f"{what}[{bad}]: contains NaN or infinity")
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVectorError(f"{what}[{int(zero[0])}]: zero vector")
    return rows / norms[:, None]


def similarity_matrix(contexts: Sequence, queries: Sequence) -> np.ndarray:
    """Cosine similarity of every (context, query) pair, computed in one pass.

    Returns an (n_contexts, n_queries) float64 matrix with entries
    clamped to [-1, 1].
    """
    c = _stack(contexts, "contexts")
    q = _stack(queries, "queries")
    if c.shape[1] != q.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: contexts dim {c.shape[1]} vs queries dim {q.shape[1]}")
    return np.clip(c @ q.T, -1.0, 1.0)


def max_similarity(query, contexts: Sequence) -> tuple[float, int]:
    """Highest cosine similarity between the query and any context.

    Returns (score, argmax index); ties go to the smallest index.
    """
    if len(contexts) == 0:
        raise EmptyCorpusError("no contexts to compare against")
    sims = similarity_matrix(contexts, [normalize(query, name="query")])[:, 0]
    idx = int(np.argmax(sims))
    return float(sims[idx]), idx
