"""Corpus ingestion, positive/negative pair fitting, and index persistence.

Corpus files are UTF-8 JSON lines, one context per line:

    {"id": ..., "topic": ..., "text": ...,
     "embedding": [...],                      # optional if embedding at ingest
     "pseudo_queries": [{"text": ..., "embedding": [...]}, ...]}

The index file is binary little-endian: magic ``CAGX``, version u16,
dim u32, counts, a length-prefixed embedder fingerprint and JSON
metadata block, float32 embedding arrays, float64 sample arrays, and a
trailing 8-byte checksum.
"""

from __future__ import annotations

import hashlib
import io
import json
import logging
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from . import vecmath
from .distribution import PairSampleSet
from .errors import (
    CorruptIndexError,
    DimensionMismatchError,
    DuplicateIdError,
    EmptyCorpusError,
    InsufficientSamplesError,
    IoError,
    MissingEmbeddingError,
    ParseError,
    VersionUnsupportedError,
)

log = logging.getLogger(__name__)

MAGIC = b"CAGX"
FORMAT_VERSION = 1
MIN_FIT_SAMPLES = 20


@dataclass(frozen=True)
class ContextRecord:
    id: str
    topic: str
    text: str
    embedding: np.ndarray  # float32, unit-normalized
    pseudo_query_ids: tuple[str, ...]

    def __eq__(self, other):
        return (
            isinstance(other, ContextRecord)
            and (self.id, self.topic, self.text, self.pseudo_query_ids)
            == (other.id, other.topic, other.text, other.pseudo_query_ids)
            and np.array_equal(self.embedding, other.embedding)
        )


@dataclass(frozen=True)
class PseudoQueryRecord:
    id: str
    parent_context_id: str
    text: str
    embedding: np.ndarray  # float32, unit-normalized

    def __eq__(self, other):
        return (
            isinstance(other, PseudoQueryRecord)
            and (self.id, self.parent_context_id, self.text)
            == (other.id, other.parent_context_id, other.text)
            and np.array_equal(self.embedding, other.embedding)
        )


@dataclass(frozen=True)
class NegativePairStrategy:
    """How to pick irrelevant (context, foreign pseudo-query) pairs.

    kinds: ``all_cross`` (every foreign pair), ``cross_topic`` (only
    pairs whose topics differ; the default), ``sampled`` (uniform
    sample of n cross pairs with a fixed seed).
    """

    kind: str = "cross_topic"
    n: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("all_cross", "cross_topic", "sampled"):
            raise ValueError(f"unknown negative strategy: {self.kind!r}")


@dataclass(frozen=True)
class CorpusIndex:
    dim: int
    contexts: tuple[ContextRecord, ...]
    pseudo_queries: tuple[PseudoQueryRecord, ...]
    embedder_fingerprint: str
    positive_samples: PairSampleSet | None = None
    negative_samples: PairSampleSet | None = None
    negative_strategy: NegativePairStrategy | None = None
    cutoff_cache: float | None = None

    @property
    def fitted(self) -> bool:
        return self.positive_samples is not None

    @property
    def context_matrix(self) -> np.ndarray:
        """(n_contexts, dim) float64 matrix of unit rows."""
        return np.stack([c.embedding for c in self.contexts]).astype(np.float64)

    @property
    def pseudo_query_matrix(self) -> np.ndarray:
        return np.stack([q.embedding for q in self.pseudo_queries]).astype(np.float64)

    def context_by_id(self, cid: str) -> ContextRecord:
        return {c.id: c for c in self.contexts}[cid]

    def fingerprint_check(self, other_fingerprint: str):
        if other_fingerprint != self.embedder_fingerprint:
            raise DimensionMismatchError(
                "embedder fingerprint mismatch: index built with "
                f"{self.embedder_fingerprint!r}, got {other_fingerprint!r}"
            )


def _prepare_embedding(raw, dim: int | None, name: str) -> np.ndarray:
    v = vecmath.normalize(vecmath.as_embedding(raw, dim=dim, name=name), name=name)
    return v.astype(np.float32)


def read_corpus_file(path) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, record) pairs from a JSONL corpus file."""
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot open corpus file: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"invalid JSON: {e.msg}", line=lineno) from e
            if not isinstance(obj, dict):
                raise ParseError("record is not an object", line=lineno)
            yield lineno, obj


def ingest(
    records: Iterable[tuple[int, dict]],
    embed_missing: bool = False,
    embedder: Callable[[list[str]], list] | None = None,
    embedder_fingerprint: str | None = None,
) -> CorpusIndex:
    """Build a validated, unit-normalized corpus index from parsed records.

    ``embedder`` is any callable mapping a list of texts to a list of
    vectors; it is only consulted for records that lack inline
    embeddings and only when ``embed_missing`` is set.
    """
    raw_contexts: list[tuple[int, dict]] = []
    seen_ids: set[str] = set()
    missing_texts: list[str] = []
    missing_slots: list[tuple[int, int]] = []  # (context position, pq position or -1)

    for lineno, obj in records:
        for key in ("id", "topic", "text"):
            if not obj.get(key) or not isinstance(obj[key], str):
                raise ParseError(f"missing or non-string field {key!r}", line=lineno)
        cid = obj["id"]
        if cid in seen_ids:
            raise DuplicateIdError(f"duplicate context id {cid!r} (line {lineno})")
        seen_ids.add(cid)
        pqs = obj.get("pseudo_queries", [])
        if not isinstance(pqs, list):
            raise ParseError("pseudo_queries must be a list", line=lineno)
        for j, pq in enumerate(pqs):
            if not isinstance(pq, dict) or not pq.get("text"):
                raise ParseError(f"pseudo_queries[{j}] missing text", line=lineno)
        pos = len(raw_contexts)
        if "embedding" not in obj:
            missing_texts.append(obj["text"])
            missing_slots.append((pos, -1))
        for j, pq in enumerate(pqs):
            if "embedding" not in pq:
                missing_texts.append(pq["text"])
                missing_slots.append((pos, j))
        raw_contexts.append((lineno, obj))

    if not raw_contexts:
        raise EmptyCorpusError("corpus file contains no records")

    if missing_texts:
        if not embed_missing or embedder is None:
            pos, j = missing_slots[0]
            lineno, obj = raw_contexts[pos]
            where = obj["id"] if j < 0 else f"{obj['id']} pseudo_queries[{j}]"
            raise MissingEmbeddingError(
                f"record {where!r} has no embedding and embed_missing is off"
            )
        fetched = embedder(missing_texts)
        if len(fetched) != len(missing_texts):
            raise MissingEmbeddingError("embedder returned wrong number of vectors")
        for (pos, j), vec in zip(missing_slots, fetched):
            _, obj = raw_contexts[pos]
            if j < 0:
                obj["embedding"] = list(np.asarray(vec, dtype=float))
            else:
                obj["pseudo_queries"][j]["embedding"] = list(np.asarray(vec, dtype=float))

    dim: int | None = None
    contexts: list[ContextRecord] = []
    pseudo_queries: list[PseudoQueryRecord] = []
    pq_ids: set[str] = set()
    for lineno, obj in raw_contexts:
        try:
            emb = _prepare_embedding(obj["embedding"], dim, name=f"context {obj['id']!r}")
        except DimensionMismatchError as e:
            raise DimensionMismatchError(f"line {lineno}: {e}") from e
        if dim is None:
            dim = emb.size
        this_pq_ids = []
        for j, pq in enumerate(obj.get("pseudo_queries", [])):
            pq_id = pq.get("id") or f"{obj['id']}#q{j}"
            if pq_id in pq_ids or pq_id in seen_ids:
                raise DuplicateIdError(f"duplicate pseudo-query id {pq_id!r} (line {lineno})")
            pq_ids.add(pq_id)
            pq_emb = _prepare_embedding(pq["embedding"], dim, name=f"pseudo-query {pq_id!r}")
            pseudo_queries.append(
                PseudoQueryRecord(pq_id, obj["id"], pq["text"], pq_emb)
            )
            this_pq_ids.append(pq_id)
        contexts.append(
            ContextRecord(obj["id"], obj["topic"], obj["text"], emb, tuple(this_pq_ids))
        )

    no_pq = [c.id for c in contexts if not c.pseudo_query_ids]
    if no_pq:
        log.warning(
            "%d context(s) have no pseudo-queries and are excluded from "
            "distribution fitting (first: %r)", len(no_pq), no_pq[0],
        )
    fingerprint = embedder_fingerprint or f"inline:{dim}"
    return CorpusIndex(
        dim=dim,
        contexts=tuple(contexts),
        pseudo_queries=tuple(pseudo_queries),
        embedder_fingerprint=fingerprint,
    )


def ingest_file(path, **kwargs) -> CorpusIndex:
    return ingest(read_corpus_file(path), **kwargs)


def fit_distributions(
    index: CorpusIndex,
    negative_strategy: NegativePairStrategy = NegativePairStrategy(),
    strict: bool = False,
) -> CorpusIndex:
    """Compute positive and negative similarity samples for the gate.

    Positive pairs are (context, its own pseudo-query); negatives are
    chosen by the strategy. Sample ordering is fixed by (context index,
    pseudo-query index) so refits are deterministic. With fewer than 20
    positive samples percentile cutoffs are statistically meaningless:
    ``strict`` makes that an error, the default just warns.
    """
    if not index.contexts:
        raise EmptyCorpusError("cannot fit an empty corpus")
    if not index.pseudo_queries:
        raise InsufficientSamplesError("corpus has no pseudo-queries to fit on")

    sims = vecmath.similarity_matrix(index.context_matrix, index.pseudo_query_matrix)

    pq_pos = {q.id: j for j, q in enumerate(index.pseudo_queries)}
    pq_topic = np.array(
        [index.context_by_id(q.parent_context_id).topic for q in index.pseudo_queries]
    )
    ctx_topic = np.array([c.topic for c in index.contexts])
    own = np.zeros(sims.shape, dtype=bool)
    positives: list[float] = []
    for i, ctx in enumerate(index.contexts):
        for pq_id in ctx.pseudo_query_ids:
            j = pq_pos[pq_id]
            own[i, j] = True
            positives.append(float(sims[i, j]))

    if len(positives) < MIN_FIT_SAMPLES:
        msg = (
            f"only {len(positives)} positive samples; percentile cutoffs "
            f"need at least {MIN_FIT_SAMPLES} to mean anything"
        )
        if strict:
            raise InsufficientSamplesError(msg)
        warnings.warn(msg, stacklevel=2)

    cross = ~own
    if negative_strategy.kind == "cross_topic":
        cross &= ctx_topic[:, None] != pq_topic[None, :]
        negatives = sims[cross]
    elif negative_strategy.kind == "all_cross":
        negatives = sims[cross]
    else:
        flat = np.flatnonzero(cross.ravel())
        rng = np.random.default_rng(negative_strategy.seed)
        take = min(negative_strategy.n, flat.size)
        picked = np.sort(rng.choice(flat, size=take, replace=False))
        negatives = sims.ravel()[picked]

    if negatives.size == 0:
        if strict:
            raise InsufficientSamplesError(
                f"negative strategy {negative_strategy.kind!r} selected no pairs"
            )
        warnings.warn(
            f"negative strategy {negative_strategy.kind!r} selected no pairs; "
            "only the positive distribution is available", stacklevel=2,
        )

    return replace(
        index,
        positive_samples=PairSampleSet("positive", np.array(positives)),
        negative_samples=(PairSampleSet("negative", negatives)
                          if negatives.size else None),
        negative_strategy=negative_strategy,
        cutoff_cache=None,
    )


# ---------------------------------------------------------------------------
# Binary index persistence


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def _pack_samples(samples: PairSampleSet | None) -> bytes:
    if samples is None:
        return struct.pack("<Q", 0)
    arr = np.ascontiguousarray(samples.values, dtype="<f8")
    return struct.pack("<Q", arr.size) + arr.tobytes()


def save_index(index: CorpusIndex, path) -> None:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<HIQQ", FORMAT_VERSION, index.dim,
                          len(index.contexts), len(index.pseudo_queries)))
    buf.write(_pack_str(index.embedder_fingerprint))
    meta = {
        "contexts": [
            {"id": c.id, "topic": c.topic, "text": c.text,
             "pseudo_query_ids": list(c.pseudo_query_ids)}
            for c in index.contexts
        ],
        "pseudo_queries": [
            {"id": q.id, "parent_context_id": q.parent_context_id, "text": q.text}
            for q in index.pseudo_queries
        ],
        "negative_strategy": (
            None if index.negative_strategy is None
            else {"kind": index.negative_strategy.kind,
                  "n": index.negative_strategy.n,
                  "seed": index.negative_strategy.seed}
        ),
        "cutoff_cache": index.cutoff_cache,
        "has_positive": index.positive_samples is not None,
        "has_negative": index.negative_samples is not None,
    }
    meta_raw = json.dumps(meta, ensure_ascii=False).encode("utf-8")
    buf.write(struct.pack("<Q", len(meta_raw)))
    buf.write(meta_raw)
    for c in index.contexts:
        buf.write(np.ascontiguousarray(c.embedding, dtype="<f4").tobytes())
    for q in index.pseudo_queries:
        buf.write(np.ascontiguousarray(q.embedding, dtype="<f4").tobytes())
    buf.write(_pack_samples(index.positive_samples))
    buf.write(_pack_samples(index.negative_samples))
    payload = buf.getvalue()
    checksum = hashlib.sha256(payload).digest()[:8]
    try:
        Path(path).write_bytes(payload + checksum)
    except OSError as e:
        raise IoError(f"cannot write index: {e}") from e


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise CorruptIndexError("index file truncated")
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def take_str(self) -> str:
        (n,) = self.unpack("<I")
        return self.take(n).decode("utf-8")


def load_index(path) -> CorpusIndex:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read index: {e}") from e
    if len(data) < len(MAGIC) + 8:
        raise CorruptIndexError("index file too small")
    payload, checksum = data[:-8], data[-8:]
    if hashlib.sha256(payload).digest()[:8] != checksum:
        raise CorruptIndexError("index checksum mismatch")
    r = _Reader(payload)
    if r.take(4) != MAGIC:
        raise CorruptIndexError("bad magic bytes")
    version, dim, n_ctx, n_pq = r.unpack("<HIQQ")
    if version != FORMAT_VERSION:
        raise VersionUnsupportedError(f"index format version {version} unsupported")
    fingerprint = r.take_str()
    (meta_len,) = r.unpack("<Q")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise CorruptIndexError(f"bad metadata block: {e}") from e

    def read_matrix(n):
        raw = r.take(n * dim * 4)
        return np.frombuffer(raw, dtype="<f4").reshape(n, dim)

    ctx_emb = read_matrix(n_ctx)
    pq_emb = read_matrix(n_pq)

    def read_samples(label, present):
        (count,) = r.unpack("<Q")
        vals = np.frombuffer(r.take(count * 8), dtype="<f8")
        return PairSampleSet(label, vals.copy()) if present else None

    positive = read_samples("positive", meta["has_positive"])
    negative = read_samples("negative", meta["has_negative"])
    if len(meta["contexts"]) != n_ctx or len(meta["pseudo_queries"]) != n_pq:
        raise CorruptIndexError("metadata counts disagree with header")

    contexts = tuple(
        ContextRecord(m["id"], m["topic"], m["text"], ctx_emb[i].copy(),
                      tuple(m["pseudo_query_ids"]))
        for i, m in enumerate(meta["contexts"])
    )
    pseudo_queries = tuple(
        PseudoQueryRecord(m["id"], m["parent_context_id"], m["text"], pq_emb[i].copy())
        for i, m in enumerate(meta["pseudo_queries"])
    )
    strategy = meta["negative_strategy"]
    return CorpusIndex(
        dim=dim,
        contexts=contexts,
        pseudo_queries=pseudo_queries,
        embedder_fingerprint=fingerprint,
        positive_samples=positive,
        negative_samples=negative,
        negative_strategy=None if strategy is None else NegativePairStrategy(**strategy),
        cutoff_cache=meta["cutoff_cache"],
    )
