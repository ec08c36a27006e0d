"""Surface-feature space: token significance, positional encoding, document
embeddings, and the cross-class cosine scores built on them.

A document's surface embedding is the significance-weighted sum of the
sinusoidal encodings of its token positions, divided by (token count - 1).
Documents with fewer than 2 tokens, or whose weights are all zero, are
excluded from scoring rather than patched.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .corpus import Dataset, LabeledDocument
from .errors import (
    ConfigError,
    DegenerateDocumentError,
    NoContrastError,
    ObjectiveUndefinedError,
    StaleStatsError,
    ZeroEmbeddingError,
)

DEFAULT_LAMBDA = 64


@dataclass(frozen=True)
class CorpusStats:
    """Document count and per-token document frequencies for one dataset
    snapshot. ``generation_stamp`` records the pipeline iteration that
    produced the snapshot."""

    doc_count: int
    doc_frequency: Mapping[str, int]
    generation_stamp: int = 0


def corpus_stats(dataset: Dataset, generation_stamp: int = 0) -> CorpusStats:
    """Document frequencies over the rewritable texts only; context is ignored."""
    df: Counter[str] = Counter()
    for doc in dataset:
        df.update(set(doc.tokens))
    return CorpusStats(len(dataset), dict(df), generation_stamp)


def tfidf_score(token: str, doc: LabeledDocument, stats: CorpusStats) -> float:
    """Term frequency times inverse document frequency (natural log).

    Zero when the token does not occur in ``doc`` or occurs in every document.
    """
    n = doc.tokens.count(token)
    if n == 0:
        return 0.0
    df = stats.doc_frequency.get(token)
    if df is None:
        raise StaleStatsError(
            f"token {token!r} occurs in document {doc.id!r} but is missing from "
            f"corpus stats (stamp {stats.generation_stamp})"
        )
    return (n / len(doc.tokens)) * math.log(stats.doc_count / df)


def positional_encoding(pos: int, lam: int = DEFAULT_LAMBDA) -> np.ndarray:
    """Sinusoidal encoding of one position: component k is
    sin(pos / 10000^(2k/lam)) for even k and cos of the same angle for odd k.
    """
    if lam <= 0 or lam % 2 != 0:
        raise ConfigError(f"encoding width must be a positive even integer, got {lam}")
    if pos < 0:
        raise ConfigError(f"position must be non-negative, got {pos}")
    return _encoding_matrix(pos + 1, lam)[pos].copy()


def _encoding_matrix(n_positions: int, lam: int) -> np.ndarray:
    """Rows 0..n_positions-1 of the positional encoding, shape (n, lam)."""
    k = np.arange(lam, dtype=np.float64)
    denom = np.power(10000.0, 2.0 * k / lam)
    angles = np.arange(n_positions, dtype=np.float64)[:, None] / denom[None, :]
    out = np.where(k[None, :] % 2 == 0, np.sin(angles), np.cos(angles))
    return out


@dataclass(frozen=True, eq=False)
class SurfaceEmbedding:
    """A document's vector in the surface space plus its unit-normalized form.

    ``is_zero`` flags the all-zero embedding, whose direction (and therefore
    every cosine involving it) is undefined.
    """

    vector: np.ndarray
    unit: np.ndarray
    is_zero: bool


def _finish_embedding(vector: np.ndarray) -> SurfaceEmbedding:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0:
        return SurfaceEmbedding(vector, np.zeros_like(vector), True)
    return SurfaceEmbedding(vector, vector / norm, False)


def _doc_weights(
    doc: LabeledDocument, stats: CorpusStats, unseen_df: Optional[int] = None
) -> np.ndarray:
    counts = Counter(doc.tokens)
    m = len(doc.tokens)
    weights = np.empty(m, dtype=np.float64)
    for j, token in enumerate(doc.tokens):
        df = stats.doc_frequency.get(token, unseen_df)
        if df is None:
            raise StaleStatsError(
                f"token {token!r} occurs in document {doc.id!r} but is missing from "
                f"corpus stats (stamp {stats.generation_stamp})"
            )
        weights[j] = (counts[token] / m) * math.log(stats.doc_count / df)
    return weights


def surface_embedding(
    doc: LabeledDocument,
    stats: CorpusStats,
    lam: int = DEFAULT_LAMBDA,
    unseen_df: Optional[int] = None,
) -> SurfaceEmbedding:
    """Embed one document: sum of weight(token_j) * encoding(j) over 0-based
    positions j, divided by (token count - 1).

    ``unseen_df`` scores text from outside the stats snapshot (rewrite
    candidates): tokens absent from the stats take that document frequency
    instead of raising. Snapshot documents should leave it None so stale
    stats are caught.
    """
    if lam <= 0 or lam % 2 != 0:
        raise ConfigError(f"encoding width must be a positive even integer, got {lam}")
    m = len(doc.tokens)
    if m < 2:
        raise DegenerateDocumentError(
            f"document {doc.id!r} has {m} token(s); at least 2 are required"
        )
    weights = _doc_weights(doc, stats, unseen_df)
    vector = (weights @ _encoding_matrix(m, lam)) / (m - 1)
    return _finish_embedding(vector)


def compute_embeddings(
    dataset: Dataset,
    stats: Optional[CorpusStats] = None,
    lam: int = DEFAULT_LAMBDA,
) -> dict[str, SurfaceEmbedding]:
    """Embeddings for every embeddable document (>= 2 tokens), keyed by id.

    Documents that are too short are simply absent from the result; callers
    treat missing ids as unscoreable.
    """
    if lam <= 0 or lam % 2 != 0:
        raise ConfigError(f"encoding width must be a positive even integer, got {lam}")
    if stats is None:
        stats = corpus_stats(dataset)
    max_len = max((len(d.tokens) for d in dataset), default=0)
    if max_len == 0:
        return {}
    matrix = _encoding_matrix(max_len, lam)
    out: dict[str, SurfaceEmbedding] = {}
    for doc in dataset:
        m = len(doc.tokens)
        if m < 2:
            continue
        weights = _doc_weights(doc, stats)
        vector = (weights @ matrix[:m]) / (m - 1)
        out[doc.id] = _finish_embedding(vector)
    return out


def opposite_set(doc: LabeledDocument, dataset: Dataset) -> frozenset[str]:
    """Ids of all documents whose label differs from ``doc``'s."""
    ids = frozenset(d.id for d in dataset if d.label != doc.label)
    if not ids:
        raise NoContrastError(
            f"document {doc.id!r}: no documents with a different label exist"
        )
    return ids


def class_unit_sums(
    dataset: Dataset, embeddings: Mapping[str, SurfaceEmbedding]
) -> tuple[dict[int, np.ndarray], dict[int, int]]:
    """Per-class sums and counts of unit vectors, zero embeddings excluded."""
    sums: dict[int, np.ndarray] = {}
    counts: dict[int, int] = {label: 0 for label in dataset.label_names}
    for doc in dataset:
        emb = embeddings.get(doc.id)
        if emb is None or emb.is_zero:
            continue
        if doc.label in sums:
            sums[doc.label] += emb.unit
        else:
            sums[doc.label] = emb.unit.copy()
        counts[doc.label] += 1
    return sums, counts


def opposite_unit_mean_context(
    doc: LabeledDocument, dataset: Dataset, embeddings: Mapping[str, SurfaceEmbedding]
) -> tuple[np.ndarray, int]:
    """Sum of opposite-class unit vectors and their count, for scoring ``doc``."""
    sums, counts = class_unit_sums(dataset, embeddings)
    total = None
    n = 0
    for label, vec in sums.items():
        if label == doc.label:
            continue
        total = vec.copy() if total is None else total + vec
        n += counts[label]
    if total is None or n == 0:
        raise NoContrastError(
            f"document {doc.id!r}: no scoreable documents with a different label"
        )
    return total, n


def score_against(embedding: SurfaceEmbedding, opposite_sum: np.ndarray, opposite_count: int) -> float:
    """Shortcut score of one embedding against a precomputed opposite-class sum:
    1 - mean cosine, computed as a single dot with the summed unit vectors."""
    return 1.0 - float(embedding.unit @ opposite_sum) / opposite_count


def shortcut_score(
    doc: LabeledDocument,
    dataset: Dataset,
    embeddings: Mapping[str, SurfaceEmbedding],
) -> float:
    """1 - mean cosine between ``doc`` and all opposite-label documents.

    Range [0, 2]; high values flag documents whose surface features diverge
    from the opposite class. Zero-embedding documents are excluded on both
    sides (their cosines are undefined).
    """
    emb = embeddings.get(doc.id)
    if emb is None or emb.is_zero:
        raise ZeroEmbeddingError(f"document {doc.id!r} has no usable surface embedding")
    opposite_sum, n = opposite_unit_mean_context(doc, dataset, embeddings)
    return score_against(emb, opposite_sum, n)


def shortcut_scores(
    dataset: Dataset, embeddings: Mapping[str, SurfaceEmbedding]
) -> dict[str, float]:
    """Shortcut scores for every scoreable document, in one pass over classes."""
    sums, counts = class_unit_sums(dataset, embeddings)
    if not sums:
        return {}
    all_sum = sum(sums.values())
    all_count = sum(counts.values())
    out: dict[str, float] = {}
    for doc in dataset:
        emb = embeddings.get(doc.id)
        if emb is None or emb.is_zero:
            continue
        n = all_count - counts[doc.label]
        if n == 0:
            continue
        opposite_sum = all_sum - sums.get(doc.label, 0.0)
        out[doc.id] = 1.0 - float(emb.unit @ opposite_sum) / n
    return out


def class_alignment_objective(
    dataset: Dataset, embeddings: Mapping[str, SurfaceEmbedding]
) -> float:
    """Summed pairwise cosine similarity between documents of different labels,
    computed as dots of per-class unit-vector sums over unordered class pairs.

    This is the pipeline's convergence target; rewriting aims to increase it.
    """
    sums, counts = class_unit_sums(dataset, embeddings)
    for label in dataset.label_names:
        present = any(doc.label == label for doc in dataset)
        if present and counts.get(label, 0) == 0:
            raise ObjectiveUndefinedError(
                f"class {label} has no non-zero surface embeddings; objective undefined"
            )
    labels = sorted(sums)
    total = 0.0
    for i, a in enumerate(labels):
        for b in labels[i + 1 :]:
            total += float(sums[a] @ sums[b])
    return total
