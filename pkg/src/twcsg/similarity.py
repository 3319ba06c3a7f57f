"""Embedding-based similarity of a knowledge base to a reference (manual) one.

Entities are embedded as the mean of their in-vocabulary token vectors. An
entity counts as similar when its best cosine against any reference entity
is strictly above the threshold; a pair ``{e1, e2}`` is embedded as
``z1 + z2`` and compared the same way against reference triplet pairs.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .knowledge import KnowledgeBase

log = logging.getLogger(__name__)

ENTITY_THRESHOLD = 0.7
PAIR_THRESHOLD = 0.65
_CHUNK = 20_000


class EmbeddingError(ValueError):
    pass


@dataclass
class EmbeddingStore:
    dim: int
    tokens: dict[str, int]
    matrix: np.ndarray

    def __contains__(self, token: str) -> bool:
        return token in self.tokens

    def __len__(self) -> int:
        return len(self.tokens)

    def vector(self, token: str) -> np.ndarray:
        return self.matrix[self.tokens[token]]

    @classmethod
    def from_dict(cls, table: dict[str, Sequence[float]]) -> "EmbeddingStore":
        if not table:
            raise EmbeddingError("empty embedding table")
        toks = {t.lower(): i for i, t in enumerate(table)}
        mat = np.asarray([list(v) for v in table.values()], dtype=np.float64)
        if mat.ndim != 2:
            raise EmbeddingError("inconsistent vector dimensions")
        return cls(mat.shape[1], toks, mat)


@dataclass
class EntityEmbedding:
    entity: str
    vector: np.ndarray
    resolved: bool


def load_embeddings(path, expected_d: int | None = None) -> EmbeddingStore:
    """Read a GloVe-style text file: ``token v1 ... vd`` per line."""
    tokens: dict[str, int] = {}
    rows: list[list[float]] = []
    dim = expected_d
    try:
        fh = open(path, encoding="utf-8")
    except OSError as e:
        raise EmbeddingError(f"cannot read {path}: {e}") from e
    with fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip().split(" ")
            if not parts or not parts[0]:
                continue
            tok, vals = parts[0].lower(), parts[1:]
            if dim is None:
                dim = len(vals)
            if len(vals) != dim or dim == 0:
                raise EmbeddingError(
                    f"{path}: line {lineno}: expected {dim} components, got {len(vals)}")
            try:
                vec = [float(v) for v in vals]
            except ValueError as e:
                raise EmbeddingError(f"{path}: line {lineno}: {e}") from e
            if tok in tokens:
                log.warning("%s: line %d: duplicate token %r, keeping last", path, lineno, tok)
                rows[tokens[tok]] = vec
            else:
                tokens[tok] = len(rows)
                rows.append(vec)
    if not rows:
        raise EmbeddingError(f"{path}: no embeddings")
    return EmbeddingStore(dim, tokens, np.asarray(rows, dtype=np.float64))


def save_embeddings(store: EmbeddingStore, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for tok, i in store.tokens.items():
            fh.write(tok + " " + " ".join(repr(float(x)) for x in store.matrix[i]) + "\n")


def synthetic_embeddings(tokens, dim: int = 100, seed: int = 0) -> EmbeddingStore:
    """Random Gaussian vectors; a stand-in when no pre-trained file is at hand."""
    rng = np.random.default_rng(seed)
    toks = sorted({t.lower() for t in tokens})
    mat = rng.normal(0.0, 1.0 / np.sqrt(dim), size=(len(toks), dim))
    return EmbeddingStore(dim, {t: i for i, t in enumerate(toks)}, mat)


def tokenize(name: str) -> list[str]:
    return name.lower().split()


def embed_entity(store: EmbeddingStore, entity: str) -> EntityEmbedding:
    idx = [store.tokens[t] for t in tokenize(entity) if t in store.tokens]
    if not idx:
        return EntityEmbedding(entity, np.zeros(store.dim), False)
    return EntityEmbedding(entity, store.matrix[idx].mean(axis=0), True)


def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


@dataclass
class SimilarityReport:
    source: str
    entity_count: int = 0
    pair_count: int = 0
    entity_threshold: float = ENTITY_THRESHOLD
    pair_threshold: float = PAIR_THRESHOLD
    details: list[tuple[str, str, float]] = field(default_factory=list)
    unresolved: list[str] = field(default_factory=list)


def _embed_all(store, names):
    names = sorted(names)
    mat = np.zeros((len(names), store.dim))
    ok = np.zeros(len(names), dtype=bool)
    for i, n in enumerate(names):
        e = embed_entity(store, n)
        mat[i] = e.vector
        ok[i] = e.resolved
    return names, mat, ok


def _unit_rows(mat):
    norms = np.linalg.norm(mat, axis=1, keepdims=True)
    nz = norms[:, 0] > 0
    out = np.zeros_like(mat)
    out[nz] = mat[nz] / norms[nz]
    return out, nz


def _require_reference(manual: KnowledgeBase):
    if len(manual) == 0:
        raise ValueError("reference knowledge base is empty")


def entity_similarity_count(candidate: KnowledgeBase, manual: KnowledgeBase,
                            store: EmbeddingStore,
                            threshold: float = ENTITY_THRESHOLD) -> SimilarityReport:
    _require_reference(manual)
    rep = SimilarityReport(candidate.source_tag, entity_threshold=threshold)
    ref_names, ref_mat, ref_ok = _embed_all(store, manual.entities())
    ref_names = [n for n, ok in zip(ref_names, ref_ok) if ok]
    ref_unit, _ = _unit_rows(ref_mat[ref_ok])
    names, mat, ok = _embed_all(store, candidate.entities())
    rep.unresolved = [n for n, r in zip(names, ok) if not r]
    if not ref_names or not ok.any():
        return rep
    names = [n for n, r in zip(names, ok) if r]
    cand_unit, _ = _unit_rows(mat[ok])
    for start in range(0, len(names), _CHUNK):
        sims = cand_unit[start:start + _CHUNK] @ ref_unit.T
        best = sims.argmax(axis=1)
        best_val = sims[np.arange(len(best)), best]
        for j in np.nonzero(best_val > threshold)[0]:
            rep.details.append((names[start + j], ref_names[best[j]], float(best_val[j])))
    rep.entity_count = len(rep.details)
    return rep


def _pair_vectors(kb, store, unit: str):
    """Return (index pairs, weights) where weight is how many units each pair stands for."""
    names, mat, ok = _embed_all(store, kb.entities())
    pos = {n: i for i, n in enumerate(names)}
    weights: dict[tuple[int, int], int] = {}
    for h, _, t in kb.counts:
        i, j = sorted((pos[h], pos[t]))
        if not (ok[i] and ok[j]):
            continue
        weights[(i, j)] = weights.get((i, j), 0) + 1
    keys = sorted(weights)
    if unit == "pair":
        w = np.ones(len(keys), dtype=np.int64)
    elif unit == "triplet":
        w = np.array([weights[k] for k in keys], dtype=np.int64)
    else:
        raise ValueError(f"pair unit must be 'pair' or 'triplet', got {unit!r}")
    idx = np.array(keys, dtype=np.int64).reshape(-1, 2)
    return mat, idx, w


def pair_similarity_count(candidate: KnowledgeBase, manual: KnowledgeBase,
                          store: EmbeddingStore, threshold: float = PAIR_THRESHOLD,
                          unit: str = "pair") -> SimilarityReport:
    """Count candidate pairs whose best summed-embedding cosine beats ``threshold``.

    ``unit="pair"`` counts distinct unordered entity pairs; ``unit="triplet"``
    counts every candidate triplet whose pair qualifies.
    """
    _require_reference(manual)
    rep = SimilarityReport(candidate.source_tag, pair_threshold=threshold)
    ref_mat, ref_idx, _ = _pair_vectors(manual, store, "pair")
    if not len(ref_idx):
        return rep
    ref_unit, ref_nz = _unit_rows(ref_mat[ref_idx[:, 0]] + ref_mat[ref_idx[:, 1]])
    ref_unit = ref_unit[ref_nz]
    mat, idx, w = _pair_vectors(candidate, store, unit)
    total = 0
    for start in range(0, len(idx), _CHUNK):
        chunk = idx[start:start + _CHUNK]
        cu, nz = _unit_rows(mat[chunk[:, 0]] + mat[chunk[:, 1]])
        best = (cu @ ref_unit.T).max(axis=1) if len(ref_unit) else np.zeros(len(cu))
        hit = (best > threshold) & nz
        total += int(w[start:start + _CHUNK][hit].sum())
    rep.pair_count = total
    return rep


def compare_report(candidates: Sequence[tuple[str, KnowledgeBase]], manual: KnowledgeBase,
                   store: EmbeddingStore, entity_threshold: float = ENTITY_THRESHOLD,
                   pair_threshold: float = PAIR_THRESHOLD,
                   unit: str = "pair") -> list[SimilarityReport]:
    if not candidates:
        raise ValueError("at least one candidate knowledge base is required")
    out = []
    for label, kb in candidates:
        ent = entity_similarity_count(kb, manual, store, entity_threshold)
        pair = pair_similarity_count(kb, manual, store, pair_threshold, unit)
        ent.source = label
        ent.pair_count = pair.pair_count
        ent.pair_threshold = pair_threshold
        if ent.unresolved:
            log.info("%s: %d entities had no embedding and were excluded", label,
                     len(ent.unresolved))
        out.append(ent)
    return out


def write_report_csv(reports: Sequence[SimilarityReport], path) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "n_entities_similar", "n_pairs_similar",
                    "entity_threshold", "pair_threshold"])
        for r in reports:
            w.writerow([r.source, r.entity_count, r.pair_count,
                        r.entity_threshold, r.pair_threshold])
