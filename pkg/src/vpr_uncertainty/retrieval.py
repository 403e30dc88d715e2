"""Exact K-nearest-neighbor retrieval in L2 descriptor distance.

Candidates are preselected with the ``|r|^2 - 2 r.q + |q|^2`` expansion (one
matrix product per block of queries), then every candidate within a rounding
margin of the K-th value is re-measured directly as ``||r - q||_2``. The final
order is by that direct distance, ties broken by ascending reference id, so
results never depend on reference insertion order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Descriptor, DescriptorSet, RankedMatches, VPRMap
from .errors import DimensionMismatch, KTooLarge

# Relative slack on the expanded squared distance; far above float64 rounding
# of the expansion for any practical D.
_MARGIN = 1e-9


def l2_normalize(values: np.ndarray) -> np.ndarray:
    """Row-wise unit-norm scaling; all-zero rows are left unchanged."""
    values = np.asarray(values, dtype=np.float64)
    norms = np.linalg.norm(values, axis=-1, keepdims=True)
    return values / np.where(norms > 0, norms, 1.0)


@dataclass(frozen=True, eq=False)
class RetrievalIndex:
    map: VPRMap
    vectors: np.ndarray
    sq_norms: np.ndarray
    id_rank: np.ndarray
    normalized: bool = False

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


def build_index(vpr_map: VPRMap, l2_normalize_descriptors: bool = False) -> RetrievalIndex:
    vectors = vpr_map.descriptors.values
    if l2_normalize_descriptors:
        vectors = l2_normalize(vectors)
    vectors = np.ascontiguousarray(vectors, dtype=np.float64)
    vectors.setflags(write=False)
    sq_norms = np.einsum("ij,ij->i", vectors, vectors)
    sq_norms.setflags(write=False)
    order = sorted(range(len(vpr_map.ids)), key=vpr_map.ids.__getitem__)
    id_rank = np.empty(len(order), dtype=np.int64)
    id_rank[order] = np.arange(len(order))
    id_rank.setflags(write=False)
    return RetrievalIndex(vpr_map, vectors, sq_norms, id_rank, l2_normalize_descriptors)


def _check(index: RetrievalIndex, query_id: str, dim: int, k: int) -> None:
    if dim != index.dim:
        raise DimensionMismatch([(
            "dimension_mismatch", query_id, f"query D={dim}, map D={index.dim}")])
    if not 1 <= k <= len(index):
        raise KTooLarge(f"K={k} is outside [1, N={len(index)}]")


def _refine(index: RetrievalIndex, query_id: str, q: np.ndarray, approx_sq: np.ndarray,
            k: int) -> RankedMatches:
    if k < len(approx_sq):
        kth = np.partition(approx_sq, k - 1)[k - 1]
        slack = _MARGIN * (float(index.sq_norms.max()) + float(q @ q)) + 1e-300
        cand = np.flatnonzero(approx_sq <= kth + slack)
    else:
        cand = np.arange(len(approx_sq))
    diff = index.vectors[cand] - q
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    order = np.lexsort((index.id_rank[cand], dist))[:k]
    chosen = cand[order]
    ids = index.map.ids
    return RankedMatches(query_id, tuple(ids[i] for i in chosen), dist[order],
                         index.map.poses.coords[chosen])


def query_knn(index: RetrievalIndex, query: Descriptor, k: int) -> RankedMatches:
    """Return the K nearest references to ``query``, nearest first."""
    q = np.asarray(query.values, dtype=np.float64)
    _check(index, query.id, q.shape[0], k)
    if index.normalized:
        q = l2_normalize(q)
    approx = index.sq_norms - 2.0 * (index.vectors @ q) + q @ q
    return _refine(index, query.id, q, approx, k)


def batch_retrieve(index: RetrievalIndex, queries: DescriptorSet, k: int,
                   block_size: int = 256) -> list[RankedMatches]:
    """Retrieve for every query, in input order.

    Each result is identical to a standalone :func:`query_knn` call: the block
    product only selects candidates, final distances are measured directly.
    """
    if len(queries) == 0:
        return []
    _check(index, queries.ids[0], queries.values.shape[1], k)
    values = queries.values
    if index.normalized:
        values = l2_normalize(values)
    results = []
    for start in range(0, len(queries), block_size):
        block = values[start:start + block_size]
        approx = (index.sq_norms[None, :] - 2.0 * (block @ index.vectors.T)
                  + np.einsum("ij,ij->i", block, block)[:, None])
        for j in range(block.shape[0]):
            results.append(_refine(index, queries.ids[start + j], block[j], approx[j], k))
    return results
