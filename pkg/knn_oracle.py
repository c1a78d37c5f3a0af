"""Exact k-nearest-neighbor ground truth and recall@k."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from vecdata import Dataset, load_fvecs, load_ivecs, save_fvecs, save_ivecs, squared_l2

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NeighborList:
    """k (id, distance) pairs, ascending by (distance, id)."""

    query_id: int
    ids: np.ndarray
    distances: np.ndarray

    def __len__(self):
        return len(self.ids)

    def head(self, k):
        if k > len(self):
            raise ValueError(f"list has {len(self)} entries, need {k}")
        return NeighborList(self.query_id, self.ids[:k], self.distances[:k])


def top_k_by_distance(ids, sq_dists, k):
    """Positions of the k smallest (distance, id) pairs, in order."""
    ids = np.asarray(ids)
    sq_dists = np.asarray(sq_dists)
    if k < len(sq_dists):
        kth = np.partition(sq_dists, k - 1)[k - 1]
        pool = np.flatnonzero(sq_dists <= kth)
    else:
        pool = np.arange(len(sq_dists))
    order = pool[np.lexsort((ids[pool], sq_dists[pool]))]
    return order[:k]


def exact_knn(dataset, query, k, query_id=0):
    if not 1 <= k <= dataset.n:
        raise ValueError(f"k must be in [1, {dataset.n}], got {k}")
    query = np.asarray(query, dtype=np.float32)
    if query.shape != (dataset.d,):
        raise ValueError(f"query has shape {query.shape}, dataset has d={dataset.d}")

    sq = squared_l2(query, dataset.data)
    order = top_k_by_distance(dataset.ids, sq, k)
    return NeighborList(query_id, dataset.ids[order].copy(), np.sqrt(sq[order]))


def exact_knn_batch(dataset, queries, k, threads=1):
    """Ground truth for every query; query ids are row positions."""
    def one(i):
        return exact_knn(dataset, queries.data[i], k, query_id=i)

    if threads <= 1:
        return [one(i) for i in range(queries.n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(queries.n)))


def recall_at_k(truth, result, k):
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if len(truth) < k or len(result) < k:
        raise ValueError(f"recall@{k} needs k entries, got truth={len(truth)} result={len(result)}")
    hits = np.intersect1d(truth.ids[:k], result.ids[:k]).size
    return hits / k


def mean_recall(truths, results, k):
    if len(truths) != len(results):
        raise ValueError(f"{len(truths)} truth lists but {len(results)} results")
    if not truths:
        return 0.0
    return float(np.mean([recall_at_k(t, r, k) for t, r in zip(truths, results)]))


# =========================
# Persistence (ivecs ids + fvecs distances)
# =========================

def save_neighbor_lists(lists, ids_path, dists_path):
    if not lists:
        raise ValueError("no neighbor lists to save")
    k = len(lists[0])
    if any(len(lst) != k for lst in lists):
        raise ValueError("all neighbor lists must have the same length")
    save_ivecs(np.stack([lst.ids for lst in lists]), ids_path)
    save_fvecs(Dataset(np.stack([lst.distances for lst in lists])), dists_path)


def load_neighbor_lists(ids_path, dists_path):
    ids = load_ivecs(ids_path)
    dists = load_fvecs(dists_path).data
    if ids.shape != dists.shape:
        raise ValueError(f"id file shape {ids.shape} does not match distance file {dists.shape}")
    return [
        NeighborList(i, ids[i].astype(np.int64), dists[i].copy())
        for i in range(ids.shape[0])
    ]
