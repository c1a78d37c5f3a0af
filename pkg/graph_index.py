"""Precomputed search structures and their on-disk container.

Building an index partitions the dataset into shards, then per shard builds
the exact kNN proximity graph, the inter-shard table to the next shard in the
ring, a ghost index over a random sample, and the packed direction table.

Container layout (all integers little-endian):

    header   magic "PWIX" | u32 version | u32 d | u32 N | u32 flags (0)
    table    N x (u32 shard | u64 offset | u64 length | u32 crc32c)
    u32      crc32c of header + table
    sections one per shard, at the offsets named in the table:
             10 x u32: n_local, j, padded_rows, has_inter, inter_target,
                       n_ghost, j_g, ghost_padded_rows, has_dirs, W
             i64[n_local]          global ids
             f32[n_local * d]      vectors
             i32[n_local * j]      adjacency
             i32[n_local]          inter-shard map          (if has_inter)
             i32[n_ghost]          ghost ids
             i32[n_ghost * j_g]    ghost adjacency
             u32[n_local * j * W]  direction words          (if has_dirs)
"""

import bisect
import logging
import math
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import crc32c
import numpy as np

from beam_search import SearchContext, SearchParams, search
from dgs import n_words, pack_sign_bits
from utils.rng import STREAM_GHOST, STREAM_PARTITION, stream
from vecdata import Dataset, PathWeaveError

logger = logging.getLogger(__name__)

MAGIC = b"PWIX"
FORMAT_VERSION = 1

_HEADER = struct.Struct("<4sIIII")
_TABLE_ENTRY = struct.Struct("<IQQI")
_CRC = struct.Struct("<I")
_SHARD_HEADER = struct.Struct("<10I")

# candidates re-ranked with exact differences after the matmul pre-filter
_RERANK_SLACK = 8
_BLOCK_ROWS = 1024


class IndexFormatError(PathWeaveError):
    pass


# =========================
# Types
# =========================

@dataclass(frozen=True, eq=False)
class ProximityGraph:
    adj: np.ndarray
    padded_rows: int = 0

    @property
    def n_local(self):
        return self.adj.shape[0]

    @property
    def j(self):
        return self.adj.shape[1]

    @classmethod
    def from_rows(cls, rows, j):
        """Fixed-width rows; short rows repeat their last neighbor."""
        adj = np.empty((len(rows), j), dtype=np.int32)
        padded = 0
        for u, row in enumerate(rows):
            if len(row) < j:
                padded += 1
                row = list(row) + [row[-1]] * (j - len(row))
            adj[u] = row[:j]
        return cls(adj, padded)


@dataclass(frozen=True, eq=False)
class ShardSet:
    shard_of: np.ndarray
    local_of: np.ndarray
    shards: tuple

    @property
    def n_shards(self):
        return len(self.shards)

    def locate(self, global_id):
        return int(self.shard_of[global_id]), int(self.local_of[global_id])

    @classmethod
    def from_shards(cls, shards):
        n = sum(shard.n for shard in shards)
        shard_of = np.full(n, -1, dtype=np.int32)
        local_of = np.full(n, -1, dtype=np.int32)
        for s, shard in enumerate(shards):
            if shard.ids.min() < 0 or shard.ids.max() >= n or (shard_of[shard.ids] != -1).any():
                raise ValueError(f"shard {s} global ids do not partition 0..{n - 1}")
            shard_of[shard.ids] = s
            local_of[shard.ids] = np.arange(shard.n, dtype=np.int32)
        if (shard_of == -1).any():
            raise ValueError("shards do not cover every global id")
        return cls(shard_of, local_of, tuple(shards))


@dataclass(frozen=True, eq=False)
class InterShardTable:
    source: int
    target: int
    map: np.ndarray


@dataclass(frozen=True, eq=False)
class GhostIndex:
    ghost_ids: np.ndarray
    graph: ProximityGraph


@dataclass(frozen=True, eq=False)
class DirectionTable:
    words: np.ndarray
    d: int

    @property
    def n_words(self):
        return self.words.shape[2]


@dataclass(eq=False)
class ShardIndex:
    shard_id: int
    dataset: Dataset
    graph: ProximityGraph
    inter_shard: InterShardTable | None = None
    ghost: GhostIndex | None = None
    directions: DirectionTable | None = None

    @property
    def context(self):
        return SearchContext(
            vectors=self.dataset.data,
            adj=self.graph.adj,
            labels=self.dataset.ids,
            directions=None if self.directions is None else self.directions.words,
        )

    @cached_property
    def ghost_context(self):
        """Search view of the ghost graph; labels are parent-shard local ids."""
        if self.ghost is None:
            return None
        ghost_ids = self.ghost.ghost_ids
        return SearchContext(
            vectors=np.ascontiguousarray(self.dataset.data[ghost_ids]),
            adj=self.ghost.graph.adj,
            labels=ghost_ids.astype(np.int64),
        )


@dataclass(eq=False)
class PathWeaveIndex:
    shard_set: ShardSet
    shards: list
    build_times: dict = field(default_factory=dict)

    @property
    def n_shards(self):
        return len(self.shards)

    @property
    def d(self):
        return self.shards[0].dataset.d


# =========================
# Brute-force neighbor search
# =========================

def _nearest(base, points, k, exclude=None, threads=1):
    """k nearest rows of `base` for every row of `points`, ranked by (distance, row).

    A blocked matmul pre-selects k + slack candidates, which are then re-scored
    with explicit differences so ranking matches squared_l2 exactly. The matmul
    runs on copies centered on the base mean, so data far from the origin keeps
    its neighbor order in the expanded form |x|^2 + |y|^2 - 2x.y.
    """
    center = base.mean(axis=0, dtype=np.float64).astype(np.float32)
    base_c = base - center
    base_sq = np.einsum("ij,ij->i", base_c, base_c)
    n_cols = base.shape[0]
    available = n_cols - (1 if exclude is not None else 0)
    width = min(k + _RERANK_SLACK, available)

    def block(start):
        stop = min(start + _BLOCK_ROWS, points.shape[0])
        chunk = points[start:stop]
        chunk_c = chunk - center
        d2 = np.einsum("ij,ij->i", chunk_c, chunk_c)[:, None] + base_sq[None, :] - 2.0 * (chunk_c @ base_c.T)
        if exclude is not None:
            d2[np.arange(stop - start), exclude[start:stop]] = np.inf
        if width < n_cols:
            cand = np.argpartition(d2, width - 1, axis=1)[:, :width]
        else:
            cand = np.argsort(d2, axis=1, kind="stable")[:, :width]
        diff = base[cand] - chunk[:, None, :]
        exact = np.einsum("ijk,ijk->ij", diff, diff)
        order = np.lexsort((cand, exact), axis=-1)[:, :k]
        return np.take_along_axis(cand, order, 1), np.take_along_axis(exact, order, 1)

    starts = range(0, points.shape[0], _BLOCK_ROWS)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(block, starts))
    else:
        parts = [block(s) for s in starts]
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def _augment_reverse_edges(nbrs, sq):
    """For each kNN edge u->v, put u into v's row if u beats v's farthest neighbor."""
    rows = [list(zip(dists, ids)) for dists, ids in zip(sq.tolist(), nbrs.tolist())]
    members = [set(ids) for ids in nbrs.tolist()]
    added = 0
    for u, (dists, ids) in enumerate(zip(sq.tolist(), nbrs.tolist())):
        for duv, v in zip(dists, ids):
            row = rows[v]
            if u in members[v] or duv >= row[-1][0]:
                continue
            _, dropped = row.pop()
            members[v].discard(dropped)
            bisect.insort(row, (duv, u))
            members[v].add(u)
            added += 1
    logger.debug("reverse-edge augmentation replaced %d edges", added)
    return [[v for _, v in row] for row in rows]


# =========================
# Builders
# =========================

def partition(dataset, n_shards, seed):
    if n_shards < 1:
        raise ValueError(f"shard count must be >= 1, got {n_shards}")
    if n_shards > dataset.n:
        raise ValueError(f"cannot split {dataset.n} points into {n_shards} shards")
    perm = stream(seed, STREAM_PARTITION).permutation(dataset.n)
    shards = [dataset.subset(np.sort(perm[s::n_shards])) for s in range(n_shards)]
    return ShardSet.from_shards(shards)


def build_knn_graph(dataset, j, threads=1):
    n = dataset.n
    if not 1 <= j < n:
        raise ValueError(f"out-degree j={j} must be in [1, n_local={n})")
    nbrs, sq = _nearest(dataset.data, dataset.data, j, exclude=np.arange(n), threads=threads)
    return ProximityGraph.from_rows(_augment_reverse_edges(nbrs, sq), j)


def build_inter_shard_table(shard_i, shard_target, source=0, target=None, threads=1):
    if shard_target.n == 0:
        raise ValueError("target shard is empty")
    if shard_i.d != shard_target.d:
        raise ValueError(f"shard dimensions differ: {shard_i.d} vs {shard_target.d}")
    nbrs, _ = _nearest(shard_target.data, shard_i.data, 1, threads=threads)
    target = source + 1 if target is None else target
    return InterShardTable(source, target, nbrs[:, 0].astype(np.int32))


def build_inter_shard_table_by_search(shard_i, target_index, params, source=0, threads=1):
    """Approximate table: every source node searches the target graph, top-1 kept."""
    params = replace(params, k=1, dgs=None, ghost=None, visit_log=False)
    ctx = target_index.context

    def top1(u):
        result = search(shard_i.data[u], ctx, params, query_id=u, stage=source)
        return int(result.local_ids[0])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            mapped = list(pool.map(top1, range(shard_i.n)))
    else:
        mapped = [top1(u) for u in range(shard_i.n)]
    return InterShardTable(source, target_index.shard_id, np.asarray(mapped, dtype=np.int32))


def ghost_count(n_local, ratio):
    return math.ceil(ratio * n_local - 1e-9)


def build_ghost_index(shard, ratio, j_g, seed, shard_id=0, threads=1):
    if not 0 < ratio <= 1:
        raise ValueError(f"ghost sampling ratio must be in (0, 1], got {ratio}")
    size = ghost_count(shard.n, ratio)
    if size <= j_g:
        raise ValueError(f"ghost sample of {size} nodes is too small for out-degree {j_g}")
    rng = stream(seed, STREAM_GHOST, shard_id)
    ghost_ids = np.sort(rng.choice(shard.n, size=size, replace=False)).astype(np.int32)
    graph = build_knn_graph(Dataset(shard.data[ghost_ids]), j_g, threads=threads)
    return GhostIndex(ghost_ids, graph)


def build_direction_table(dataset, graph, block=4096):
    if graph.n_local != dataset.n:
        raise ValueError(f"graph has {graph.n_local} nodes, dataset has {dataset.n}")
    words = np.empty((dataset.n, graph.j, n_words(dataset.d)), dtype=np.uint32)
    data = dataset.data
    for start in range(0, dataset.n, block):
        stop = min(start + block, dataset.n)
        diff = data[graph.adj[start:stop]] - data[start:stop, None, :]
        words[start:stop] = pack_sign_bits(diff >= 0)
    return DirectionTable(words, dataset.d)


def default_ghost_degree(j):
    return min(j, 16)


def build_index(
    dataset,
    n_shards,
    degree,
    *,
    seed=0,
    ghost_ratio=0.01,
    ghost_degree=None,
    with_ghost=True,
    with_directions=True,
    inter_shard_method="exact",
    search_params=None,
    threads=1,
):
    times = {}

    def phase(name, started):
        times[name] = times.get(name, 0.0) + time.perf_counter() - started

    started = time.perf_counter()
    shard_set = partition(dataset, n_shards, seed)
    phase("partition", started)
    logger.info("partitioned %d points into %d shards", dataset.n, n_shards)

    started = time.perf_counter()
    shards = [
        ShardIndex(s, data, build_knn_graph(data, degree, threads=threads))
        for s, data in enumerate(shard_set.shards)
    ]
    phase("base_graph", started)
    logger.info("built %d proximity graphs (j=%d) in %.2fs", n_shards, degree, times["base_graph"])

    started = time.perf_counter()
    if n_shards > 1:
        for s, shard in enumerate(shards):
            target = shards[(s + 1) % n_shards]
            if inter_shard_method == "exact":
                shard.inter_shard = build_inter_shard_table(
                    shard.dataset, target.dataset, source=s, target=target.shard_id, threads=threads
                )
            elif inter_shard_method == "search":
                shard.inter_shard = build_inter_shard_table_by_search(
                    shard.dataset, target, search_params or SearchParams(), source=s, threads=threads
                )
            else:
                raise ValueError(f"unknown inter-shard method {inter_shard_method!r}")
    phase("inter_shard", started)

    started = time.perf_counter()
    if with_ghost:
        j_g = ghost_degree or default_ghost_degree(degree)
        for shard in shards:
            shard.ghost = build_ghost_index(shard.dataset, ghost_ratio, j_g, seed, shard.shard_id, threads)
    phase("ghost", started)

    started = time.perf_counter()
    if with_directions:
        for shard in shards:
            shard.directions = build_direction_table(shard.dataset, shard.graph)
    phase("direction", started)

    for name, seconds in times.items():
        logger.info("build phase %-11s %.3fs", name, seconds)
    return PathWeaveIndex(shard_set, shards, times)


# =========================
# Container
# =========================

def _shard_bytes(shard):
    graph, ghost, dirs, inter = shard.graph, shard.ghost, shard.directions, shard.inter_shard
    header = _SHARD_HEADER.pack(
        shard.dataset.n,
        graph.j,
        graph.padded_rows,
        inter is not None,
        inter.target if inter is not None else 0,
        len(ghost.ghost_ids) if ghost is not None else 0,
        ghost.graph.j if ghost is not None else 0,
        ghost.graph.padded_rows if ghost is not None else 0,
        dirs is not None,
        dirs.n_words if dirs is not None else 0,
    )
    parts = [
        header,
        shard.dataset.ids.astype("<i8").tobytes(),
        shard.dataset.data.astype("<f4").tobytes(),
        graph.adj.astype("<i4").tobytes(),
    ]
    if inter is not None:
        parts.append(inter.map.astype("<i4").tobytes())
    if ghost is not None:
        parts.append(ghost.ghost_ids.astype("<i4").tobytes())
        parts.append(ghost.graph.adj.astype("<i4").tobytes())
    if dirs is not None:
        parts.append(dirs.words.astype("<u4").tobytes())
    return b"".join(parts)


def index_to_bytes(index):
    sections = [_shard_bytes(shard) for shard in index.shards]
    offset = _HEADER.size + _TABLE_ENTRY.size * len(sections) + _CRC.size
    head = [_HEADER.pack(MAGIC, FORMAT_VERSION, index.d, len(sections), 0)]
    for s, blob in enumerate(sections):
        head.append(_TABLE_ENTRY.pack(s, offset, len(blob), crc32c.crc32c(blob)))
        offset += len(blob)
    head = b"".join(head)
    return head + _CRC.pack(crc32c.crc32c(head)) + b"".join(sections)


def serialize_index(index, path):
    blob = index_to_bytes(index)
    with open(path, "wb") as f:
        f.write(blob)
    logger.info("wrote index %s (%d bytes, crc32c %08x)", path, len(blob), crc32c.crc32c(blob))


class _Reader:
    def __init__(self, blob, shard):
        self.blob = blob
        self.pos = 0
        self.shard = shard

    def array(self, dtype, count):
        dtype = np.dtype(dtype)
        end = self.pos + dtype.itemsize * count
        if end > len(self.blob):
            raise IndexFormatError(f"shard {self.shard}: section truncated at byte {self.pos}")
        out = np.frombuffer(self.blob, dtype=dtype, count=count, offset=self.pos).copy()
        self.pos = end
        return out


def _parse_shard(blob, s, d):
    if len(blob) < _SHARD_HEADER.size:
        raise IndexFormatError(f"shard {s}: section shorter than its header")
    (n_local, j, padded, has_inter, inter_target,
     n_ghost, j_g, ghost_padded, has_dirs, w) = _SHARD_HEADER.unpack_from(blob, 0)
    reader = _Reader(blob, s)
    reader.pos = _SHARD_HEADER.size

    ids = reader.array("<i8", n_local)
    data = reader.array("<f4", n_local * d).reshape(n_local, d)
    adj = reader.array("<i4", n_local * j).reshape(n_local, j)
    shard = ShardIndex(s, Dataset(data, ids), ProximityGraph(adj, padded))
    if has_inter:
        shard.inter_shard = InterShardTable(s, inter_target, reader.array("<i4", n_local))
    if n_ghost:
        ghost_ids = reader.array("<i4", n_ghost)
        ghost_adj = reader.array("<i4", n_ghost * j_g).reshape(n_ghost, j_g)
        shard.ghost = GhostIndex(ghost_ids, ProximityGraph(ghost_adj, ghost_padded))
    if has_dirs:
        words = reader.array("<u4", n_local * j * w).reshape(n_local, j, w)
        shard.directions = DirectionTable(words.astype(np.uint32), d)
    if reader.pos != len(blob):
        raise IndexFormatError(f"shard {s}: {len(blob) - reader.pos} trailing bytes")
    return shard


def index_from_bytes(blob):
    if len(blob) < _HEADER.size:
        raise IndexFormatError("file too short for an index header")
    magic, version, d, n_shards, _ = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise IndexFormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise IndexFormatError(f"unsupported index format version {version} (this build reads {FORMAT_VERSION})")

    table_end = _HEADER.size + _TABLE_ENTRY.size * n_shards
    if len(blob) < table_end + _CRC.size:
        raise IndexFormatError("file truncated inside the section table")
    (stored,) = _CRC.unpack_from(blob, table_end)
    if crc32c.crc32c(blob[:table_end]) != stored:
        raise IndexFormatError("header checksum mismatch")

    shards = []
    for s in range(n_shards):
        shard_no, offset, length, crc = _TABLE_ENTRY.unpack_from(blob, _HEADER.size + s * _TABLE_ENTRY.size)
        if shard_no != s:
            raise IndexFormatError(f"section table entry {s} names shard {shard_no}")
        if offset + length > len(blob):
            raise IndexFormatError(f"shard {s}: section truncated ({offset + length} > {len(blob)} bytes)")
        section = blob[offset:offset + length]
        if crc32c.crc32c(section) != crc:
            raise IndexFormatError(f"shard {s}: checksum mismatch")
        shards.append(_parse_shard(section, s, d))

    return PathWeaveIndex(ShardSet.from_shards([shard.dataset for shard in shards]), shards)


def deserialize_index(path):
    with open(path, "rb") as f:
        blob = f.read()
    index = index_from_bytes(blob)
    logger.info("loaded index %s: %d shards, d=%d", path, index.n_shards, index.d)
    return index


def file_checksum(path):
    with open(path, "rb") as f:
        return f"{crc32c.crc32c(f.read()):08x}"
