"""Vector datasets: fvecs/ivecs I/O, synthetic clustered data, L2 distance."""

import logging
import math
import os
from dataclasses import dataclass, field

import numpy as np

from utils.rng import STREAM_GEN, stream

logger = logging.getLogger(__name__)


# =========================
# Errors
# =========================

class PathWeaveError(Exception):
    """Base class for every error raised on purpose by this project."""


class VecFormatError(PathWeaveError):
    """Malformed fvecs/ivecs file."""


# =========================
# Dataset
# =========================

@dataclass(frozen=True, eq=False)
class Dataset:
    """n x d float32 matrix (row-major) plus one global id per row."""

    data: np.ndarray
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise ValueError(f"dataset must be 2-D, got shape {data.shape}")
        n, d = data.shape
        if n < 1 or d < 1:
            raise ValueError(f"dataset needs n >= 1 and d >= 1, got n={n}, d={d}")
        bad = ~np.isfinite(data)
        if bad.any():
            row = int(np.flatnonzero(bad.any(axis=1))[0])
            raise ValueError(f"non-finite value in row {row}")

        if self.ids is None:
            ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.ascontiguousarray(self.ids, dtype=np.int64)
            if ids.shape != (n,):
                raise ValueError(f"ids shape {ids.shape} does not match n={n}")

        data.flags.writeable = False
        ids.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "ids", ids)

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def d(self):
        return self.data.shape[1]

    def __len__(self):
        return self.n

    def subset(self, rows):
        """Rows `rows` as a new Dataset that keeps their global ids."""
        rows = np.asarray(rows, dtype=np.int64)
        return type(self)(self.data[rows], self.ids[rows])


class QuerySet(Dataset):
    """A batch of queries; same layout as Dataset."""


# =========================
# Distances
# =========================

def l2_distance(a, b):
    a = np.asarray(a, dtype=np.float32)
    b = np.asarray(b, dtype=np.float32)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))


def squared_l2(query, rows):
    """Squared L2 from `query` (d,) to every row of `rows` (n, d), float32."""
    diff = rows - query
    return np.einsum("ij,ij->i", diff, diff)


# =========================
# fvecs / ivecs
# =========================

def _locate_framing_error(raw, d):
    record = 4 + 4 * d
    offset = 0
    while offset < len(raw):
        if len(raw) - offset < 4:
            return f"truncated header at byte {offset}"
        dim = int.from_bytes(raw[offset:offset + 4], "little", signed=True)
        if dim != d:
            return f"dimension {dim} (expected {d}) at byte {offset}"
        if len(raw) - offset < record:
            return f"truncated record at byte {offset}"
        offset += record
    return None


def _read_vecs(path, dtype):
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4:
        raise VecFormatError(f"{path}: truncated header at byte 0")

    d = int.from_bytes(raw[:4], "little", signed=True)
    if d <= 0:
        raise VecFormatError(f"{path}: invalid dimension {d} at byte 0")

    record = 4 + 4 * d
    n, remainder = divmod(len(raw), record)
    layout = np.dtype([("dim", "<i4"), ("vec", dtype, (d,))])
    rows = np.frombuffer(raw, dtype=layout, count=n)
    if remainder or (rows["dim"] != d).any():
        raise VecFormatError(f"{path}: {_locate_framing_error(raw, d)}")
    return rows["vec"].copy(), record


def _write_vecs(path, matrix, dtype):
    n, d = matrix.shape
    if n < 1 or d < 1:
        raise ValueError(f"refusing to write an empty matrix of shape {matrix.shape}")
    layout = np.dtype([("dim", "<i4"), ("vec", dtype, (d,))])
    rows = np.empty(n, dtype=layout)
    rows["dim"] = d
    rows["vec"] = matrix
    with open(path, "wb") as f:
        f.write(rows.tobytes())


def load_fvecs(path):
    vectors, record = _read_vecs(path, "<f4")
    bad = ~np.isfinite(vectors)
    if bad.any():
        row = int(np.flatnonzero(bad.any(axis=1))[0])
        raise VecFormatError(f"{path}: non-finite value in record at byte {row * record}")
    logger.debug("loaded %s: n=%d d=%d", path, *vectors.shape)
    return Dataset(vectors.astype(np.float32))


def save_fvecs(dataset, path):
    data = dataset.data if isinstance(dataset, Dataset) else np.asarray(dataset, dtype=np.float32)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("save_fvecs needs a dataset with n >= 1")
    _write_vecs(path, data, "<f4")


def load_ivecs(path):
    matrix, _ = _read_vecs(path, "<i4")
    return matrix.astype(np.int32)


def save_ivecs(matrix, path):
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise ValueError(f"ivecs payload must be 2-D, got shape {matrix.shape}")
    _write_vecs(path, matrix.astype(np.int32), "<i4")


def load_queries(path):
    dataset = load_fvecs(path)
    return QuerySet(dataset.data)


# =========================
# Synthetic data
# =========================

def gen_synthetic(n, d, n_clusters, spread, seed):
    """Gaussian blobs: centers uniform in [0,1]^d, points round-robin over clusters."""
    if d < 1 or n_clusters < 1 or n < n_clusters:
        raise ValueError(f"need n >= n_clusters >= 1 and d >= 1 (n={n}, d={d}, n_clusters={n_clusters})")
    if not spread > 0 or not math.isfinite(spread):
        raise ValueError(f"spread must be a positive finite number, got {spread}")

    rng = stream(seed, STREAM_GEN)
    centers = rng.random((n_clusters, d))
    labels = np.arange(n) % n_clusters
    points = centers[labels] + rng.normal(0.0, spread, size=(n, d))
    return Dataset(points.astype(np.float32))


def gen_synthetic_split(n, n_queries, d, n_clusters, spread, seed):
    """Draw n + n_queries points from one distribution; hold out a random query set."""
    if n_queries < 1:
        raise ValueError(f"n_queries must be >= 1, got {n_queries}")
    full = gen_synthetic(n + n_queries, d, n_clusters, spread, seed)
    order = stream(seed, STREAM_GEN, 1).permutation(full.n)
    base = Dataset(full.data[np.sort(order[:n])])
    queries = QuerySet(full.data[np.sort(order[n:])])
    return base, queries


def ensure_parent(path):
    parent = os.path.dirname(os.fspath(path))
    if parent:
        os.makedirs(parent, exist_ok=True)
