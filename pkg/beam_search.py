"""Per-query graph search kernel.

A size-l priority queue and a size-m candidate buffer are refined until an
iteration admits nothing new into the queue or the iteration budget runs out:

    1. queue <- l dummies (distance +inf)
    2. buffer <- seeds, then distinct random nodes up to m
    3. score unvisited buffer entries, merge them into the queue
    4. expand the best r unexpanded queue entries into the buffer

Distances are squared internally and square-rooted only in SearchResult.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from dgs import in_cooldown, query_direction_bits, random_discard, select_neighbors
from utils.rng import STREAM_SEARCH, stream
from vecdata import PathWeaveError, squared_l2

logger = logging.getLogger(__name__)

DUMMY = -1
_DUMMY_KEY = np.iinfo(np.int64).max

MAIN_PHASE = 0
GHOST_PHASE = 1


class SearchError(PathWeaveError):
    pass


# =========================
# Parameters
# =========================

@dataclass(frozen=True)
class DgsParams:
    discard_ratio: float = 0.5
    cooldown_ratio: float = 0.3
    selection: str = "direction"  # or "random"


@dataclass(frozen=True)
class GhostParams:
    enabled: bool = True
    ghost_max_iter: int = 8
    seeds: int = 1  # ghost results handed to the main stage


@dataclass(frozen=True)
class SearchParams:
    k: int = 10
    l: int = 64
    m: int = 64
    r: int = 8
    max_iter: int = 48
    seed: int = 0
    dgs: DgsParams | None = None
    ghost: GhostParams | None = None
    visited_capacity: int | None = None
    visit_log: bool = False

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ValueError("invalid search parameters: " + "; ".join(problems))

    def problems(self):
        out = []
        if self.k < 1:
            out.append(f"k: must be >= 1, got {self.k}")
        if self.k > self.l:
            out.append(f"k: must be <= l ({self.l}), got {self.k}")
        if not 1 <= self.r <= self.l:
            out.append(f"r: must be in [1, l={self.l}], got {self.r}")
        if self.m < 1:
            out.append(f"m: must be >= 1, got {self.m}")
        if self.max_iter < 1:
            out.append(f"max_iter: must be >= 1, got {self.max_iter}")
        if self.seed < 0:
            out.append(f"seed: must be >= 0, got {self.seed}")
        if self.dgs is not None:
            if not 0 <= self.dgs.discard_ratio < 1:
                out.append(f"discard_ratio: must be in [0, 1), got {self.dgs.discard_ratio}")
            if not 0 <= self.dgs.cooldown_ratio <= 1:
                out.append(f"cooldown_ratio: must be in [0, 1], got {self.dgs.cooldown_ratio}")
            if self.dgs.selection not in ("direction", "random"):
                out.append(f"selection: must be 'direction' or 'random', got {self.dgs.selection!r}")
        if self.ghost is not None:
            if self.ghost.ghost_max_iter < 1:
                out.append(f"ghost_max_iter: must be >= 1, got {self.ghost.ghost_max_iter}")
            if not 1 <= self.ghost.seeds <= self.l:
                out.append(f"ghost_seeds: must be in [1, l={self.l}], got {self.ghost.seeds}")
        if self.visited_capacity is not None and self.visited_capacity < 1:
            out.append(f"visited_capacity: must be >= 1, got {self.visited_capacity}")
        return out

    def with_budget(self, max_iter):
        return replace(self, max_iter=max_iter)


# =========================
# Search context and state
# =========================

@dataclass(frozen=True, eq=False)
class SearchContext:
    """What one search reads: vectors, adjacency, row labels, optional directions."""

    vectors: np.ndarray
    adj: np.ndarray
    labels: np.ndarray
    directions: np.ndarray | None = None

    @property
    def n(self):
        return self.vectors.shape[0]

    @property
    def d(self):
        return self.vectors.shape[1]

    @property
    def j(self):
        return self.adj.shape[1]


@dataclass
class Counters:
    iterations: int = 0
    distance_computations: int = 0
    total_visits: int = 0
    nodes_expanded: int = 0
    dgs_skipped: int = 0
    inserted: int = 0

    def merge(self, other):
        return Counters(**{
            name: getattr(self, name) + getattr(other, name)
            for name in self.__dataclass_fields__
        })

    def as_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__}


@dataclass
class SearchState:
    ids: np.ndarray
    dists: np.ndarray
    expanded: np.ndarray
    visited: np.ndarray
    counters: Counters = field(default_factory=Counters)
    visit_log: list | None = None
    n_visited: int = 0

    @classmethod
    def empty(cls, l, n, log_visits=False):
        return cls(
            ids=np.full(l, DUMMY, dtype=np.int64),
            dists=np.full(l, np.inf, dtype=np.float32),
            expanded=np.zeros(l, dtype=bool),
            visited=np.zeros(n, dtype=bool),
            visit_log=[] if log_visits else None,
        )

    @property
    def l(self):
        return len(self.ids)

    def mark_visited(self, nodes, capacity=None):
        if capacity is not None and self.n_visited + len(nodes) > capacity:
            self.visited[:] = False
            self.n_visited = 0
        self.visited[nodes] = True
        self.n_visited += len(nodes)
        if self.visit_log is not None:
            self.visit_log.append(nodes.copy())

    def mark_expanded(self, nodes):
        self.expanded |= np.isin(self.ids, nodes)

    def filled(self):
        return self.ids != DUMMY


@dataclass(frozen=True, eq=False)
class SearchResult:
    query_id: int
    ids: np.ndarray
    distances: np.ndarray
    local_ids: np.ndarray
    converged: bool
    counters: Counters
    visited: np.ndarray | None = None
    survivors: np.ndarray | None = None

    def __len__(self):
        return len(self.ids)


# =========================
# Queue operations
# =========================

def merge_and_sort(state, cand_ids, cand_dists):
    """Merge scored candidates into the queue; returns how many new ids made the top-l."""
    cand_ids = np.asarray(cand_ids, dtype=np.int64)
    cand_dists = np.asarray(cand_dists, dtype=np.float32)
    if cand_ids.size == 0:
        return 0

    _, first = np.unique(cand_ids, return_index=True)
    first.sort()
    cand_ids, cand_dists = cand_ids[first], cand_dists[first]
    fresh = ~np.isin(cand_ids, state.ids)
    cand_ids, cand_dists = cand_ids[fresh], cand_dists[fresh]
    if cand_ids.size == 0:
        return 0

    n_old = state.l
    ids = np.concatenate([state.ids, cand_ids])
    dists = np.concatenate([state.dists, cand_dists])
    expanded = np.concatenate([state.expanded, np.zeros(cand_ids.size, dtype=bool)])
    sort_ids = np.where(ids == DUMMY, _DUMMY_KEY, ids)
    order = np.lexsort((sort_ids, dists))[:state.l]

    state.ids = ids[order]
    state.dists = dists[order]
    state.expanded = expanded[order]
    return int(np.count_nonzero(order >= n_old))


def select_parents(state, r):
    """Best-ranked r queue entries not yet expanded."""
    open_slots = np.flatnonzero(state.filled() & ~state.expanded)
    return state.ids[open_slots[:r]]


def initial_candidates(n, m, seeds, rng):
    """Seeds first, then distinct random nodes until the buffer holds min(m, n)."""
    chosen = list(dict.fromkeys(int(s) for s in seeds))[:m]
    need = min(m, n) - len(chosen)
    if need > 0:
        taken = set(chosen)
        draw = rng.choice(n, size=min(n, need + len(chosen)), replace=False)
        chosen.extend(int(v) for v in draw if int(v) not in taken)
        chosen = chosen[:min(m, n)]
    return np.asarray(chosen, dtype=np.int64)


def _fresh(state, candidates, m):
    """Dedup in order, drop visited nodes, keep the first m."""
    if candidates.size == 0:
        return candidates
    _, first = np.unique(candidates, return_index=True)
    first.sort()
    candidates = candidates[first]
    return candidates[~state.visited[candidates]][:m]


def _expand(state, parents, query, ctx, params, rng, iteration, budget):
    counters = state.counters
    use_dgs = params.dgs is not None and not in_cooldown(iteration, budget, params.dgs.cooldown_ratio)
    if use_dgs and params.dgs.selection == "direction" and ctx.directions is None:
        raise SearchError("direction-guided selection needs a direction table")

    batches = []
    for parent in parents:
        row = ctx.adj[parent]
        if use_dgs:
            if params.dgs.selection == "direction":
                bits = query_direction_bits(query, ctx.vectors[parent])
                slots = select_neighbors(parent, bits, ctx.directions, ctx.d, params.dgs.discard_ratio)
            else:
                slots = random_discard(ctx.j, params.dgs.discard_ratio, rng)
            counters.dgs_skipped += ctx.j - len(slots)
            row = row[slots]
        counters.total_visits += len(row)
        batches.append(row)

    state.mark_expanded(parents)
    counters.nodes_expanded += len(parents)
    if not batches:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(batches).astype(np.int64)


# =========================
# Search
# =========================

def search(query, ctx, params, seeds=(), *, query_id=0, stage=0, phase=MAIN_PHASE, max_iter=None):
    query = np.asarray(query, dtype=np.float32)
    if ctx.n == 0:
        raise SearchError("cannot search an empty graph")
    if query.shape != (ctx.d,):
        raise SearchError(f"query has shape {query.shape}, graph vectors have d={ctx.d}")
    seeds = np.asarray(list(seeds), dtype=np.int64)
    if seeds.size and (seeds.min() < 0 or seeds.max() >= ctx.n):
        raise SearchError(f"seed ids must be in [0, {ctx.n}), got {seeds.tolist()}")

    budget = max_iter or params.max_iter
    rng = stream(params.seed, STREAM_SEARCH, query_id, stage, phase)
    state = SearchState.empty(params.l, ctx.n, log_visits=params.visit_log)
    counters = state.counters
    candidates = initial_candidates(ctx.n, params.m, seeds, rng)

    converged = False
    while True:
        fresh = _fresh(state, candidates, params.m)
        dists = squared_l2(query, ctx.vectors[fresh])
        state.mark_visited(fresh, params.visited_capacity)
        counters.distance_computations += len(fresh)
        inserted = merge_and_sort(state, fresh, dists)
        counters.inserted += inserted
        counters.iterations += 1

        if counters.iterations > 1 and inserted == 0:
            converged = True
            break
        parents = select_parents(state, params.r)
        if parents.size == 0:
            converged = True
            break
        if counters.iterations >= budget:
            break
        candidates = _expand(state, parents, query, ctx, params, rng, counters.iterations - 1, budget)

    return _result(state, ctx, params.k, query_id, converged)


def _result(state, ctx, k, query_id, converged):
    filled = np.flatnonzero(state.filled())
    top = state.ids[filled[:k]]
    visited = survivors = None
    if state.visit_log is not None:
        logged = np.concatenate(state.visit_log) if state.visit_log else np.empty(0, dtype=np.int64)
        visited = ctx.labels[logged]
        survivors = ctx.labels[state.ids[filled]]
    logger.debug("query %d: %d iterations, %d distances, converged=%s",
                 query_id, state.counters.iterations, state.counters.distance_computations, converged)
    return SearchResult(
        query_id=query_id,
        ids=ctx.labels[top].astype(np.int64),
        distances=np.sqrt(state.dists[filled[:k]]),
        local_ids=top,
        converged=converged,
        counters=state.counters,
        visited=visited,
        survivors=survivors,
    )
