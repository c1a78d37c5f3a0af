"""Multi-shard search.

Queries are cut into N chunks and chunk c meets shard (c + s) % N at stage s,
so every (chunk, shard) pair happens exactly once. In baseline mode each of
those searches starts from random seeds. In pipelined mode the worker that
finishes a stage maps its local top result through its inter-shard table and
forwards the id (4 bytes per query) to the next worker in the ring, where it
seeds the next stage. Per-shard top-k lists are reduced at the end.
"""

import logging
import queue
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from beam_search import GHOST_PHASE, Counters, SearchError, search
from knn_oracle import NeighborList
from utils.rng import STREAM_VISIT_SAMPLE, stream
from vecdata import Dataset

logger = logging.getLogger(__name__)

ID_BYTES = 4
_POLL_SECONDS = 0.05


@dataclass(frozen=True)
class PipelineOptions:
    forward_count: int = 1
    seed_mode: str = "random_fill"  # or "neighbors"
    stage_budgets: tuple | None = None
    threads: int = 1
    visit_log_rate: float = 0.0


@dataclass(frozen=True, eq=False)
class StageMessage:
    stage: int
    chunk: int
    entries: np.ndarray | None = None

    @property
    def nbytes(self):
        return 0 if self.entries is None else int(self.entries.size) * ID_BYTES


@dataclass(eq=False)
class StageStats:
    stage: int
    iterations: np.ndarray
    ghost_iterations: np.ndarray
    counters: Counters
    comm_bytes: int = 0

    @property
    def iterations_mean(self):
        return float(self.iterations.mean()) if self.iterations.size else 0.0

    @property
    def ghost_iterations_mean(self):
        return float(self.ghost_iterations.mean()) if self.ghost_iterations.size else 0.0


@dataclass(eq=False)
class PipelineResult:
    mode: str
    n_shards: int
    k: int
    chunks: list
    shard_results: list
    ghost_results: dict
    final: list
    stages: list
    link_bytes: list
    message_log: list = field(default_factory=list)

    @property
    def comm_bytes(self):
        return sum(self.link_bytes)

    def iterations_per_query(self):
        """Mean ghost plus main iterations a query spent across all stages."""
        n_queries = len(self.final)
        if not n_queries:
            return 0.0
        spent = sum(int(s.iterations.sum()) + int(s.ghost_iterations.sum()) for s in self.stages)
        return spent / n_queries

    def totals(self):
        total = Counters()
        for stats in self.stages:
            total = total.merge(stats.counters)
        return total


# =========================
# Building blocks
# =========================

def reduce(lists, k, query_id=0):
    """Best k of the union of per-shard lists by (distance, id)."""
    lists = [lst for lst in lists if len(lst)]
    if not lists:
        raise SearchError("nothing to reduce: every shard list is empty")
    ids = np.concatenate([lst.ids for lst in lists]).astype(np.int64)
    dists = np.concatenate([lst.distances for lst in lists]).astype(np.float32)
    order = np.lexsort((ids, dists))[:k]
    return NeighborList(query_id, ids[order], dists[order])


def ghost_params(params):
    ghost = params.ghost
    if ghost is None:
        return replace(params, k=1, dgs=None, visit_log=False)
    return replace(params, k=ghost.seeds, dgs=None, max_iter=ghost.ghost_max_iter, visit_log=False)


def ghost_search(query, shard_index, params, query_id=0, stage=0):
    if shard_index.ghost is None:
        raise SearchError(f"shard {shard_index.shard_id} has no ghost index")
    return search(query, shard_index.ghost_context, ghost_params(params),
                  query_id=query_id, stage=stage, phase=GHOST_PHASE)


def run_ghost_stage(query, shard_index, params, query_id=0, stage=0):
    """Search the ghost graph; return the parent-shard local id to start from."""
    return int(ghost_search(query, shard_index, params, query_id, stage).ids[0])


def _logs_visits(params, options, query_id):
    if params.visit_log or options.visit_log_rate >= 1.0:
        return True
    if options.visit_log_rate <= 0.0:
        return False
    return stream(params.seed, STREAM_VISIT_SAMPLE, query_id).random() < options.visit_log_rate


def _query_matrix(queries, d):
    data = queries.data if isinstance(queries, Dataset) else np.asarray(queries, dtype=np.float32)
    if data.ndim != 2 or data.shape[1] != d:
        raise SearchError(f"queries have shape {data.shape}, index has d={d}")
    return data


# =========================
# One (chunk, shard) stage
# =========================

class _StageRunner:
    def __init__(self, index, queries, chunks, params, options, mode):
        self.index = index
        self.queries = queries
        self.chunks = chunks
        self.params = params
        self.options = options
        self.mode = mode
        self.n_shards = index.n_shards

    def budget(self, stage):
        if self.options.stage_budgets:
            return self.options.stage_budgets[stage]
        return self.params.max_iter

    def uses_ghost(self, stage):
        ghost = self.params.ghost
        if ghost is None or not ghost.enabled:
            return False
        return self.mode == "baseline" or stage == 0

    def entry_seeds(self, shard_index, entries):
        """Starting points from forwarded or ghost-found ids, widened by seed_mode."""
        seeds = [int(e) for e in entries]
        if self.options.seed_mode == "neighbors":
            seeds += shard_index.graph.adj[entries].ravel().tolist()
        return seeds

    def one_query(self, shard_index, msg, i):
        q = int(self.chunks[msg.chunk][i])
        query = self.queries[q]
        seeds = []
        ghost_result = None
        if msg.entries is not None:
            seeds = self.entry_seeds(shard_index, msg.entries[i])
        elif self.uses_ghost(msg.stage):
            ghost_result = ghost_search(query, shard_index, self.params, q, msg.stage)
            seeds = self.entry_seeds(shard_index, ghost_result.ids)

        params = replace(self.params, visit_log=_logs_visits(self.params, self.options, q))
        result = search(query, shard_index.context, params, seeds,
                        query_id=q, stage=msg.stage, max_iter=self.budget(msg.stage))
        return result, ghost_result

    def run(self, shard, msg, pool=None):
        """Search every query of the message's chunk; returns (outputs, next message)."""
        shard_index = self.index.shards[shard]
        positions = range(len(self.chunks[msg.chunk]))
        if pool is not None:
            outputs = list(pool.map(lambda i: self.one_query(shard_index, msg, i), positions))
        else:
            outputs = [self.one_query(shard_index, msg, i) for i in positions]

        if self.mode != "pipelined" or msg.stage == self.n_shards - 1:
            return outputs, None
        table = shard_index.inter_shard
        if table is None:
            raise SearchError(f"shard {shard} has no inter-shard table")
        f = self.options.forward_count
        entries = np.empty((len(outputs), f), dtype=np.int32)
        for i, (result, _) in enumerate(outputs):
            top = result.local_ids[:f]
            top = np.concatenate([top, np.repeat(top[-1:], f - len(top))])
            entries[i] = table.map[top]
        logger.debug("stage %d chunk %d: shard %d forwards %d ids",
                     msg.stage, msg.chunk, shard, entries.size)
        return outputs, StageMessage(msg.stage + 1, msg.chunk, entries)


# =========================
# Schedules
# =========================

def _run_sequential(runner):
    n = runner.n_shards
    outputs, log = {}, []
    pending = {c: StageMessage(0, c) for c in range(n)}
    for stage in range(n):
        for chunk in range(n):
            shard = (chunk + stage) % n
            out, nxt = runner.run(shard, pending[chunk])
            outputs[(chunk, stage)] = out
            if nxt is not None:
                log.append((stage, shard, (shard + 1) % n, nxt.nbytes))
                pending[chunk] = nxt
    return outputs, log


def _receive(inbox, abort):
    while True:
        try:
            return inbox.get(timeout=_POLL_SECONDS)
        except queue.Empty:
            if abort.is_set():
                raise SearchError("pipeline aborted by a failed worker")


def _run_ring(runner, threads):
    """N long-lived workers joined in a ring by bounded FIFO queues."""
    n = runner.n_shards
    inboxes = [queue.Queue(maxsize=n) for _ in range(n)]
    for chunk in range(n):
        inboxes[chunk].put(StageMessage(0, chunk))
    abort = threading.Event()
    lock = threading.Lock()
    outputs, log = {}, []
    per_worker = max(1, threads // n)

    def worker(shard):
        try:
            with ThreadPoolExecutor(max_workers=per_worker) as pool:
                for _ in range(n):
                    msg = _receive(inboxes[shard], abort)
                    out, nxt = runner.run(shard, msg, pool if per_worker > 1 else None)
                    with lock:
                        outputs[(msg.chunk, msg.stage)] = out
                        if nxt is not None:
                            log.append((msg.stage, shard, (shard + 1) % n, nxt.nbytes))
                    if nxt is not None:
                        inboxes[(shard + 1) % n].put(nxt)
        except BaseException:
            abort.set()
            raise

    with ThreadPoolExecutor(max_workers=n, thread_name_prefix="shard") as ring:
        futures = [ring.submit(worker, shard) for shard in range(n)]
        for future in futures:
            future.result()
    return outputs, log


def _run(queries, index, params, options, mode):
    n = index.n_shards
    data = _query_matrix(queries, index.d)
    n_queries = data.shape[0]
    if mode == "pipelined":
        if n_queries < n:
            raise SearchError(f"{n_queries} queries cannot fill {n} chunks")
        if n > 1:
            missing = [s.shard_id for s in index.shards if s.inter_shard is None]
            if missing:
                raise SearchError(f"shards {missing} have no inter-shard table")
    if options.forward_count < 1:
        raise SearchError(f"forward_count must be >= 1, got {options.forward_count}")
    if options.stage_budgets is not None and len(options.stage_budgets) != n:
        raise SearchError(f"{len(options.stage_budgets)} stage budgets for {n} stages")

    chunks = np.array_split(np.arange(n_queries), n)
    runner = _StageRunner(index, data, chunks, params, options, mode)
    logger.info("%s search: %d queries over %d shards", mode, n_queries, n)
    if options.threads > 1 and n > 1:
        outputs, log = _run_ring(runner, options.threads)
    elif options.threads > 1:
        with ThreadPoolExecutor(max_workers=options.threads) as pool:
            outputs = {(0, 0): runner.run(0, StageMessage(0, 0), pool)[0]}
        log = []
    else:
        outputs, log = _run_sequential(runner)
    return _assemble(outputs, sorted(log), chunks, n_queries, params, mode, n)


def _assemble(outputs, log, chunks, n_queries, params, mode, n):
    shard_results = [[None] * n for _ in range(n_queries)]
    ghost_results = {}
    stages = []
    for stage in range(n):
        iterations = np.zeros(n_queries, dtype=np.int64)
        ghost_iterations = []
        counters = Counters()
        for chunk, members in enumerate(chunks):
            for q, (result, ghost_result) in zip(members, outputs[(chunk, stage)]):
                shard_results[q][stage] = result
                iterations[q] = result.counters.iterations
                counters = counters.merge(result.counters)
                if ghost_result is not None:
                    ghost_results[(int(q), stage)] = ghost_result
                    ghost_iterations.append(ghost_result.counters.iterations)
                    counters = counters.merge(ghost_result.counters)
        sent = sum(nbytes for s, _, _, nbytes in log if s == stage)
        stages.append(StageStats(stage, iterations, np.asarray(ghost_iterations, dtype=np.int64), counters, sent))
        logger.info("stage %d: mean iterations %.2f, %d distance computations, %d bytes forwarded",
                    stage, stages[-1].iterations_mean, counters.distance_computations, sent)

    link_bytes = [0] * n
    for _, src, _, nbytes in log:
        link_bytes[src] += nbytes
    final = [reduce(shard_results[q], params.k, query_id=q) for q in range(n_queries)]
    return PipelineResult(
        mode=mode,
        n_shards=n,
        k=params.k,
        chunks=chunks,
        shard_results=shard_results,
        ghost_results=ghost_results,
        final=final,
        stages=stages,
        link_bytes=link_bytes,
        message_log=log,
    )


def run_sharded_baseline(queries, index, params, options=None):
    return _run(queries, index, params, options or PipelineOptions(), "baseline")


def run_pipelined(queries, index, params, options=None):
    return _run(queries, index, params, options or PipelineOptions(), "pipelined")
