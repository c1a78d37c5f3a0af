from dataclasses import replace

import numpy as np
import pytest

from beam_search import GHOST_PHASE, GhostParams, SearchError, SearchParams, search
from graph_index import PathWeaveIndex, build_index
from knn_oracle import NeighborList, mean_recall
from pipeline import (
    PipelineOptions,
    StageMessage,
    ghost_params,
    ghost_search,
    reduce,
    run_ghost_stage,
    run_pipelined,
    run_sharded_baseline,
)

PARAMS = SearchParams(k=10, l=48, m=48, r=4, max_iter=32)


def _nl(ids, dists):
    return NeighborList(0, np.array(ids), np.array(dists, dtype=np.float32))


# =========================
# Reduction
# =========================

def test_reduce_single_list_is_its_own_top_k():
    out = reduce([_nl([4, 2, 9], [0.1, 0.2, 0.3])], 2)
    assert out.ids.tolist() == [4, 2]


def test_reduce_equals_sort_of_concatenation():
    a = _nl([1, 5, 8], [0.3, 0.5, 0.9])
    b = _nl([2, 6, 7], [0.1, 0.5, 0.6])
    out = reduce([a, b], 4, query_id=3)
    assert out.ids.tolist() == [2, 1, 5, 6]
    assert out.query_id == 3


def test_reduce_needs_something():
    with pytest.raises(SearchError):
        reduce([_nl([], [])], 3)


def test_message_size():
    assert StageMessage(1, 0, np.zeros((20, 1), dtype=np.int32)).nbytes == 80
    assert StageMessage(0, 0).nbytes == 0


# =========================
# Schedules
# =========================

def test_one_shard_baseline_is_plain_search(single_index, queries):
    run = run_sharded_baseline(queries, single_index, PARAMS)
    ctx = single_index.shards[0].context
    for q in range(queries.n):
        expected = search(queries.data[q], ctx, PARAMS, query_id=q, stage=0)
        np.testing.assert_array_equal(run.final[q].ids, expected.ids)
    assert run.comm_bytes == 0


def test_one_shard_pipelined_equals_baseline(single_index, queries):
    a = run_sharded_baseline(queries, single_index, PARAMS)
    b = run_pipelined(queries, single_index, PARAMS)
    assert b.message_log == []
    for x, y in zip(a.final, b.final):
        np.testing.assert_array_equal(x.ids, y.ids)
        np.testing.assert_array_equal(x.distances, y.distances)


@pytest.mark.parametrize("mode", ["baseline", "pipelined"])
def test_every_chunk_meets_every_shard_once(sharded_index, queries, mode):
    run_fn = run_pipelined if mode == "pipelined" else run_sharded_baseline
    run = run_fn(queries, sharded_index, PARAMS)
    n = sharded_index.n_shards
    shard_of = sharded_index.shard_set.shard_of
    for chunk, members in enumerate(run.chunks):
        for q in members:
            visited = []
            for stage, result in enumerate(run.shard_results[q]):
                owners = set(shard_of[result.ids].tolist())
                assert owners == {(chunk + stage) % n}
                visited.extend(owners)
            assert sorted(visited) == list(range(n))
    assert sum(len(c) for c in run.chunks) == queries.n


def test_forwarded_bytes_follow_the_ring(sharded_index, queries):
    run = run_pipelined(queries, sharded_index, PARAMS)
    n = sharded_index.n_shards
    assert run.comm_bytes == queries.n * (n - 1) * 4
    expected = [0] * n
    for chunk, members in enumerate(run.chunks):
        for stage in range(n - 1):
            expected[(chunk + stage) % n] += len(members) * 4
    assert run.link_bytes == expected
    assert [s.comm_bytes for s in run.stages] == [queries.n * 4] * (n - 1) + [0]
    assert sum(entry[-1] for entry in run.message_log) == run.comm_bytes


def test_baseline_sends_nothing(sharded_index, queries):
    run = run_sharded_baseline(queries, sharded_index, PARAMS)
    assert run.comm_bytes == 0 and run.message_log == []


def test_wider_forwarding_costs_more(sharded_index, queries):
    run = run_pipelined(queries, sharded_index, PARAMS, PipelineOptions(forward_count=2))
    assert run.comm_bytes == queries.n * 3 * 2 * 4


def test_pipelined_recall_keeps_up_with_baseline(sharded_index, queries, truths):
    baseline = run_sharded_baseline(queries, sharded_index, PARAMS)
    pipelined = run_pipelined(queries, sharded_index, PARAMS)
    assert mean_recall(truths, pipelined.final, 10) >= mean_recall(truths, baseline.final, 10) - 0.02


def test_forwarded_seed_shortens_later_stages(sharded_index, queries):
    run = run_pipelined(queries, sharded_index, PARAMS)
    first = run.stages[0].iterations_mean
    later = np.mean([s.iterations_mean for s in run.stages[1:]])
    assert later < first


def test_neighbor_seeding_runs(sharded_index, queries, truths):
    run = run_pipelined(queries, sharded_index, PARAMS, PipelineOptions(seed_mode="neighbors"))
    assert mean_recall(truths, run.final, 10) >= 0.8


def test_threads_do_not_change_results(sharded_index, queries):
    options = PipelineOptions(visit_log_rate=0.5)
    one = run_pipelined(queries, sharded_index, PARAMS, options)
    many = run_pipelined(queries, sharded_index, PARAMS, replace(options, threads=8))
    for a, b in zip(one.final, many.final):
        assert a.ids.tobytes() == b.ids.tobytes()
        assert a.distances.tobytes() == b.distances.tobytes()
    assert one.totals() == many.totals()
    assert one.message_log == many.message_log
    assert one.link_bytes == many.link_bytes


def test_stage_budgets_cap_iterations(sharded_index, queries):
    options = PipelineOptions(stage_budgets=(32, 4, 4, 4))
    run = run_pipelined(queries, sharded_index, PARAMS, options)
    for stats in run.stages[1:]:
        assert stats.iterations.max() <= 4


def test_visit_log_sampling(sharded_index, queries):
    none = run_sharded_baseline(queries, sharded_index, PARAMS, PipelineOptions(visit_log_rate=0.0))
    full = run_sharded_baseline(queries, sharded_index, PARAMS, PipelineOptions(visit_log_rate=1.0))
    assert all(r.visited is None for row in none.shard_results for r in row)
    assert all(r.visited is not None for row in full.shard_results for r in row)


# =========================
# Errors
# =========================

def test_too_few_queries_for_the_chunks(sharded_index, queries):
    with pytest.raises(SearchError, match="chunks"):
        run_pipelined(queries.data[:3], sharded_index, PARAMS)


def test_missing_inter_shard_table(sharded_index, queries):
    shards = list(sharded_index.shards)
    shards[2] = replace(shards[2], inter_shard=None)
    broken = PathWeaveIndex(sharded_index.shard_set, shards)
    with pytest.raises(SearchError, match="inter-shard"):
        run_pipelined(queries, broken, PARAMS)
    run_sharded_baseline(queries, broken, PARAMS)


def test_bad_options(sharded_index, queries):
    with pytest.raises(SearchError, match="forward_count"):
        run_pipelined(queries, sharded_index, PARAMS, PipelineOptions(forward_count=0))
    with pytest.raises(SearchError, match="stage budgets"):
        run_pipelined(queries, sharded_index, PARAMS, PipelineOptions(stage_budgets=(8, 8)))
    with pytest.raises(SearchError, match="d="):
        run_sharded_baseline(np.zeros((8, 3)), sharded_index, PARAMS)


# =========================
# Ghost staging
# =========================

GHOSTED = replace(PARAMS, ghost=GhostParams(ghost_max_iter=8))


def test_ghost_params_search_for_one_result():
    p = ghost_params(GHOSTED)
    assert (p.k, p.max_iter, p.dgs) == (1, 8, None)


def test_ghost_stage_returns_a_parent_shard_id(sharded_index, queries):
    for shard in sharded_index.shards:
        for q in range(10):
            seed = run_ghost_stage(queries.data[q], shard, GHOSTED, query_id=q)
            assert 0 <= seed < shard.dataset.n
            assert seed in set(shard.ghost.ghost_ids.tolist())


def test_full_ghost_equals_main_graph_search(base, queries):
    index = build_index(base.subset(np.arange(600)), 1, 16, ghost_ratio=1.0, ghost_degree=16, with_directions=False)
    shard = index.shards[0]
    for q in range(20):
        ghost_top = run_ghost_stage(queries.data[q], shard, GHOSTED, query_id=q, stage=0)
        main = search(queries.data[q], shard.context, ghost_params(GHOSTED), query_id=q, stage=0, phase=GHOST_PHASE)
        assert ghost_top == main.local_ids[0]


def test_ghost_needs_a_ghost_index(base, queries):
    index = build_index(base.subset(np.arange(200)), 1, 8, with_ghost=False, with_directions=False)
    with pytest.raises(SearchError, match="ghost"):
        ghost_search(queries.data[0], index.shards[0], GHOSTED)


def test_ghost_stages_by_mode(sharded_index, queries):
    baseline = run_sharded_baseline(queries, sharded_index, GHOSTED)
    pipelined = run_pipelined(queries, sharded_index, GHOSTED)
    n = sharded_index.n_shards
    assert len(baseline.ghost_results) == queries.n * n
    assert {stage for _, stage in pipelined.ghost_results} == {0}
    assert len(pipelined.ghost_results) == queries.n
    assert pipelined.stages[0].ghost_iterations_mean > 0
    assert pipelined.stages[1].ghost_iterations.size == 0


def test_ghost_params_hand_over_several_seeds():
    p = ghost_params(replace(PARAMS, ghost=GhostParams(ghost_max_iter=3, seeds=4)))
    assert (p.k, p.max_iter) == (4, 3)
    with pytest.raises(ValueError, match="ghost_seeds"):
        replace(PARAMS, ghost=GhostParams(seeds=PARAMS.l + 1))


@pytest.mark.parametrize("seed_mode", ["random_fill", "neighbors"])
def test_ghost_results_seed_the_main_stage(single_index, queries, seed_mode):
    params = replace(PARAMS, ghost=GhostParams(ghost_max_iter=4, seeds=4))
    run = run_sharded_baseline(queries, single_index, params, PipelineOptions(seed_mode=seed_mode))
    shard = single_index.shards[0]
    for q in range(10):
        found = run.ghost_results[(q, 0)].ids
        assert len(found) == 4
        seeds = found.tolist()
        if seed_mode == "neighbors":
            seeds += shard.graph.adj[found].ravel().tolist()
        again = search(queries.data[q], shard.context, params, seeds, query_id=q, stage=0)
        np.testing.assert_array_equal(run.shard_results[q][0].ids, again.ids)
