"""Run instrumentation: discarded-visit accounting, the communication/memory
cost model, and recall-versus-budget sweeps."""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from matplotlib.figure import Figure

from knn_oracle import mean_recall
from pipeline import ID_BYTES, PipelineOptions, run_pipelined, run_sharded_baseline
from vecdata import PathWeaveError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ELEM_BYTES = 4
SWEEP_COLUMNS = ["budget", "recall", "iterations", "dist_comps", "total_visits", "discarded_ratio", "comm_bytes"]


class AccountingError(PathWeaveError):
    pass


@dataclass
class RunMetrics:
    total_visits: int
    discarded_visits: int
    retained_visits: int
    distance_computations: int
    stage_iterations: list = field(default_factory=list)
    comm_bytes: int = 0
    recall: float | None = None
    iterations_mean: float = 0.0
    wall_time: float = 0.0

    def __post_init__(self):
        if self.total_visits != self.discarded_visits + self.retained_visits:
            raise AccountingError(
                f"visits do not add up: {self.total_visits} != "
                f"{self.discarded_visits} + {self.retained_visits}"
            )

    @property
    def discarded_ratio(self):
        return self.discarded_visits / self.total_visits if self.total_visits else 0.0

    def to_dict(self):
        return {
            "total_visits": self.total_visits,
            "discarded_visits": self.discarded_visits,
            "retained_visits": self.retained_visits,
            "discarded_ratio": self.discarded_ratio,
            "distance_computations": self.distance_computations,
            "comm_bytes": self.comm_bytes,
            "recall": self.recall,
            "iterations_mean": self.iterations_mean,
        }


# =========================
# Visit accounting
# =========================

def classify_visits(visited, survivors):
    """(total, discarded): nodes scored vs. those missing from the final survivors."""
    if visited is None or survivors is None:
        raise ValueError("visit logging was disabled for this search")
    scored = np.unique(np.asarray(visited))
    discarded = int(np.count_nonzero(~np.isin(scored, survivors)))
    return int(scored.size), discarded


def classify_result(result, against="queue"):
    """Classify against the final priority queue or, for sensitivity runs, the top-k."""
    if against == "queue":
        return classify_visits(result.visited, result.survivors)
    if against == "topk":
        return classify_visits(result.visited, None if result.visited is None else result.ids)
    raise ValueError(f"unknown classification basis {against!r}")


def collect_run_metrics(run, truths=None, wall_time=0.0, against="queue"):
    total = discarded = 0
    for per_query in run.shard_results:
        for result in per_query:
            if result.visited is None:
                continue
            t, dsc = classify_result(result, against)
            total += t
            discarded += dsc
    counters = run.totals()
    return RunMetrics(
        total_visits=total,
        discarded_visits=discarded,
        retained_visits=total - discarded,
        distance_computations=counters.distance_computations,
        stage_iterations=[np.bincount(stats.iterations).tolist() for stats in run.stages],
        comm_bytes=run.comm_bytes,
        recall=mean_recall(truths, run.final, run.k) if truths is not None else None,
        iterations_mean=run.iterations_per_query(),
        wall_time=wall_time,
    )


# =========================
# Cost model
# =========================

def predicted_comm_bytes(n_queries, forwarding_stages=1, forward_count=1):
    return n_queries * forwarding_stages * forward_count * ID_BYTES


def predicted_link_bytes(run, forward_count=1):
    """Bytes each ring link must carry under the chunk schedule."""
    n = run.n_shards
    links = [0] * n
    if run.mode != "pipelined":
        return links
    for chunk, members in enumerate(run.chunks):
        for stage in range(n - 1):
            links[(chunk + stage) % n] += len(members) * forward_count * ID_BYTES
    return links


def cost_model_report(run, d, j, forward_count=1):
    """Predicted memory traffic I*J*Q*v*b_elem per stage and comm Q*b_idx, checked
    against what the run measured."""
    n_queries = sum(len(c) for c in run.chunks)
    stages = []
    for stats in run.stages:
        traffic = stats.iterations_mean * j * n_queries * d * ELEM_BYTES
        stages.append({
            "stage": stats.stage,
            "iterations_mean": stats.iterations_mean,
            "predicted_traffic_bytes": traffic,
            "measured_comm_bytes": stats.comm_bytes,
        })

    predicted_links = predicted_link_bytes(run, forward_count)
    if predicted_links != list(run.link_bytes):
        raise AccountingError(f"forwarded bytes {run.link_bytes} != schedule prediction {predicted_links}")
    logged = sum(nbytes for *_, nbytes in run.message_log)
    if logged != run.comm_bytes:
        raise AccountingError(f"message log holds {logged} bytes, links recorded {run.comm_bytes}")

    forwarding_stages = run.n_shards - 1 if run.mode == "pipelined" else 0
    return {
        "n_queries": n_queries,
        "stages": stages,
        "predicted_traffic_bytes": sum(s["predicted_traffic_bytes"] for s in stages),
        "predicted_comm_bytes": predicted_comm_bytes(n_queries, forwarding_stages, forward_count),
        "predicted_link_bytes": predicted_links,
        "measured_link_bytes": list(run.link_bytes),
        "measured_comm_bytes": run.comm_bytes,
    }


def metrics_document(run, run_metrics, config, seed, cost=None):
    """JSON-ready metrics file body."""
    return {
        "schema_version": SCHEMA_VERSION,
        "mode": run.mode,
        "run_seed": seed,
        "config": config,
        "stages": {
            "iterations_mean": [s.iterations_mean for s in run.stages],
            "ghost_iterations_mean": [s.ghost_iterations_mean for s in run.stages],
            "distance_computations": [s.counters.distance_computations for s in run.stages],
            "inserted_counts": [s.counters.inserted for s in run.stages],
            "comm_bytes": [s.comm_bytes for s in run.stages],
            "iteration_histograms": run_metrics.stage_iterations,
        },
        "links": list(run.link_bytes),
        "counters": run.totals().as_dict(),
        "totals": run_metrics.to_dict(),
        "timing": {"wall_time_s": run_metrics.wall_time},
        "cost_model": cost,
    }


# =========================
# Sweeps
# =========================

def sweep(queries, index, truths, params, budgets, seeds=(0, 1, 2), mode="baseline",
          options=None, against="queue"):
    """One row per budget, each metric averaged over `seeds`."""
    if truths is None:
        raise ValueError("sweep needs ground truth")
    n_queries = len(queries)
    if len(truths) != n_queries:
        raise ValueError(f"{len(truths)} truth lists for {n_queries} queries")
    run_fn = run_pipelined if mode == "pipelined" else run_sharded_baseline
    options = replace(options or PipelineOptions(), stage_budgets=None)
    if options.visit_log_rate <= 0:
        options = replace(options, visit_log_rate=1.0)

    rows = []
    for budget in budgets:
        samples = []
        for seed in seeds:
            started = time.perf_counter()
            run = run_fn(queries, index, replace(params, max_iter=int(budget), seed=int(seed)), options)
            samples.append(collect_run_metrics(run, truths, time.perf_counter() - started, against))
        row = {
            "budget": int(budget),
            "recall": float(np.mean([s.recall for s in samples])),
            "iterations": float(np.mean([s.iterations_mean for s in samples])),
            "dist_comps": float(np.mean([s.distance_computations for s in samples])),
            "total_visits": float(np.mean([s.total_visits for s in samples])),
            "discarded_ratio": float(np.mean([s.discarded_ratio for s in samples])),
            "comm_bytes": float(np.mean([s.comm_bytes for s in samples])),
        }
        logger.info("sweep budget=%d recall=%.4f dist_comps=%.0f", row["budget"], row["recall"], row["dist_comps"])
        rows.append(row)
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def budget_for_recall(frame, target):
    """Smallest budget whose recall reaches `target`, or None."""
    hits = frame[frame["recall"] >= target]
    return None if hits.empty else int(hits["budget"].min())


def cost_for_recall(frame, target, column="iterations"):
    """Cheapest `column` value among rows whose recall reaches `target`, or None."""
    hits = frame[frame["recall"] >= target]
    return None if hits.empty else float(hits[column].min())


def write_sweep_csv(frame, path):
    frame.to_csv(path, index=False, columns=SWEEP_COLUMNS)


def read_sweep_csv(path):
    frame = pd.read_csv(path)
    missing = [c for c in SWEEP_COLUMNS if c not in frame.columns]
    if missing:
        raise ValueError(f"{path}: sweep file lacks columns {missing}")
    return frame


def plot_sweep(frame, title="Recall vs. budget"):
    fig = Figure(figsize=(9, 3.5))
    by_budget, by_cost = fig.subplots(1, 2)
    by_budget.plot(frame["budget"], frame["recall"], marker="o", linewidth=2, color="deepskyblue")
    by_budget.set_xlabel("max iterations")
    by_budget.set_ylabel("recall@k")
    by_budget.set_title(title)
    by_cost.plot(frame["dist_comps"], frame["recall"], marker="o", linewidth=2, color="darkorange")
    by_cost.set_xlabel("distance computations")
    by_cost.set_ylabel("recall@k")
    fig.tight_layout()
    return fig
