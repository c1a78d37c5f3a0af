"""Command-line entry point.

    python cli.py gen    --out data/ --shape smoke
    python cli.py truth  --data data/base.fvecs --queries data/queries.fvecs --out data/truth
    python cli.py build  --data data/base.fvecs --shards 4 --degree 32 --index data/index.pwix
    python cli.py search --index data/index.pwix --queries data/queries.fvecs --truth data/truth \
                         --mode pipelined --out runs/pipelined-4
    python cli.py eval   --results runs/pipelined-4 --truth data/truth
    python cli.py bench  --index data/index.pwix --queries data/queries.fvecs --truth data/truth \
                         --budgets 8,16,32,48 --out runs/sweep

Logs go to stderr; data goes to files, summaries to stdout. Failures print one
line `error: <Kind>: <message>` on stderr and exit with status 2.
"""

import argparse
import json
import logging
import os
import sys
import time

import numpy as np
import pandas as pd

from graph_index import build_index, default_ghost_degree, deserialize_index, file_checksum, serialize_index
from helpers import manifest_path, result_paths, save_json, write_manifest
from knn_oracle import exact_knn_batch, load_neighbor_lists, mean_recall, recall_at_k, save_neighbor_lists
from metrics import (
    collect_run_metrics,
    cost_model_report,
    metrics_document,
    plot_sweep,
    sweep,
    write_sweep_csv,
)
from pipeline import PipelineOptions, run_pipelined, run_sharded_baseline
from presets import get_dataset_shape, get_preset
from utils.config import PATH_FIELDS, ConfigError, build_config
from utils.logs import setup_logging
from vecdata import PathWeaveError, ensure_parent, gen_synthetic_split, load_fvecs, load_queries, save_fvecs

logger = logging.getLogger("cli")


def _int_list(text):
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# (flag, RunConfig field, argparse kwargs)
CONFIG_FLAGS = [
    ("--k", "k", {"type": int, "help": "results per query (default 10)"}),
    ("--l", "l", {"type": int, "help": "priority queue size (default 64)"}),
    ("--m", "m", {"type": int, "help": "candidate buffer size (default 64)"}),
    ("--r", "r", {"type": int, "help": "parents expanded per iteration (default 8)"}),
    ("--max-iter", "max_iter", {"type": int, "help": "iteration budget per stage (default 48)"}),
    ("--visited-capacity", "visited_capacity", {"type": int, "help": "clear the visited set past this size"}),
    ("--shards", "shards", {"type": int, "help": "shard count N (default 1)"}),
    ("--mode", "mode", {"choices": ["baseline", "pipelined"]}),
    ("--forward-count", "forward_count", {"type": int, "help": "ids forwarded per query (default 1)"}),
    ("--seed-mode", "seed_mode", {"choices": ["random_fill", "neighbors"]}),
    ("--stage-budgets", "stage_budgets", {"type": _int_list, "help": "per-stage max_iter, comma-separated"}),
    ("--degree", "degree", {"type": int, "help": "graph out-degree j (default 64)"}),
    ("--inter-shard-method", "inter_shard_method", {"choices": ["exact", "search"]}),
    ("--ghost", "ghost_enabled", {"action": argparse.BooleanOptionalAction, "help": "ghost staging"}),
    ("--ghost-ratio", "ghost_ratio", {"type": float, "help": "ghost sampling ratio (default 0.01)"}),
    ("--ghost-degree", "ghost_degree", {"type": int, "help": "ghost graph out-degree (default min(j, 16))"}),
    ("--ghost-max-iter", "ghost_max_iter", {"type": int, "help": "ghost stage budget (default 8)"}),
    ("--ghost-seeds", "ghost_seeds", {"type": int, "help": "ghost results that seed the main stage (default 1)"}),
    ("--dgs", "dgs_enabled", {"action": argparse.BooleanOptionalAction, "help": "direction-guided selection"}),
    ("--discard", "discard_ratio", {"type": float, "help": "neighbor discard ratio (default 0.5)"}),
    ("--cooldown", "cooldown_ratio", {"type": float, "help": "cool-down share of max_iter (default 0.3)"}),
    ("--selection", "selection", {"choices": ["direction", "random"]}),
    ("--visit-log", "visit_log", {"action": argparse.BooleanOptionalAction, "help": "log visits for every query"}),
    ("--visit-log-rate", "visit_log_rate", {"type": float, "help": "share of queries with visit logs"}),
    ("--retained-against", "retained_against", {"choices": ["queue", "topk"]}),
    ("--threads", "threads", {"type": int, "help": "worker thread cap (default 1)"}),
    ("--seed", "seed", {"type": int, "help": "run seed (default 0)"}),
    ("--data", "data", {"help": "base vectors (.fvecs)"}),
    ("--queries", "queries", {"help": "query vectors (.fvecs)"}),
    ("--truth", "truth", {"help": "ground-truth prefix (<prefix>.ivecs + <prefix>.fvecs)"}),
    ("--index", "index", {"help": "index file"}),
    ("--out", "out", {"help": "output directory or prefix"}),
]


def _config(args):
    preset = get_preset(args.preset) if args.preset else None
    flags = {name: getattr(args, name, None) for _, name, _ in CONFIG_FLAGS}
    return build_config(preset=preset, path=args.config, flags=flags)


def _require(value, name):
    if not value:
        where = f"flag, config file or PW_{name.upper()}" if name in PATH_FIELDS else "flag"
        raise ConfigError(f"{name}: required ({where})")
    return value


def _truth_files(prefix):
    return f"{prefix}.ivecs", f"{prefix}.fvecs"


def _options(config):
    return PipelineOptions(
        forward_count=config.forward_count,
        seed_mode=config.seed_mode,
        stage_budgets=tuple(config.stage_budgets) if config.stage_budgets else None,
        threads=config.threads,
        visit_log_rate=config.visit_log_rate,
    )


def _load_index(config, args):
    index = deserialize_index(_require(config.index, "index"))
    if args.shards is not None and args.shards != index.n_shards:
        raise ConfigError(f"shards: index has {index.n_shards} shards, --shards says {args.shards}")
    return index


# =========================
# Subcommands
# =========================

def cmd_gen(args):
    out = args.out or "data"
    os.makedirs(out, exist_ok=True)
    settings = get_dataset_shape(args.shape)
    for name in ("n", "nq", "dim", "clusters", "spread"):
        if getattr(args, name) is not None:
            settings[name] = getattr(args, name)
    base, queries = gen_synthetic_split(
        settings["n"], settings["nq"], settings["dim"], settings["clusters"], settings["spread"], args.seed
    )
    save_fvecs(base, os.path.join(out, "base.fvecs"))
    save_fvecs(queries, os.path.join(out, "queries.fvecs"))
    settings["shape"] = args.shape
    write_manifest(manifest_path(out), "gen", settings, args.seed)
    logger.info("generated %d base and %d query vectors in %s", base.n, queries.n, out)
    print(json.dumps({"base": os.path.join(out, "base.fvecs"), "queries": os.path.join(out, "queries.fvecs")}))


def cmd_truth(args):
    config = _config(args)
    base = load_fvecs(_require(config.data, "data"))
    queries = load_queries(_require(config.queries, "queries"))
    prefix = _require(config.out, "out")
    lists = exact_knn_batch(base, queries, config.k, threads=config.threads)
    ids_path, dists_path = _truth_files(prefix)
    ensure_parent(ids_path)
    save_neighbor_lists(lists, ids_path, dists_path)
    write_manifest(f"{prefix}.manifest.json", "truth", config.to_dict(), config.seed)
    print(json.dumps({"ids": ids_path, "distances": dists_path, "queries": queries.n, "k": config.k}))


def cmd_build(args):
    config = _config(args)
    dataset = load_fvecs(_require(config.data, "data"))
    path = _require(config.index, "index")
    index = build_index(
        dataset,
        config.shards,
        config.degree,
        seed=config.seed,
        ghost_ratio=config.ghost_ratio,
        ghost_degree=config.ghost_degree or default_ghost_degree(config.degree),
        with_ghost=args.ghost_enabled is not False,
        with_directions=not args.no_directions,
        inter_shard_method=config.inter_shard_method,
        search_params=config.to_search_params(),
        threads=config.threads,
    )
    ensure_parent(path)
    serialize_index(index, path)

    times = pd.Series(index.build_times, name="seconds")
    breakdown = pd.DataFrame({"seconds": times, "share": times / times.sum() if times.sum() else 0.0})
    print(breakdown.to_string(float_format=lambda v: f"{v:.4f}"))
    write_manifest(f"{path}.manifest.json", "build", config.to_dict(), config.seed,
                   index_checksum=file_checksum(path), extra={"build_times": index.build_times})


def cmd_search(args):
    config = _config(args)
    index = _load_index(config, args)
    queries = load_queries(_require(config.queries, "queries"))
    out = _require(config.out, "out")
    params = config.to_search_params()
    run_fn = run_pipelined if config.mode == "pipelined" else run_sharded_baseline

    started = time.perf_counter()
    run = run_fn(queries, index, params, _options(config))
    wall = time.perf_counter() - started

    truths = load_neighbor_lists(*_truth_files(config.truth)) if config.truth else None
    run_metrics = collect_run_metrics(run, truths, wall, config.retained_against)
    cost = cost_model_report(run, index.d, index.shards[0].graph.j, config.forward_count)

    os.makedirs(out, exist_ok=True)
    save_neighbor_lists(run.final, *result_paths(out))
    save_json(os.path.join(out, "metrics.json"), metrics_document(run, run_metrics, config.to_dict(), config.seed, cost))
    write_manifest(manifest_path(out), "search", config.to_dict(), config.seed,
                   index_checksum=file_checksum(config.index))
    print(json.dumps({
        "mode": run.mode,
        "recall": run_metrics.recall,
        "distance_computations": run_metrics.distance_computations,
        "comm_bytes": run.comm_bytes,
        "discarded_ratio": run_metrics.discarded_ratio,
    }))


def cmd_eval(args):
    config = _config(args)
    results = load_neighbor_lists(*result_paths(_require(args.results, "results")))
    truths = load_neighbor_lists(*_truth_files(_require(config.truth, "truth")))
    if len(results) != len(truths):
        raise ValueError(f"{len(results)} results but {len(truths)} truth lists")
    per_query = np.array([recall_at_k(t, r, config.k) for t, r in zip(truths, results)])
    report = {
        "k": config.k,
        "n_queries": len(results),
        "recall": mean_recall(truths, results, config.k),
        "recall_min": float(per_query.min()),
        "perfect_share": float(np.mean(per_query == 1.0)),
    }
    if args.report:
        save_json(args.report, report)
        write_manifest(f"{args.report}.manifest.json", "eval", config.to_dict(), config.seed)
    print(json.dumps(report))


def cmd_bench(args):
    config = _config(args)
    index = _load_index(config, args)
    queries = load_queries(_require(config.queries, "queries"))
    truths = load_neighbor_lists(*_truth_files(_require(config.truth, "truth")))
    out = _require(config.out, "out")
    budgets = args.budgets or [config.max_iter]
    seeds = [config.seed + i for i in range(args.seeds)]

    frame = sweep(queries, index, truths, config.to_search_params(), budgets, seeds=seeds,
                  mode=config.mode, options=_options(config), against=config.retained_against)
    os.makedirs(out, exist_ok=True)
    csv_path = os.path.join(out, "sweep.csv")
    write_sweep_csv(frame, csv_path)
    if args.plot:
        plot_sweep(frame, title=f"{config.mode}, {index.n_shards} shard(s)").savefig(os.path.join(out, "sweep.png"))
    write_manifest(manifest_path(out), "bench", config.to_dict(), config.seed,
                   index_checksum=file_checksum(config.index), extra={"budgets": budgets, "seeds": seeds})
    print(frame.to_csv(index=False), end="")


# =========================
# Parser
# =========================

def _add_common(parser, config_flags=True):
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("-q", "--quiet", action="count", default=0)
    if config_flags:
        parser.add_argument("--config", help="TOML config file")
        parser.add_argument("--preset", help="named preset (see presets.py)")
        for flag, name, kwargs in CONFIG_FLAGS:
            parser.add_argument(flag, dest=name, default=None, **kwargs)


def build_parser():
    parser = argparse.ArgumentParser(prog="cli.py", description="Sharded, pipelined graph ANN search")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic clustered dataset")
    _add_common(gen, config_flags=False)
    gen.add_argument("--shape", default="smoke", help="dataset shape from presets.py (smoke or desk)")
    gen.add_argument("--n", type=int)
    gen.add_argument("--nq", type=int)
    gen.add_argument("--dim", type=int)
    gen.add_argument("--clusters", type=int)
    gen.add_argument("--spread", type=float)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", help="output directory (default data)")
    gen.set_defaults(func=cmd_gen)

    truth = sub.add_parser("truth", help="exact k-NN ground truth")
    _add_common(truth)
    truth.set_defaults(func=cmd_truth)

    build = sub.add_parser("build", help="build and serialize the index")
    _add_common(build)
    build.add_argument("--no-directions", action="store_true", help="skip the direction table")
    build.set_defaults(func=cmd_build)

    search = sub.add_parser("search", help="run baseline or pipelined search")
    _add_common(search)
    search.set_defaults(func=cmd_search)

    evaluate = sub.add_parser("eval", help="recall of a results directory against ground truth")
    _add_common(evaluate)
    evaluate.add_argument("--results", help="directory written by `search`")
    evaluate.add_argument("--report", help="also write the report as JSON here")
    evaluate.set_defaults(func=cmd_eval)

    bench = sub.add_parser("bench", help="recall/cost sweep over iteration budgets")
    _add_common(bench)
    bench.add_argument("--budgets", type=_int_list, help="comma-separated max_iter values")
    bench.add_argument("--seeds", type=int, default=3, help="seeds averaged per budget (default 3)")
    bench.add_argument("--plot", action="store_true", help="also write sweep.png")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose - args.quiet)
    try:
        args.func(args)
    except (PathWeaveError, ValueError, KeyError, OSError) as exc:
        message = str(exc).replace("\n", " ")
        print(f"error: {type(exc).__name__}: {message}", file=sys.stderr)
        return 2
    except Exception:
        logger.exception("unexpected failure")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
