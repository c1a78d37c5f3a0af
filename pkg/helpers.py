import os
import json
from datetime import datetime

import numpy as np

# =========================
# Paths & Setup
# =========================

RUNS_DIR = os.environ.get("PW_RUNS", "runs")

MANIFEST = "manifest"
METRICS = "metrics"
SWEEP = "sweep"
RESULT_IDS = "results.ivecs"
RESULT_DISTS = "results.fvecs"


def runs_dir():
    return os.environ.get("PW_RUNS", RUNS_DIR)


# =========================
# Generic JSON helpers
# =========================

def _to_builtin(value):
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"{type(value).__name__} is not JSON serializable")


def load_json(path, strict=False):
    """Read a JSON object. Missing, empty or broken files give {} unless strict."""
    if not os.path.exists(path):
        if strict:
            raise FileNotFoundError(path)
        return {}
    try:
        with open(path, "r") as f:
            data = f.read().strip()
            if not data:
                if strict:
                    raise ValueError(f"{path}: empty file")
                return {}
            return json.loads(data)
    except json.JSONDecodeError:
        if strict:
            raise
        return {}


def save_json(path, data):
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=4, sort_keys=True, default=_to_builtin)


# =========================
# Run directories
# =========================

def get_run_file(run, file_type, ext="json"):
    """
    Build path for a file inside a run directory.
    Example: run='desk-ghost', file_type='metrics' -> runs/desk-ghost/metrics.json
    """
    return os.path.join(runs_dir(), run, f"{file_type}.{ext}")


def load_run_data(run, file_type):
    return load_json(get_run_file(run, file_type))


def save_run_data(run, file_type, data):
    save_json(get_run_file(run, file_type), data)


def get_all_runs():
    """Run names = subdirectories of the runs dir holding metrics, a sweep or a manifest."""
    root = runs_dir()
    if not os.path.exists(root):
        return []
    runs = set()
    for name in os.listdir(root):
        path = os.path.join(root, name)
        if not os.path.isdir(path):
            continue
        if any(os.path.exists(os.path.join(path, f)) for f in ("metrics.json", "sweep.csv", "manifest.json")):
            runs.add(name)
    return sorted(runs)


def sweep_path(run):
    return get_run_file(run, SWEEP, ext="csv")


# =========================
# Manifests
# =========================

def manifest_path(out_dir):
    return os.path.join(out_dir, f"{MANIFEST}.json")


def write_manifest(path, command, config, seed, index_checksum=None, extra=None):
    """Config echo + seed + index checksum, written next to every output.
    `path` is the manifest file itself; run directories use manifest_path()."""
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "index_checksum": index_checksum,
        "created": datetime.now().strftime("%Y-%m-%d %H:%M:%S"),
    }
    if extra:
        manifest.update(extra)
    save_json(path, manifest)
    return path


def result_paths(out_dir):
    return os.path.join(out_dir, RESULT_IDS), os.path.join(out_dir, RESULT_DISTS)


def load_run_summary(run):
    """Manifest and metrics of one run, merged for display."""
    return {
        "name": run,
        "manifest": load_run_data(run, MANIFEST),
        "metrics": load_run_data(run, METRICS),
    }
