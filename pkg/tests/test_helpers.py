import json

import numpy as np
import pytest

from helpers import (
    get_all_runs,
    get_run_file,
    load_json,
    load_run_summary,
    manifest_path,
    result_paths,
    save_json,
    sweep_path,
    write_manifest,
)


@pytest.fixture
def runs(tmp_path, monkeypatch):
    monkeypatch.setenv("PW_RUNS", str(tmp_path))
    return tmp_path


def test_json_helpers_handle_numpy(tmp_path):
    path = tmp_path / "nested" / "x.json"
    save_json(path, {"a": np.int64(3), "b": np.float32(0.5), "c": np.arange(3)})
    assert load_json(path) == {"a": 3, "b": 0.5, "c": [0, 1, 2]}


def test_load_json_is_forgiving_unless_strict(tmp_path):
    missing = tmp_path / "none.json"
    assert load_json(missing) == {}
    with pytest.raises(FileNotFoundError):
        load_json(missing, strict=True)
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    assert load_json(broken) == {}
    with pytest.raises(json.JSONDecodeError):
        load_json(broken, strict=True)


def test_runs_are_found_by_their_files(runs):
    (runs / "b-run").mkdir()
    save_json(runs / "b-run" / "metrics.json", {})
    (runs / "a-run").mkdir()
    (runs / "a-run" / "sweep.csv").write_text("budget\n")
    (runs / "empty").mkdir()
    (runs / "stray.txt").write_text("")
    assert get_all_runs() == ["a-run", "b-run"]
    assert sweep_path("a-run") == str(runs / "a-run" / "sweep.csv")
    assert get_run_file("b-run", "metrics") == str(runs / "b-run" / "metrics.json")


def test_no_runs_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("PW_RUNS", str(tmp_path / "missing"))
    assert get_all_runs() == []


def test_manifest_and_summary(runs):
    out = runs / "r1"
    write_manifest(manifest_path(out), "search", {"k": 10}, 7, index_checksum="0badcafe", extra={"note": "x"})
    save_json(out / "metrics.json", {"mode": "baseline"})
    summary = load_run_summary("r1")
    assert summary["manifest"]["command"] == "search"
    assert summary["manifest"]["seed"] == 7
    assert summary["manifest"]["index_checksum"] == "0badcafe"
    assert summary["manifest"]["note"] == "x"
    assert summary["metrics"]["mode"] == "baseline"


def test_result_paths(tmp_path):
    ids, dists = result_paths(tmp_path)
    assert ids.endswith("results.ivecs") and dists.endswith("results.fvecs")
