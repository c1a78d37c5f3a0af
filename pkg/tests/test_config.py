import pytest

from beam_search import DgsParams, GhostParams
from utils.config import ConfigError, RunConfig, build_config, env_overrides, load_config_file


def test_defaults():
    config = build_config(environ={})
    assert (config.degree, config.k, config.cooldown_ratio) == (64, 10, 0.3)
    assert config.mode == "baseline" and config.shards == 1
    params = config.to_search_params()
    assert params.dgs is None and params.ghost is None


def test_layers_override_in_order(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('l = 96\nm = 80\ndata = "from_file.fvecs"\n[ghost]\nghost_enabled = true\n')
    config = build_config(
        preset={"l": 32, "m": 32, "r": 4},
        path=path,
        flags={"m": 128, "data": None},
        environ={"PW_DATA": "from_env.fvecs"},
    )
    assert config.r == 4
    assert config.l == 96
    assert config.m == 128
    assert config.data == "from_env.fvecs"
    assert config.ghost_enabled is True
    assert config.to_search_params().ghost == GhostParams(True, 8)


def test_environment_only_sets_paths():
    overrides = env_overrides({"PW_INDEX": "idx.pwix", "PW_K": "99", "PW_OUT": ""})
    assert overrides == {"index": "idx.pwix"}


def test_unknown_keys_are_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown keys"):
        build_config(preset={"beam_width": 4}, environ={})
    path = tmp_path / "bad.toml"
    path.write_text("speed = 3\n")
    with pytest.raises(ConfigError, match="speed"):
        load_config_file(path)


def test_malformed_toml(tmp_path):
    path = tmp_path / "broken.toml"
    path.write_text("k = = 3\n")
    with pytest.raises(ConfigError):
        load_config_file(path)


def test_all_problems_are_listed():
    with pytest.raises(ConfigError) as err:
        build_config(flags={"shards": 0, "mode": "warp", "k": 100}, environ={})
    message = str(err.value)
    assert "shards" in message and "mode" in message and "k: must be <= l" in message


def test_stage_budgets_need_one_per_shard():
    with pytest.raises(ConfigError, match="stage_budgets"):
        build_config(flags={"shards": 4, "stage_budgets": [8, 8]}, environ={})
    config = build_config(flags={"shards": 2, "stage_budgets": [16, 8]}, environ={})
    assert config.stage_budgets == [16, 8]


def test_dgs_switch_builds_params():
    config = build_config(flags={"dgs_enabled": True, "discard_ratio": 0.25, "selection": "random"}, environ={})
    assert config.to_search_params().dgs == DgsParams(0.25, 0.3, "random")


def test_to_dict_echoes_every_field():
    echo = RunConfig().to_dict()
    assert echo["degree"] == 64 and echo["index"] is None
    assert "visit_log_rate" in echo


def test_ghost_seeds_reach_the_search_params():
    config = build_config(flags={"ghost_enabled": True, "ghost_max_iter": 4, "ghost_seeds": 8}, environ={})
    assert config.to_search_params().ghost == GhostParams(True, 4, 8)
    with pytest.raises(ConfigError, match="ghost_seeds"):
        build_config(flags={"ghost_enabled": True, "ghost_seeds": 0}, environ={})
