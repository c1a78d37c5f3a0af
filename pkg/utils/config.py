"""Run configuration.

Values are layered: dataclass defaults < preset < TOML file < PW_* path
environment variables < command-line flags. Everything ends up echoed into
the run manifest.
"""

import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
from dataclasses import asdict, dataclass, fields

from beam_search import DgsParams, GhostParams, SearchParams
from vecdata import PathWeaveError

PATH_FIELDS = ("data", "queries", "truth", "index", "out")
ENV_PREFIX = "PW_"


class ConfigError(PathWeaveError):
    pass


@dataclass
class RunConfig:
    # search
    k: int = 10
    l: int = 64
    m: int = 64
    r: int = 8
    max_iter: int = 48
    visited_capacity: int | None = None
    # sharding / pipeline
    shards: int = 1
    mode: str = "baseline"
    forward_count: int = 1
    seed_mode: str = "random_fill"
    stage_budgets: list | None = None
    # graph build
    degree: int = 64
    inter_shard_method: str = "exact"
    # ghost staging
    ghost_enabled: bool = False
    ghost_ratio: float = 0.01
    ghost_degree: int | None = None
    ghost_max_iter: int = 8
    ghost_seeds: int = 1
    # direction-guided selection
    dgs_enabled: bool = False
    discard_ratio: float = 0.5
    cooldown_ratio: float = 0.3
    selection: str = "direction"
    # instrumentation
    visit_log: bool = False
    visit_log_rate: float = 1.0
    retained_against: str = "queue"
    # execution
    threads: int = 1
    seed: int = 0
    # paths
    data: str | None = None
    queries: str | None = None
    truth: str | None = None
    index: str | None = None
    out: str | None = None

    def problems(self):
        out = []
        if self.shards < 1:
            out.append(f"shards: must be >= 1, got {self.shards}")
        if self.mode not in ("baseline", "pipelined"):
            out.append(f"mode: must be 'baseline' or 'pipelined', got {self.mode!r}")
        if self.seed_mode not in ("random_fill", "neighbors"):
            out.append(f"seed_mode: must be 'random_fill' or 'neighbors', got {self.seed_mode!r}")
        if self.forward_count < 1:
            out.append(f"forward_count: must be >= 1, got {self.forward_count}")
        if self.stage_budgets is not None:
            if len(self.stage_budgets) != self.shards:
                out.append(f"stage_budgets: need {self.shards} entries, got {len(self.stage_budgets)}")
            if any(b < 1 for b in self.stage_budgets):
                out.append("stage_budgets: every budget must be >= 1")
        if self.degree < 1:
            out.append(f"degree: must be >= 1, got {self.degree}")
        if self.inter_shard_method not in ("exact", "search"):
            out.append(f"inter_shard_method: must be 'exact' or 'search', got {self.inter_shard_method!r}")
        if not 0 < self.ghost_ratio <= 1:
            out.append(f"ghost_ratio: must be in (0, 1], got {self.ghost_ratio}")
        if self.ghost_degree is not None and self.ghost_degree < 1:
            out.append(f"ghost_degree: must be >= 1, got {self.ghost_degree}")
        if not 0 <= self.visit_log_rate <= 1:
            out.append(f"visit_log_rate: must be in [0, 1], got {self.visit_log_rate}")
        if self.retained_against not in ("queue", "topk"):
            out.append(f"retained_against: must be 'queue' or 'topk', got {self.retained_against!r}")
        if self.threads < 1:
            out.append(f"threads: must be >= 1, got {self.threads}")
        try:
            self.to_search_params()
        except ValueError as exc:
            out.extend(str(exc).split(": ", 1)[1].split("; "))
        return out

    def validate(self):
        problems = self.problems()
        if problems:
            raise ConfigError("invalid configuration: " + "; ".join(problems))
        return self

    def to_search_params(self):
        return SearchParams(
            k=self.k,
            l=self.l,
            m=self.m,
            r=self.r,
            max_iter=self.max_iter,
            seed=self.seed,
            dgs=DgsParams(self.discard_ratio, self.cooldown_ratio, self.selection) if self.dgs_enabled else None,
            ghost=GhostParams(True, self.ghost_max_iter, self.ghost_seeds) if self.ghost_enabled else None,
            visited_capacity=self.visited_capacity,
            visit_log=self.visit_log,
        )

    def to_dict(self):
        return asdict(self)


def _known(values, source):
    names = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(values) - names)
    if unknown:
        raise ConfigError(f"{source}: unknown keys {unknown}")
    return values


def load_config_file(path):
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    # allow [search], [ghost], ... tables as pure grouping
    flat = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    return _known(flat, path)


def env_overrides(environ=None):
    environ = os.environ if environ is None else environ
    return {
        name: environ[ENV_PREFIX + name.upper()]
        for name in PATH_FIELDS
        if environ.get(ENV_PREFIX + name.upper())
    }


def build_config(preset=None, path=None, flags=None, environ=None):
    values = {}
    if preset:
        values.update(_known(preset, "preset"))
    if path:
        values.update(load_config_file(path))
    values.update(env_overrides(environ))
    if flags:
        values.update(_known({k: v for k, v in flags.items() if v is not None}, "flags"))
    return RunConfig(**values).validate()
