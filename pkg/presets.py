smoke = {
    "degree": 16,
    "k": 10,
    "l": 32,
    "m": 32,
    "r": 4,
    "max_iter": 32,
}

desk = {
    "degree": 32,
    "k": 10,
    "l": 64,
    "m": 64,
    "r": 8,
    "max_iter": 48,
}

ghost = {
    **desk,
    "ghost_enabled": True,
    "ghost_ratio": 0.01,
    "ghost_max_iter": 4,
    "ghost_seeds": 8,
}

dgs = {
    **desk,
    "dgs_enabled": True,
    "discard_ratio": 0.5,
    "cooldown_ratio": 0.3,
    "selection": "direction",
}

dgs_random = {
    **dgs,
    "selection": "random",
}

pipelined_4 = {
    **desk,
    "shards": 4,
    "mode": "pipelined",
}

all_presets = {
    "smoke": smoke,
    "desk": desk,
    "ghost": ghost,
    "dgs": dgs,
    "dgs-random": dgs_random,
    "pipelined-4": pipelined_4,
}

# synthetic data shape for `gen`; blobs overlap enough that the kNN graph stays connected
datasets = {
    "smoke": {"n": 10_000, "nq": 1_000, "dim": 16, "clusters": 64, "spread": 0.25},
    "desk": {"n": 100_000, "nq": 1_000, "dim": 32, "clusters": 256, "spread": 0.2},
}


def get_preset(name):
    try:
        return dict(all_presets[name])
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(all_presets)}") from None


def get_dataset_shape(name):
    try:
        return dict(datasets[name])
    except KeyError:
        raise KeyError(f"unknown dataset shape {name!r}; choose from {sorted(datasets)}") from None


def list_presets():
    catalog = []
    for name, values in all_presets.items():
        catalog.append({
            "name": name,
            "mode": values.get("mode", "baseline"),
            "shards": values.get("shards", 1),
            "ghost": values.get("ghost_enabled", False),
            "dgs": values.get("dgs_enabled", False),
        })
    return catalog
