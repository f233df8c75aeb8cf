"""Experiment configuration: a single JSON document, validated field by field.

Every problem is reported as ``section.key: message``. Unknown keys are
errors so that typos never silently fall back to defaults.
"""

from dataclasses import dataclass
import json
import math
from pathlib import Path

from .data import PartitionPlan
from .federation import FederationConfig, PrivacyParams
from .heat_kernel import ESTIMATORS
from .local import SolverConfig


class ConfigError(ValueError):
    """Schema violations; ``problems`` holds one message per field."""

    def __init__(self, problems):
        super().__init__("\n".join(problems))
        self.problems = list(problems)


def _int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _dims(x):
    return isinstance(x, list) and len(x) > 0 and all(_int(d) and d >= 1 for d in x)


# key: (default, check, message); a default of None means optional
SCHEMA = {
    "synthetic": {
        "n": (200, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "c_true": (3, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "view_dims": ([4, 5, 6], _dims, "must be a non-empty list of integers >= 1"),
        "separation": (8.0, lambda x: _num(x) and x > 0, "must be > 0"),
        "scale": (1.0, lambda x: _num(x) and x > 0, "must be > 0"),
    },
    "partition": {
        "clients": (1, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "strategy": ("iid", lambda x: x in ("iid", "dirichlet"), "must be 'iid' or 'dirichlet'"),
        "concentration": (0.5, lambda x: _num(x) and x > 0, "must be > 0"),
    },
    "solver": {
        "c": (2, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "m": (2.0, lambda x: _num(x) and x > 1, "must satisfy m > 1"),
        "alpha": (2.0, lambda x: _num(x) and x > 1, "must satisfy alpha > 1"),
        "tol": (1e-6, lambda x: _num(x) and x > 0, "must be > 0"),
        "max_iters": (100, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "estimator": ("minmax", lambda x: x in ESTIMATORS, f"must be one of {list(ESTIMATORS)}"),
        "epsilon": (1e-12, lambda x: _num(x) and x > 0, "must be > 0"),
        "center_sweeps": (1, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
    },
    "tensor": {
        "r2": (None, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "r3": (None, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "theta": (1.0, lambda x: _num(x) and x > 0, "must be > 0"),
    },
    "federation": {
        "enabled": (True, lambda x: isinstance(x, bool), "must be true or false"),
        "rounds": (20, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "local_epochs": (5, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
        "tau": (1.0, lambda x: _num(x) and x >= 0, "must be >= 0"),
        "gamma": (0.1, lambda x: _num(x) and x >= 0, "must be >= 0"),
        "eta": (0.1, lambda x: _num(x) and x >= 0, "must be >= 0"),
        "beta": (0.1, lambda x: _num(x) and x > 0, "must be > 0"),
        "lambda": (0.5, lambda x: _num(x) and 0 <= x <= 1, "must lie in [0, 1]"),
        "rho": (0.5, lambda x: _num(x) and 0 <= x <= 1, "must lie in [0, 1]"),
        "adaptive": (True, lambda x: isinstance(x, bool), "must be true or false"),
        "workers": (1, lambda x: _int(x) and x >= 1, "must be an integer >= 1"),
    },
    "privacy": {
        "enabled": (False, lambda x: isinstance(x, bool), "must be true or false"),
        "epsilon": (1.0, lambda x: _num(x) and x > 0, "must be > 0"),
        "delta": (1e-5, lambda x: _num(x) and 0 < x < 1, "must lie in (0, 1)"),
        "clip_norm": (1.0, lambda x: _num(x) and x > 0, "must be > 0"),
    },
}
TOP_LEVEL = ("mode", "seed", "output_dir", "dataset", "partition", "solver", "tensor",
             "federation", "privacy")


def parse_section(raw, name, path, problems):
    schema = SCHEMA[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        problems.append(f"{path}: must be an object")
        raw = {}
    out = {}
    for key in raw:
        if key not in schema:
            problems.append(f"{path}.{key}: unknown key")
    for key, (default, check, message) in schema.items():
        if key in raw:
            if check(raw[key]):
                out[key] = raw[key]
            else:
                problems.append(f"{path}.{key}: {message} (got {raw[key]!r})")
                out[key] = default
        else:
            out[key] = default
    return out


@dataclass
class ExperimentConfig:
    mode: str
    seed: int
    output_dir: str
    dataset: dict
    partition: dict
    solver: dict
    tensor: dict
    federation: dict
    privacy: dict
    base_dir: Path = Path(".")

    def solver_config(self, **overrides):
        s = dict(self.solver, seed=self.seed)
        s.update(overrides)
        return SolverConfig(**s)

    def privacy_params(self):
        p = self.privacy
        return PrivacyParams(p["enabled"], p["epsilon"], p["delta"], p["clip_norm"], self.seed)

    def partition_plan(self):
        p = self.partition
        return PartitionPlan(p["strategy"], p["concentration"], self.seed)

    @property
    def ranks(self):
        if self.mode != "tensorized":
            return None
        return (self.tensor["r2"], self.tensor["r3"])

    def federation_config(self):
        f = self.federation
        return FederationConfig(self.solver_config(), self.mode, self.ranks, f["rounds"],
                                f["local_epochs"], f["tau"], f["gamma"], f["eta"], f["beta"],
                                f["lambda"], f["rho"], f["adaptive"], self.privacy_params(),
                                f["workers"])

    def manifest_path(self):
        path = Path(self.dataset["manifest"])
        return path if path.is_absolute() else self.base_dir / path


def _dataset_shape(dataset, base_dir):
    """``(n, dims)`` when knowable without reading CSV payloads."""
    if "synthetic" in dataset:
        syn = dataset["synthetic"]
        return syn["n"], syn["view_dims"]
    path = Path(dataset["manifest"])
    path = path if path.is_absolute() else base_dir / path
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
        dims = [int(v["dim"]) for v in manifest["views"]]
    except (OSError, ValueError, KeyError, TypeError):
        return None, None
    return None, dims


def parse_config(raw, base_dir="."):
    """Validate a decoded JSON document; raises :class:`ConfigError`."""
    problems = []
    if not isinstance(raw, dict):
        raise ConfigError(["<root>: config must be a JSON object"])
    for key in raw:
        if key not in TOP_LEVEL:
            problems.append(f"{key}: unknown key")
    mode = raw.get("mode", "dense")
    if mode not in ("dense", "tensorized"):
        problems.append(f"mode: must be 'dense' or 'tensorized' (got {mode!r})")
    seed = raw.get("seed", 0)
    if not (_int(seed) and seed >= 0):
        problems.append(f"seed: must be a non-negative integer (got {seed!r})")
        seed = 0
    output_dir = raw.get("output_dir", "output")
    if not isinstance(output_dir, str) or not output_dir:
        problems.append("output_dir: must be a non-empty string")
        output_dir = "output"

    ds_raw = raw.get("dataset")
    dataset = {}
    if not isinstance(ds_raw, dict) or len(ds_raw) != 1 or not ({"synthetic", "manifest"} & set(ds_raw)):
        problems.append("dataset: must hold exactly one of 'synthetic' or 'manifest'")
        dataset["synthetic"] = parse_section({}, "synthetic", "dataset.synthetic", [])
    elif "synthetic" in ds_raw:
        dataset["synthetic"] = parse_section(ds_raw["synthetic"], "synthetic", "dataset.synthetic", problems)
    else:
        if not isinstance(ds_raw["manifest"], str):
            problems.append("dataset.manifest: must be a path string")
        dataset["manifest"] = str(ds_raw["manifest"])

    sections = {name: parse_section(raw.get(name), name, name, problems)
                for name in ("partition", "solver", "tensor", "federation", "privacy")}
    base_dir = Path(base_dir)
    cfg = ExperimentConfig(mode if mode in ("dense", "tensorized") else "dense", seed,
                           output_dir, dataset, base_dir=base_dir, **sections)

    # cross-field constraints
    n, dims = _dataset_shape(dataset, base_dir)
    c = cfg.solver["c"]
    clients = cfg.partition["clients"]
    if n is not None:
        if clients > n:
            problems.append(f"partition.clients: {clients} exceeds n={n}")
        elif c > n // clients:
            problems.append(f"solver.c: {c} clusters exceed the smallest client size {n // clients}")
    if "synthetic" in dataset and dataset["synthetic"]["c_true"] > dataset["synthetic"]["n"]:
        problems.append("dataset.synthetic.c_true: must not exceed n")
    if mode == "tensorized":
        r2, r3 = cfg.tensor["r2"], cfg.tensor["r3"]
        if r2 is None:
            problems.append("tensor.r2: required in tensorized mode")
        if r3 is None:
            problems.append("tensor.r3: required in tensorized mode")
        if dims is not None:
            big_d, s = max(dims), len(dims)
            if r2 is not None and r2 > big_d:
                problems.append(f"tensor.r2: rank constraint r2 <= D violated ({r2} > D={big_d})")
            if r3 is not None and r3 > s:
                problems.append(f"tensor.r3: rank constraint r3 <= s violated ({r3} > s={s})")
    if not cfg.federation["enabled"] and clients != 1:
        problems.append("federation.enabled: false requires partition.clients == 1")
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path):
    """Read and validate a config file. Unreadable or non-JSON files raise ConfigError."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError([f"<file>: cannot read {path}: {exc.strerror or exc}"]) from None
    except json.JSONDecodeError as exc:
        raise ConfigError([f"<file>: {path} is not valid JSON: {exc}"]) from None
    return parse_config(raw, path.parent)
