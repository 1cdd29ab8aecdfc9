"""Experiment configuration: YAML files validated into an ExperimentConfig.

Schema (keys not listed are rejected)::

    experiment: sample | extrema | stats | lqg | kernels     (required)
    domain:                                                    (required unless domain_file)
      shapes: [{kind: rectangle, params: [x0, x1, y0, y1]}
               | {kind: disc, params: [cx, cy, r]}
               | {kind: polygon, params: [[x, y], ...]}]
      holes: [...]                                             (optional, same form)
    domain_file: path to a YAML/JSON file holding a domain mapping
    N: [int, ...]              lattice scales (ladder)
    t: [float, ...]            LQG truncation ladder
    K: int                     triangulation scale
    replicas: int >= 1
    seed: int >= 0             (overridden by --seed)
    threads: int >= 1
    tolerances: {name: float}
    output_dir: path           (overridden by DGFFLAB_OUTPUT_DIR)
    params:
      radius_lattice_units: float     local-maximum radius r (default floor(N^{1/4}))
      floor_centered_height: float    lowest centered height kept for atoms
      thresholds_centered_height: [float]
      grid_cells_per_side: int        LQG grid
      lambdas: [float]
      method: str                     DGFF sampler
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from dgfflab.domain import ContinuumDomain
from dgfflab.errors import ConfigInvalid, DgffError

EXPERIMENTS = ("sample", "extrema", "stats", "lqg", "kernels")
_TOP_KEYS = {"experiment", "domain", "domain_file", "N", "t", "K", "replicas", "seed", "threads", "tolerances", "output_dir", "params"}
_PARAM_KEYS = {
    "radius_lattice_units",
    "floor_centered_height",
    "thresholds_centered_height",
    "grid_cells_per_side",
    "lambdas",
    "method",
}


@dataclass
class ExperimentConfig:
    experiment: str
    domain: dict
    N: list = field(default_factory=lambda: [64])
    t: list = field(default_factory=lambda: [2.0])
    K: int = 4
    replicas: int = 10
    seed: int = 0
    threads: int = 1
    tolerances: dict = field(default_factory=dict)
    output_dir: str | None = None
    params: dict = field(default_factory=dict)

    def canonical(self) -> dict:
        """Mapping that determines the results (output location and thread count excluded)."""
        d = asdict(self)
        d.pop("output_dir")
        d.pop("threads")
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def continuum_domain(self) -> ContinuumDomain:
        return ContinuumDomain.from_dict(self.domain)

    def resolve_output_dir(self) -> Path:
        env = os.environ.get("DGFFLAB_OUTPUT_DIR")
        base = Path(env) if env else Path(self.output_dir or "dgfflab_output")
        return base / self.config_hash()[:12]


def _int(v, path, lo=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigInvalid(path, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigInvalid(path, f"must be >= {lo}, got {v}")
    return v


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigInvalid(path, f"expected a number, got {v!r}")
    return float(v)


def _ladder(v, path, conv):
    items = v if isinstance(v, list) else [v]
    if not items:
        raise ConfigInvalid(path, "ladder must not be empty")
    return [conv(x, f"{path}[{i}]") for i, x in enumerate(items)]


def _load_domain_file(ref: str, base: Path | None) -> dict:
    p = Path(ref)
    if not p.is_absolute() and base is not None:
        p = base / p
    if not p.exists():
        raise ConfigInvalid("domain_file", f"referenced domain spec {str(p)!r} does not exist")
    with open(p) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigInvalid("domain_file", "domain spec must be a mapping")
    return data


def validate(raw, base_dir: Path | None = None) -> ExperimentConfig:
    """Check a parsed mapping against the schema; errors name the offending field path."""
    if not isinstance(raw, dict):
        raise ConfigInvalid("<root>", "configuration must be a mapping")
    raw = copy.deepcopy(raw)
    for k in raw:
        if k not in _TOP_KEYS:
            raise ConfigInvalid(str(k), "unknown key")
    exp = raw.get("experiment")
    if exp is None:
        raise ConfigInvalid("experiment", "missing required field")
    if exp not in EXPERIMENTS:
        raise ConfigInvalid("experiment", f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
    if "domain" in raw and "domain_file" in raw:
        raise ConfigInvalid("domain", "give either domain or domain_file, not both")
    if "domain_file" in raw:
        dom = _load_domain_file(raw["domain_file"], base_dir)
    elif "domain" in raw:
        dom = raw["domain"]
    else:
        raise ConfigInvalid("domain", "missing required field")
    try:
        ContinuumDomain.from_dict(dom)
    except (DgffError, KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid("domain", f"invalid domain: {exc}") from None
    cfg = ExperimentConfig(experiment=exp, domain=dom)
    if "N" in raw:
        cfg.N = _ladder(raw["N"], "N", lambda v, p: _int(v, p, 2))
    if "t" in raw:
        cfg.t = _ladder(raw["t"], "t", lambda v, p: _num(v, p))
        for i, v in enumerate(cfg.t):
            if v < 0:
                raise ConfigInvalid(f"t[{i}]", "must be nonnegative")
    if "K" in raw:
        cfg.K = _int(raw["K"], "K", 1)
    if "replicas" in raw:
        cfg.replicas = _int(raw["replicas"], "replicas", 1)
    if "seed" in raw:
        cfg.seed = _int(raw["seed"], "seed", 0)
    if "threads" in raw:
        cfg.threads = _int(raw["threads"], "threads", 1)
    if "tolerances" in raw:
        tol = raw["tolerances"]
        if not isinstance(tol, dict):
            raise ConfigInvalid("tolerances", "expected a mapping")
        cfg.tolerances = {str(k): _num(v, f"tolerances.{k}") for k, v in tol.items()}
    if "output_dir" in raw:
        if not isinstance(raw["output_dir"], str):
            raise ConfigInvalid("output_dir", "expected a path string")
        cfg.output_dir = raw["output_dir"]
    if "params" in raw:
        prm = raw["params"]
        if not isinstance(prm, dict):
            raise ConfigInvalid("params", "expected a mapping")
        for k in prm:
            if k not in _PARAM_KEYS:
                raise ConfigInvalid(f"params.{k}", "unknown parameter")
        if "radius_lattice_units" in prm and _num(prm["radius_lattice_units"], "params.radius_lattice_units") < 1:
            raise ConfigInvalid("params.radius_lattice_units", "must be >= 1")
        if "grid_cells_per_side" in prm:
            _int(prm["grid_cells_per_side"], "params.grid_cells_per_side", 2)
        if "thresholds_centered_height" in prm:
            _ladder(prm["thresholds_centered_height"], "params.thresholds_centered_height", _num)
        if "lambdas" in prm:
            for i, v in enumerate(_ladder(prm["lambdas"], "params.lambdas", _num)):
                if not 0 < v < 1:
                    raise ConfigInvalid(f"params.lambdas[{i}]", "must lie in (0, 1)")
        cfg.params = prm
    return cfg


def load_config(path, seed: int | None = None, threads: int | None = None) -> ExperimentConfig:
    p = Path(path)
    try:
        with open(p) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigInvalid("<file>", f"config file {str(p)!r} not found") from None
    except yaml.YAMLError as exc:
        raise ConfigInvalid("<file>", f"unparseable YAML: {exc}") from None
    cfg = validate(raw, p.parent)
    if seed is not None:
        cfg.seed = _int(seed, "seed", 0)
    if threads is not None:
        cfg.threads = _int(threads, "threads", 1)
    return cfg
