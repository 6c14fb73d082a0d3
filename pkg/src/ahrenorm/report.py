"""Run configuration, run records and result tables."""

import json
import math
import os
import platform
import time
from dataclasses import dataclass, field

import numpy as np
import scipy

from . import metric as M

SCHEMA_VERSION = 1
OUT_ENV = "AHRENORM_OUT"

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

_TOP_KEYS = {"schema_version", "metric", "reference", "grid", "tolerances", "schedule", "seed", "output",
             "suite", "extra_metrics"}
_TOL_DEFAULTS = {"newton": 1e-10, "mu": 1e-7, "mass": 1e-8, "drift": 1e-6}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


@dataclass
class RunConfig:
    metric: dict
    reference: dict = field(default_factory=dict)
    grid: dict = field(default_factory=lambda: {"R_max": 20.0, "nodes": 193})
    tolerances: dict = field(default_factory=lambda: dict(_TOL_DEFAULTS))
    schedule: dict = field(default_factory=dict)
    seed: int = 0
    output: dict = field(default_factory=dict)
    suite: str = ""
    extra_metrics: list = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"config: unknown key {sorted(unknown)[0]!r}")
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {version!r}")
        metric = data.get("metric", {"name": "hyperbolic", "params": {"n": 3}})
        if not isinstance(metric, dict) or "name" not in metric:
            raise ConfigError("metric: needs a 'name' entry")
        grid = {"R_max": 20.0, "nodes": 193, **data.get("grid", {})}
        tol = {**_TOL_DEFAULTS, **data.get("tolerances", {})}
        cfg = cls(metric=metric, reference=dict(data.get("reference", {})), grid=grid, tolerances=tol,
                  schedule=dict(data.get("schedule", {})), seed=int(data.get("seed", 0)),
                  output=dict(data.get("output", {})), suite=str(data.get("suite", "")),
                  extra_metrics=list(data.get("extra_metrics", [])), schema_version=version)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: not valid JSON ({exc})") from None
        return cls.from_dict(data)

    def validate(self):
        try:
            R = float(self.grid["R_max"])
            nodes = int(self.grid["nodes"])
        except (TypeError, ValueError):
            raise ConfigError("grid: R_max and nodes must be numbers") from None
        if not R >= 5.0:
            raise ConfigError(f"grid.R_max: must be at least 5, got {R}")
        if nodes < 128:
            raise ConfigError(f"grid.nodes: must be at least 128, got {nodes}")
        for k, v in self.tolerances.items():
            if not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"tolerances.{k}: must be strictly positive, got {v!r}")
        for k in ("dt", "t_end", "record_every"):
            if k in self.schedule and not float(self.schedule[k]) > 0:
                raise ConfigError(f"schedule.{k}: must be positive")
        params = self.metric.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("metric.params: expected an object")
        profile = params.get("profile", {})
        f = params.get("file") or (profile.get("file") if isinstance(profile, dict) else None)
        if f and not os.path.exists(f):
            raise ConfigError(f"metric.params: profile file {f!r} does not exist")

    def scaled(self, factor):
        if not factor > 0:
            raise ConfigError("--tol-scale: must be positive")
        out = RunConfig(**{**self.__dict__})
        out.tolerances = {k: v * factor for k, v in self.tolerances.items()}
        return out

    def to_dict(self):
        return {k: getattr(self, k) for k in ("schema_version", "metric", "reference", "grid", "tolerances",
                                               "schedule", "seed", "output", "suite", "extra_metrics")}

    # -- builders ---------------------------------------------------------
    def build_metric(self, spec=None):
        spec = self.metric if spec is None else spec
        params = dict(spec.get("params", {}))
        params.setdefault("r_model", float(self.grid["R_max"]))
        try:
            return M.make_catalog_metric(spec["name"], params)
        except KeyError as exc:
            raise ConfigError(f"metric.params: missing {exc.args[0]!r}") from None

    def build_reference(self, g):
        n = int(self.reference.get("n", g.n))
        return M.ReferenceModel(n, float(self.reference.get("cone_factor", 1.0)))


def output_dir(cli_value=None, cfg=None):
    path = cli_value or (cfg.output.get("dir") if cfg else None) or os.environ.get(OUT_ENV) or "runs"
    os.makedirs(path, exist_ok=True)
    return path


@dataclass
class RunRecord:
    command: str
    config: dict
    outputs: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    table: list = field(default_factory=list)
    exit_code: int = EXIT_OK
    error: str = ""
    wall_clock: float = 0.0
    version: str = ""
    files: list = field(default_factory=list)

    def to_json(self):
        body = {"command": self.command, "version": self.version, "python": platform.python_version(),
                "numpy": np.__version__, "scipy": scipy.__version__,
                "config": self.config, "outputs": self.outputs, "verdicts": self.verdicts,
                "table": [row.as_dict() for row in self.table], "exit_code": self.exit_code,
                "error": self.error, "wall_clock": self.wall_clock, "files": self.files}
        return json.dumps(clean(body), indent=2, sort_keys=True)

    def write(self, directory, stem):
        path = os.path.join(directory, f"{stem}.json")
        self.files.append(path)
        with open(path, "w") as fh:
            fh.write(self.to_json())
        return path


@dataclass
class Row:
    check: str
    expected: str
    got: float
    tol: float
    passed: bool
    flagged: bool = False

    def as_dict(self):
        return {"check": self.check, "expected": self.expected, "got": self.got, "tol": self.tol,
                "pass": self.passed, "flagged": self.flagged}


def format_table(rows):
    head = ("check", "expected", "got", "tol", "pass")
    body = [(r.check, r.expected, _fmt(r.got), _fmt(r.tol), "flagged" if r.flagged else ("yes" if r.passed else "NO"))
            for r in rows]
    widths = [max(len(h), *(len(b[i]) for b in body)) if body else len(h) for i, h in enumerate(head)]
    line = "  ".join(h.ljust(w) for h, w in zip(head, widths))
    out = [line, "  ".join("-" * w for w in widths)]
    out += ["  ".join(c.ljust(w) for c, w in zip(b, widths)) for b in body]
    return "\n".join(out)


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return "-"
    return f"{x:.6g}" if isinstance(x, float) else str(x)


def clean(obj):
    """Make nested results JSON-safe: arrays to lists, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, np.generic):
        return clean(obj.item())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def write_csv(path, columns):
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with open(path, "w") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0
        return False
