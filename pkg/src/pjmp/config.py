"""Versioned JSON run configurations and the observables they describe."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ModelError
from .model import NeuronModel, validate_model

SCHEMA = 1
CHECKS = ("theorem_general", "theorem_recurrent", "corollaries", "invariant", "identities",
          "montecarlo_crosscheck")
OBSERVABLE_TYPES = ("random", "coordinate", "indicator", "eigenfunction", "file")
DEFAULT_TIMES = [0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0]


def bundled_configs() -> list:
    return sorted(p.name[:-5] for p in resources.files("pjmp.configs").iterdir() if p.name.endswith(".json"))


def _require(cond, msg, path):
    if not cond:
        raise ConfigError(msg, path)


def _number(v, path, positive=False):
    _require(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v), "must be a number", path)
    if positive:
        _require(v > 0, "must be > 0", path)
    return v


def _times(raw, path="times"):
    if isinstance(raw, dict):
        _require(set(raw) == {"log_grid"}, "expected a list or {'log_grid': {...}}", path)
        g = raw["log_grid"]
        _require(isinstance(g, dict) and set(g) == {"start", "stop", "num"}, "needs start, stop, num", f"{path}.log_grid")
        lo = _number(g["start"], f"{path}.log_grid.start", positive=True)
        hi = _number(g["stop"], f"{path}.log_grid.stop", positive=True)
        n = g["num"]
        _require(isinstance(n, int) and n >= 1, "must be a positive integer", f"{path}.log_grid.num")
        return [float(t) for t in np.geomspace(lo, hi, n)]
    _require(isinstance(raw, list) and raw, "must be a non-empty list", path)
    return [float(_number(t, f"{path}[{k}]", positive=True)) for k, t in enumerate(raw)]


@dataclass
class ObservableSpec:
    type: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw, path) -> "ObservableSpec":
        _require(isinstance(raw, dict), "must be an object", path)
        extra = set(raw) - {"type", "params", "seed"}
        _require(not extra, f"unknown keys {sorted(extra)}", path)
        kind = raw.get("type")
        _require(kind in OBSERVABLE_TYPES, f"type must be one of {list(OBSERVABLE_TYPES)}", f"{path}.type")
        params = raw.get("params", {})
        _require(isinstance(params, dict), "must be an object", f"{path}.params")
        seed = raw.get("seed", 0)
        _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0, "must be a non-negative integer",
                 f"{path}.seed")
        if kind == "random":
            count = params.get("count", 1)
            _require(isinstance(count, int) and count >= 0, "must be a non-negative integer", f"{path}.params.count")
        if kind == "file":
            _require(isinstance(params.get("path"), str), "needs a 'path' string", f"{path}.params.path")
        return cls(kind, params, seed)

    def to_dict(self) -> dict:
        return {"type": self.type, "params": self.params, "seed": self.seed}


@dataclass
class RunConfig:
    """One model, a start state and everything needed to run every command."""

    model: dict
    initial_state: list
    times: list = field(default_factory=lambda: list(DEFAULT_TIMES))
    observables: list = field(default_factory=list)
    checks: list = field(default_factory=lambda: list(CHECKS[:5]))
    engine: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    base_dir: Path = field(default=Path("."), compare=False, repr=False)
    _model: NeuronModel | None = field(default=None, compare=False, repr=False)

    @property
    def network(self) -> NeuronModel:
        if self._model is None:
            self._model = validate_model(self.model)
        return self._model

    @property
    def tol(self) -> float:
        return float(self.engine.get("tol", 1e-12))

    @property
    def max_states(self) -> int:
        return int(self.engine.get("max_states", 200_000))

    @property
    def per_decade(self) -> int:
        return int(self.engine.get("per_decade", 64))

    @property
    def n_paths(self) -> int:
        return int(self.mc.get("n_paths", 100_000))

    @property
    def mc_seed(self) -> int:
        return int(self.mc.get("seed", 0))

    @property
    def mc_observables(self) -> list:
        raw = self.mc.get("observables", [{"type": "coordinate"}])
        return [ObservableSpec.from_dict(o, f"mc.observables[{k}]") for k, o in enumerate(raw)]

    @property
    def mc_times(self) -> list:
        return list(self.mc.get("times", self.times))

    @classmethod
    def from_dict(cls, raw, base_dir=".") -> "RunConfig":
        _require(isinstance(raw, dict), "top level must be an object", "config")
        _require(raw.get("schema") == SCHEMA, f"schema must be {SCHEMA}", "schema")
        known = {"schema", "model", "initial_state", "times", "observables", "checks", "engine", "mc", "output"}
        extra = set(raw) - known
        _require(not extra, f"unknown keys {sorted(extra)}", "config")
        _require("model" in raw, "missing", "model")
        _require("initial_state" in raw, "missing", "initial_state")
        try:
            model = validate_model(raw["model"])
        except ModelError as exc:
            field_path = f"model.{exc.field}" if exc.field and exc.field != "model" else "model"
            raise ConfigError(str(exc).split(": ", 1)[-1], field_path) from exc
        x0 = raw["initial_state"]
        _require(isinstance(x0, list) and len(x0) == model.n_neurons,
                 f"must be a list of {model.n_neurons} potentials", "initial_state")
        for k, v in enumerate(x0):
            _number(v, f"initial_state[{k}]")
            _require(0 <= v <= model.m, f"must lie in [0, {model.m}]", f"initial_state[{k}]")
        times = _times(raw.get("times", DEFAULT_TIMES))
        obs = raw.get("observables", [])
        _require(isinstance(obs, list), "must be a list", "observables")
        observables = [ObservableSpec.from_dict(o, f"observables[{k}]") for k, o in enumerate(obs)]
        checks = raw.get("checks", list(CHECKS[:5]))
        _require(isinstance(checks, list) and all(c in CHECKS for c in checks),
                 f"entries must be among {list(CHECKS)}", "checks")
        engine = raw.get("engine", {})
        _require(isinstance(engine, dict), "must be an object", "engine")
        _require(set(engine) <= {"tol", "max_states", "per_decade"}, "unknown keys", "engine")
        if "tol" in engine:
            _number(engine["tol"], "engine.tol", positive=True)
        for key in ("max_states", "per_decade"):
            if key in engine:
                _require(isinstance(engine[key], int) and engine[key] > 0, "must be a positive integer", f"engine.{key}")
        mc = raw.get("mc", {})
        _require(isinstance(mc, dict), "must be an object", "mc")
        mc = dict(mc)
        _require(set(mc) <= {"n_paths", "seed", "times", "observables"}, "unknown keys", "mc")
        if "n_paths" in mc:
            _require(isinstance(mc["n_paths"], int) and mc["n_paths"] >= 2, "must be an integer >= 2", "mc.n_paths")
        if "seed" in mc:
            _require(isinstance(mc["seed"], int) and mc["seed"] >= 0, "must be a non-negative integer", "mc.seed")
        if "times" in mc:
            mc = dict(mc, times=_times(mc["times"], "mc.times"))
        if "observables" in mc:
            _require(isinstance(mc["observables"], list), "must be a list", "mc.observables")
            mc["observables"] = [ObservableSpec.from_dict(o, f"mc.observables[{k}]").to_dict()
                                 for k, o in enumerate(mc["observables"])]
        output = raw.get("output", {})
        _require(isinstance(output, dict), "must be an object", "output")
        cfg = cls(model.to_dict(), list(x0), times, observables, list(checks), dict(engine), dict(mc),
                  dict(output), Path(base_dir), model)
        for k, o in enumerate(observables):
            if o.type == "file":
                _require(cfg.resolve(o.params["path"]).is_file(), "file not found", f"observables[{k}].params.path")
        return cfg

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "model": self.model,
            "initial_state": self.initial_state,
            "times": self.times,
            "observables": [o.to_dict() for o in self.observables],
            "checks": self.checks,
            "engine": self.engine,
            "mc": self.mc,
            "output": self.output,
        }


def load_config(source) -> RunConfig:
    """Read a config file, or a bundled config by name (e.g. ``"pair_symmetric"``)."""
    path = Path(source)
    if path.is_file():
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})", str(path)) from exc
        return RunConfig.from_dict(raw, path.parent)
    name = str(source)
    if name in bundled_configs():
        raw = json.loads(resources.files("pjmp.configs").joinpath(f"{name}.json").read_text())
        return RunConfig.from_dict(raw, ".")
    raise ConfigError(f"no such file or bundled config {name!r}", "--config")


def build_observables(cert, specs, base_dir=".") -> tuple:
    """``(ids, F)`` with one column of ``F`` per observable on the states of ``cert.space``."""
    from .engine import spectral_gap

    sp = cert.space
    S = sp.n_states
    ids, cols = [], []
    for k, spec in enumerate(specs):
        p = spec.params
        if spec.type == "random":
            rng = np.random.default_rng(spec.seed)
            for j in range(p.get("count", 1)):
                ids.append(f"random[{spec.seed}:{j}]")
                cols.append(rng.standard_normal(S))
        elif spec.type == "coordinate":
            which = [p["index"]] if "index" in p else range(sp.states.shape[1])
            for j in which:
                _require(0 <= j < sp.states.shape[1], "neuron index out of range", f"observables[{k}].params.index")
                ids.append(f"coordinate[{j}]")
                cols.append(np.array(sp.states[:, j]))
        elif spec.type == "indicator":
            which = [p["state"]] if "state" in p else range(S)
            for u in which:
                _require(0 <= u < S, "state index out of range", f"observables[{k}].params.state")
                e = np.zeros(S)
                e[u] = 1.0
                ids.append(f"indicator[{u}]")
                cols.append(e)
        elif spec.type == "eigenfunction":
            if cert.pi is not None and np.count_nonzero(cert.pi) > 1:
                ids.append("eigenfunction")
                cols.append(spectral_gap(cert.Q, cert.pi)[1])
        elif spec.type == "file":
            path = Path(p["path"])
            path = path if path.is_absolute() else Path(base_dir) / path
            vals = json.loads(Path(path).read_text()) if str(path).endswith(".json") else np.loadtxt(path, delimiter=",")
            vals = np.asarray(vals, dtype=float).ravel()
            _require(vals.shape == (S,), f"needs {S} values, one per state", f"observables[{k}].params.path")
            ids.append(f"file[{path.name}]")
            cols.append(vals)
    F = np.array(cols).T if cols else np.zeros((S, 0))
    return ids, F
