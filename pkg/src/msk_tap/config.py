"""JSON experiment configuration.

A config names a model (explicitly or through a preset), the parameters of
the command to run, and optionally a seed and an output path::

    {
      "preset": "bipartite",
      "model": {"beta_over_beta0": 0.5, "h": 0.3, "n": 12},
      "params": {"n_disorder": 20, "chain": {"n_sweeps": 2000}},
      "seed": 1234
    }

Unknown keys anywhere are rejected with the dotted path of the offending field.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, InvalidSpec, MSKError
from .mcmc import ChainConfig
from .model import ModelSpec
from .order_params import critical_temperatures
from .presets import PRESETS

TOP_KEYS = {"preset", "model", "params", "seed", "output"}
MODEL_KEYS = {"lambdas", "delta2", "beta", "beta_over_beta0", "h", "n"}
CHAIN_KEYS = {"n_sweeps", "burn_in_sweeps", "thin", "n_replicas", "rao_blackwell"}

PARAM_DEFAULTS: dict[str, Any] = {
    "n_list": None,
    "n_disorder": 20,
    "estimator": "mcmc",
    "gamma": None,
    "k": 1,
    "species": None,
    "n_eta": 500,
    "seeds": None,
    "damping": 1.0,
    "tol": 1e-13,
    "max_iter": 10_000,
    "n_nodes": 61,
    "tap_tol": 1e-10,
    "tap_max_iter": 1000,
    "chain": None,
}


@dataclass
class ExperimentConfig:
    model: ModelSpec
    params: dict[str, Any]
    preset: str | None = None
    beta_over_beta0: float | None = None
    seed: int | None = None
    output: str | None = None
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    def chain(self, default: ChainConfig, seed: int) -> ChainConfig:
        c = dict(default.__dict__)
        c.update(self.params.get("chain") or {})
        c["seed"] = seed
        return ChainConfig(**c)

    def echo(self, seed: int | None = None) -> dict[str, Any]:
        """A config dict that reproduces this run exactly (seed resolved)."""
        out = copy.deepcopy(self.raw)
        if seed is not None:
            out["seed"] = int(seed)
        return out


def _reject_unknown(d: dict, allowed: set[str], path: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        raise ConfigError(f"{path}.{extra[0]}" if path else extra[0], "unknown field")


def _number(value, path: str, *, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(path, f"expected a finite number, got {value!r}")
    if nonneg and value < 0:
        raise ConfigError(path, f"must be >= 0, got {value}")
    return float(value)


def _int(value, path: str, *, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(path, f"expected an integer >= {minimum}, got {value!r}")
    return value


def _model(raw: dict) -> tuple[ModelSpec, str | None, float | None]:
    preset = raw.get("preset")
    if preset is not None and preset not in PRESETS:
        raise ConfigError("preset", f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
    m = raw.get("model", {})
    if not isinstance(m, dict):
        raise ConfigError("model", "expected an object")
    _reject_unknown(m, MODEL_KEYS, "model")
    base = PRESETS[preset] if preset else {}
    for key in ("lambdas", "delta2"):
        if key not in m and key not in base:
            raise ConfigError(f"model.{key}", "missing field (give it or name a preset)")
    lambdas = m.get("lambdas", base.get("lambdas"))
    delta2 = m.get("delta2", base.get("delta2"))
    try:
        lam = np.array(lambdas, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError("model.lambdas", "expected a list of numbers") from None
    if lam.ndim != 1 or lam.size < 1:
        raise ConfigError("model.lambdas", "expected a non-empty list of numbers")
    if abs(lam.sum() - 1.0) > 1e-12:
        raise ConfigError("model.lambdas", f"must sum to 1 (sum is {lam.sum():.15g})")
    if lam.size > 1 and np.any((lam <= 0) | (lam >= 1)):
        raise ConfigError("model.lambdas", "every entry must lie in (0, 1)")
    try:
        d2 = np.array(delta2, dtype=np.float64)
    except (TypeError, ValueError):
        raise ConfigError("model.delta2", "expected a square array of numbers") from None
    if d2.shape != (lam.size, lam.size):
        raise ConfigError("model.delta2", f"expected shape {(lam.size, lam.size)}, got {d2.shape}")
    if not np.array_equal(d2, d2.T):
        raise ConfigError("model.delta2", "must be symmetric")
    if np.any(d2 < 0):
        raise ConfigError("model.delta2", "entries are variances and must be >= 0")

    if ("beta" in m) == ("beta_over_beta0" in m):
        raise ConfigError("model.beta", "give exactly one of beta and beta_over_beta0")
    h = _number(m.get("h", 0.0), "model.h", nonneg=True)
    n = _int(m.get("n", 2), "model.n", minimum=1)
    ratio = None
    if "beta" in m:
        beta = _number(m["beta"], "model.beta", nonneg=True)
    else:
        ratio = _number(m["beta_over_beta0"], "model.beta_over_beta0", nonneg=True)
    try:
        if ratio is None:
            spec = ModelSpec(lam, d2, beta, h, n)
        else:
            spec = ModelSpec(lam, d2, 0.0, h, n)
            spec = spec.replace(beta=ratio * critical_temperatures(spec).beta_0)
    except InvalidSpec as exc:
        raise ConfigError("model", str(exc)) from exc
    except MSKError as exc:
        raise ConfigError("model.beta_over_beta0", str(exc)) from exc
    return spec, preset, ratio


def _params(raw) -> dict[str, Any]:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("params", "expected an object")
    _reject_unknown(raw, set(PARAM_DEFAULTS), "params")
    p = {**PARAM_DEFAULTS, **raw}
    if p["n_list"] is not None:
        if not isinstance(p["n_list"], list) or not p["n_list"]:
            raise ConfigError("params.n_list", "expected a non-empty list of sizes")
        for i, v in enumerate(p["n_list"]):
            _int(v, f"params.n_list[{i}]", minimum=1)
    for key in ("n_disorder", "k", "n_eta", "max_iter", "n_nodes", "tap_max_iter"):
        _int(p[key], f"params.{key}", minimum=1)
    if p["species"] is not None:
        _int(p["species"], "params.species")
    for key in ("damping", "tol", "tap_tol"):
        _number(p[key], f"params.{key}", nonneg=True)
    if p["gamma"] is not None:
        _number(p["gamma"], "params.gamma", nonneg=True)
    if p["estimator"] not in ("exact", "mcmc"):
        raise ConfigError("params.estimator", "must be 'exact' or 'mcmc'")
    if p["seeds"] is not None:
        if not isinstance(p["seeds"], list) or not p["seeds"]:
            raise ConfigError("params.seeds", "expected a non-empty list of seeds")
        for i, v in enumerate(p["seeds"]):
            _int(v, f"params.seeds[{i}]")
    if p["chain"] is not None:
        if not isinstance(p["chain"], dict):
            raise ConfigError("params.chain", "expected an object")
        _reject_unknown(p["chain"], CHAIN_KEYS, "params.chain")
        for key in ("n_sweeps", "thin", "n_replicas"):
            if key in p["chain"]:
                _int(p["chain"][key], f"params.chain.{key}", minimum=1)
        if p["chain"].get("burn_in_sweeps") is not None:
            _int(p["chain"]["burn_in_sweeps"], "params.chain.burn_in_sweeps")
    return p


def parse_config(raw: dict[str, Any]) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("$", "config must be a JSON object")
    _reject_unknown(raw, TOP_KEYS, "")
    spec, preset, ratio = _model(raw)
    seed = raw.get("seed")
    if seed is not None:
        _int(seed, "seed")
        if seed >= 1 << 64:
            raise ConfigError("seed", "must fit in 64 bits")
    output = raw.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("output", "expected a path string")
    return ExperimentConfig(spec, _params(raw.get("params")), preset, ratio, seed, output, copy.deepcopy(raw))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError("$", f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("$", f"invalid JSON: {exc}") from None
    return parse_config(raw)


def config_hash(raw: dict[str, Any]) -> str:
    blob = json.dumps(raw, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
