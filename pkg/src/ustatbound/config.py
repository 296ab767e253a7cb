"""Run configuration: JSON schema, validation and command-line overrides.

Keys::

    model.name | model.kernels, model.params.{t, r, A, B, D}
    C                      target covariance (default: identity)
    seeds.root             unsigned 64-bit root seed
    budgets.{nodes_per_dim, mc_samples, replicates, tensor_dim_cap}
    sweep.t                strictly increasing list of intensity scales
    flags.{wiring, paper_literal}
    out.path
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import WIRINGS
from .model import ModelError, UStatModel, model_from_dict
from .quadrature import IntegrationBudget

U64 = 2 ** 64
KNOWN_KEYS = {"model", "C", "seeds", "budgets", "sweep", "flags", "out"}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    model: dict
    C: Optional[list] = None
    seed: int = 0
    budget: IntegrationBudget = field(default_factory=IntegrationBudget)
    replicates: int = 10_000
    sweep: list = field(default_factory=list)
    wiring: str = "expansion"
    paper_literal: bool = False
    out: Optional[str] = None

    def build_model(self, t: Optional[float] = None) -> UStatModel:
        spec = {key: value for key, value in self.model.items() if key != "params"}
        params = dict(self.model.get("params", {}))
        if t is not None:
            params["t"] = t
        spec["params"] = params
        try:
            model = model_from_dict(spec)
        except (ModelError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad model spec: {exc}") from exc
        if self.C is not None:
            C = np.asarray(self.C, dtype=float)
            if C.shape != (model.dimension, model.dimension):
                raise ConfigError(f"C must be {model.dimension}x{model.dimension}, got shape {C.shape}")
            model = model.with_target(C)
        return model

    def to_dict(self) -> dict:
        """Everything needed to reproduce an output, minus the output path."""
        budgets = dict(self.budget.to_dict(), replicates=self.replicates)
        out = {
            "model": self.model,
            "seeds": {"root": self.seed},
            "budgets": budgets,
            "flags": {"wiring": self.wiring, "paper_literal": self.paper_literal},
        }
        if self.C is not None:
            out["C"] = self.C
        if self.sweep:
            out["sweep"] = {"t": self.sweep}
        return out


def _positive_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value) or value < 1:
        raise ConfigError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _seed(value) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not 0 <= value < U64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {value!r}")
    return value


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model = data.get("model")
    if not isinstance(model, dict) or not ("name" in model or "kernels" in model):
        raise ConfigError("model.name (or an inline model.kernels table) is required")
    if "params" in model and not isinstance(model["params"], dict):
        raise ConfigError("model.params must be an object")

    C = data.get("C")
    if C is not None:
        try:
            arr = np.asarray(C, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"C is not a numeric matrix: {exc}") from exc
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or not np.all(np.isfinite(arr)):
            raise ConfigError("C must be a finite square matrix")
        C = arr.tolist()

    seed = _seed(data.get("seeds", {}).get("root", 0))

    budgets = dict(data.get("budgets", {}))
    replicates = _positive_int(budgets.pop("replicates", 10_000), "budgets.replicates")
    allowed = {"nodes_per_dim", "mc_samples", "tensor_dim_cap"}
    if set(budgets) - allowed:
        raise ConfigError(f"unknown budget keys: {sorted(set(budgets) - allowed)}")
    kw = {}
    for key, value in budgets.items():
        if key == "tensor_dim_cap":
            if isinstance(value, bool) or not isinstance(value, int) or value < 0:
                raise ConfigError("budgets.tensor_dim_cap must be a non-negative integer")
            kw[key] = value
        else:
            kw[key] = _positive_int(value, f"budgets.{key}")
    budget = IntegrationBudget(**kw)

    sweep = data.get("sweep", {}).get("t", [])
    if not isinstance(sweep, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in sweep):
        raise ConfigError("sweep.t must be a list of numbers")
    sweep = [float(x) for x in sweep]
    if any(not (math.isfinite(x) and x > 0) for x in sweep):
        raise ConfigError("sweep.t entries must be positive")
    if any(b <= a for a, b in zip(sweep, sweep[1:])):
        raise ConfigError("sweep.t must be strictly increasing")

    flags = data.get("flags", {})
    wiring = flags.get("wiring", "expansion")
    if wiring not in WIRINGS:
        raise ConfigError(f"flags.wiring must be one of {sorted(WIRINGS)}")
    paper_literal = flags.get("paper_literal", False)
    if not isinstance(paper_literal, bool):
        raise ConfigError("flags.paper_literal must be true or false")

    out = data.get("out", {}).get("path")
    return RunConfig(model, C, seed, budget, replicates, sweep, wiring, paper_literal, out)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(data)


def apply_overrides(cfg: RunConfig, seed=None, out=None, wiring=None, paper_literal=False) -> RunConfig:
    if seed is not None:
        cfg.seed = _seed(seed)
    if out is not None:
        cfg.out = out
    if wiring is not None:
        if wiring not in WIRINGS:
            raise ConfigError(f"--wiring must be one of {sorted(WIRINGS)}")
        cfg.wiring = wiring
    if paper_literal:
        cfg.paper_literal = True
    return cfg
