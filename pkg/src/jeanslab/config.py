"""Run configuration: one canonical JSON document.

Schema (all keys optional, defaults shown by ``default_config``):

    {
      "params":   {"a", "b", "c", "k", "m", "A"},          # A null -> b/(3-2c)
      "data":     {"t0", "f_ring", "f0_ring"},
      "ode":      {"y_max", "t_max", "rel_tol", "abs_tol"},
      "pde":      {"dim", "N", "sigma", "modes", "random_modes",
                   "s", "f_stop", "cfl", "rel_tol", "abs_tol", "ratio_guard"},
      "fuchsian": {"tau_min", "eps", "tau_cap", "cfl"},
      "output":   {"directory", "plots"},
      "seed":     int
    }

``modes`` is a list of {"wave": [ints], "amplitude", "phase"};
``random_modes`` > 0 appends that many seeded random modes.  Unknown keys
anywhere are rejected.  Parse -> serialize -> parse is the identity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigError, OutOfRegion
from .params import ModelParams, OdeData, validate_params
from .pde import ModeSpec, PerturbationConfig
from .fuchsian import FuchsianConfig
from .reference import StopCriteria
from .torus import TorusGrid

__all__ = ["RunConfig", "default_config", "load_config", "config_from_dict"]

_DEFAULTS: dict[str, Any] = {
    "params": {"a": 4.0 / 3.0, "b": 2.0 / 3.0, "c": 4.0 / 3.0, "k": 2.0, "m": 1.0, "A": None},
    "data": {"t0": 1.0, "f_ring": 1.0, "f0_ring": 1.0},
    "ode": {"y_max": 1e6, "t_max": None, "rel_tol": 1e-10, "abs_tol": 1e-12},
    "pde": {
        "dim": 1,
        "N": None,               # default 128 for dim 1, 64 for dim 2
        "sigma": 1e-3,
        "modes": [{"wave": [1], "amplitude": 1.0, "phase": 0.0}],
        "random_modes": 0,
        "s": 4,
        "f_stop": 1e4,
        "cfl": 0.5,
        "rel_tol": 1e-10,
        "abs_tol": 1e-12,
        "ratio_guard": 1.0,
    },
    "fuchsian": {"tau_min": -1e-4, "eps": None, "tau_cap": 0.1, "cfl": 0.5},
    "output": {"directory": "out", "plots": True},
    "seed": 0,
}


def _merge_checked(section: str, defaults: dict, given: dict) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in '{section}': {sorted(unknown)}")
    out = dict(defaults)
    out.update(given)
    return out


@dataclass
class RunConfig:
    raw: dict[str, Any] = field(default_factory=lambda: json.loads(json.dumps(_DEFAULTS)))

    # -- typed views ------------------------------------------------------
    def model_params(self) -> ModelParams:
        p = self.raw["params"]
        A = p["A"]
        if A is None:
            A = p["b"] / (3.0 - 2.0 * p["c"])   # midpoint of the admissible interval
        try:
            return validate_params(p["a"], p["b"], p["c"], p["k"], p["m"], A)
        except OutOfRegion:
            raise

    def ode_data(self) -> OdeData:
        d = self.raw["data"]
        return OdeData(t0=d["t0"], f_ring=d["f_ring"], f0_ring=d["f0_ring"])

    def stop_criteria(self) -> StopCriteria:
        o = self.raw["ode"]
        return StopCriteria(y_max=o["y_max"], t_max=o["t_max"], rel_tol=o["rel_tol"], abs_tol=o["abs_tol"])

    def grid(self) -> TorusGrid:
        q = self.raw["pde"]
        N = q["N"]
        if N is None:
            N = 128 if q["dim"] == 1 else 64
        return TorusGrid(dim=q["dim"], N=int(N))

    def modes(self) -> tuple[ModeSpec, ...]:
        q = self.raw["pde"]
        modes = [
            ModeSpec(wave=tuple(int(v) for v in mspec["wave"]), amplitude=float(mspec["amplitude"]), phase=float(mspec["phase"]))
            for mspec in q["modes"]
        ]
        n_random = int(q["random_modes"])
        if n_random > 0:
            rng = np.random.default_rng(int(self.raw["seed"]))
            dim = q["dim"]
            for _ in range(n_random):
                wave = tuple(int(w) for w in rng.integers(1, 5, size=dim))
                modes.append(ModeSpec(wave=wave, amplitude=float(rng.uniform(0.2, 1.0)), phase=float(rng.uniform(0.0, 2.0 * math.pi))))
        return tuple(modes)

    def pde_config(self, snapshot_times: tuple[float, ...] = ()) -> PerturbationConfig:
        q = self.raw["pde"]
        return PerturbationConfig(
            grid=self.grid(),
            sigma=q["sigma"],
            modes=self.modes(),
            s=int(q["s"]),
            rel_tol=q["rel_tol"],
            abs_tol=q["abs_tol"],
            cfl=q["cfl"],
            f_stop=q["f_stop"],
            ratio_guard=q["ratio_guard"],
            snapshot_times=snapshot_times,
        )

    def fuchsian_config(self, snapshot_taus: tuple[float, ...] = ()) -> FuchsianConfig:
        fz = self.raw["fuchsian"]
        q = self.raw["pde"]
        return FuchsianConfig(
            grid=self.grid(),
            s=int(q["s"]),
            rel_tol=q["rel_tol"],
            abs_tol=q["abs_tol"],
            tau_min=fz["tau_min"],
            tau_cap=fz["tau_cap"],
            cfl=fz["cfl"],
            snapshot_taus=snapshot_taus,
        )

    def eps(self, lambda_tilde: tuple[float, float, float]) -> float:
        e = self.raw["fuchsian"]["eps"]
        return 0.5 * min(lambda_tilde) if e is None else float(e)

    @property
    def out_dir(self) -> str:
        return self.raw["output"]["directory"]

    @property
    def plots(self) -> bool:
        return bool(self.raw["output"]["plots"])

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    # -- (de)serialization --------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        return json.loads(json.dumps(self.raw))

    def dumps(self) -> str:
        return json.dumps(self.raw, indent=2, sort_keys=True)


def config_from_dict(doc: dict[str, Any]) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration document must be a JSON object")
    unknown = set(doc) - set(_DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {sorted(unknown)}")
    raw: dict[str, Any] = {}
    for key, defaults in _DEFAULTS.items():
        given = doc.get(key, {} if isinstance(defaults, dict) else defaults)
        if isinstance(defaults, dict):
            if not isinstance(given, dict):
                raise ConfigError(f"'{key}' must be an object")
            raw[key] = _merge_checked(key, defaults, given)
        else:
            raw[key] = given
    for mspec in raw["pde"]["modes"]:
        if not isinstance(mspec, dict):
            raise ConfigError("each entry of pde.modes must be an object")
        unknown = set(mspec) - {"wave", "amplitude", "phase"}
        if unknown:
            raise ConfigError(f"unknown key(s) in pde.modes entry: {sorted(unknown)}")
        mspec.setdefault("amplitude", 1.0)
        mspec.setdefault("phase", 0.0)
        if "wave" not in mspec:
            raise ConfigError("pde.modes entry missing 'wave'")
    return RunConfig(raw=raw)


def default_config() -> RunConfig:
    return config_from_dict({})


def load_config(path: str | Path) -> RunConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    return config_from_dict(doc)
