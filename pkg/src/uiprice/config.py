"""Run configuration: YAML parsing, validation with path-to-field messages, round-trip."""
from __future__ import annotations

import copy
import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Optional

import yaml

from .errors import ModelValidationError
from .model import MarketModel, State
from .payoff import DISCONTINUOUS, payoff_from_config
from . import power

SCHEMA_VERSION = 1
ENGINES = ("pde", "bsde", "expand", "power")
DEFAULT_GAMMA = 0.5
MAX_PDE_DIM = 3

log = logging.getLogger(__name__)


@dataclass
class RunConfig:
    model: Optional[dict]
    preset: Optional[str]
    payoff: Optional[dict]
    engine: str
    gammas: list
    state: dict
    grid: dict = field(default_factory=lambda: {"nodes": 101, "steps": 64, "n_sd": 5.0})
    mc: dict = field(default_factory=lambda: {"paths": 100000, "steps": 64, "degree": 3})
    side: str = "buy"
    seed: int = 0
    threads: int = 1
    out: str = "out"
    mollify: bool = False
    schema_version: int = SCHEMA_VERSION

    def to_dict(self):
        return asdict(self)

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def config_hash(self):
        """Hash of the fields that determine results (output location and thread count excluded)."""
        d = {k: v for k, v in self.to_dict().items() if k not in ("out", "threads")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    # built objects -------------------------------------------------------
    def power_model(self):
        return power.preset(self.preset) if self.preset else None

    def market(self) -> MarketModel:
        if self.preset:
            return self.power_model().market
        return model_from_dict(self.model)

    def build_payoff(self):
        if self.payoff is None:
            return self.power_model().payoff
        m = self.market()
        return payoff_from_config(self.payoff, m.n, m.d)

    def start_state(self) -> State:
        return State(self.state["t"], self.state["s"], self.state["x"])


def model_from_dict(d: dict) -> MarketModel:
    d = dict(d)
    b, b_times = d.pop("b", None), None
    if isinstance(b, dict):
        b, b_times = b.get("values"), b.get("times")
    try:
        return MarketModel(mu=d["mu"], sigma=d["sigma"], alpha=d["alpha"], beta=d["beta"], T=d["T"], b=b,
                           b_times=b_times)
    except KeyError as exc:
        raise ModelValidationError(f"model.{exc.args[0]}: required field missing") from None


def _num(value, path, positive=False, integer=False):
    try:
        v = int(value) if integer else float(value)
    except (TypeError, ValueError):
        raise ModelValidationError(f"{path}: expected a number, got {value!r}") from None
    if integer and float(value) != v:
        raise ModelValidationError(f"{path}: expected an integer, got {value!r}")
    if positive and not v > 0:
        raise ModelValidationError(f"{path}: must be positive, got {value!r}")
    return v


def validate_config(raw: dict) -> RunConfig:
    """Fill defaults, check units and cross-field constraints, return a normalized ``RunConfig``."""
    if not isinstance(raw, dict):
        raise ModelValidationError("config: expected a mapping at the top level")
    raw = copy.deepcopy(raw)
    version = raw.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ModelValidationError(f"schema_version: unsupported version {version!r} (expected {SCHEMA_VERSION})")
    preset = raw.pop("preset", None)
    model = raw.pop("model", None)
    if (preset is None) == (model is None):
        raise ModelValidationError("model: give exactly one of 'model' or 'preset'")
    if preset is not None and preset not in power.PRESETS:
        raise ModelValidationError(f"preset: unknown preset {preset!r}; available: {sorted(power.PRESETS)}")
    engine = raw.pop("engine", "pde")
    if engine not in ENGINES:
        raise ModelValidationError(f"engine: must be one of {ENGINES}, got {engine!r}")
    gammas = raw.pop("gamma", None)
    if gammas is None:
        log.warning("gamma: not given, using the default %s", DEFAULT_GAMMA)
        gammas = [DEFAULT_GAMMA]
    if not isinstance(gammas, (list, tuple)):
        gammas = [gammas]
    gammas = [_num(g, f"gamma[{i}]") for i, g in enumerate(gammas)]
    if any(g < 0 for g in gammas):
        raise ModelValidationError("gamma: risk aversion must be nonnegative")
    grid = {"nodes": 101, "steps": 64, "n_sd": 5.0}
    grid.update(raw.pop("grid", {}) or {})
    nodes = grid["nodes"]
    grid["nodes"] = [_num(v, "grid.nodes", True, True) for v in nodes] if isinstance(nodes, (list, tuple)) \
        else _num(nodes, "grid.nodes", True, True)
    grid["steps"] = _num(grid["steps"], "grid.steps", True, True)
    grid["n_sd"] = _num(grid["n_sd"], "grid.n_sd", True)
    mc = {"paths": 100000, "steps": 64, "degree": 3}
    mc.update(raw.pop("mc", {}) or {})
    mc = {"paths": _num(mc["paths"], "mc.paths", True, True), "steps": _num(mc["steps"], "mc.steps", True, True),
          "degree": _num(mc["degree"], "mc.degree", True, True)}
    side = raw.pop("side", "buy")
    if side not in ("buy", "sell"):
        raise ModelValidationError(f"side: must be 'buy' or 'sell', got {side!r}")
    cfg = RunConfig(model=model, preset=preset, payoff=raw.pop("payoff", None), engine=engine, gammas=gammas,
                    state=raw.pop("state", None), grid=grid, mc=mc, side=side,
                    seed=_num(raw.pop("seed", 0), "seed", integer=True),
                    threads=_num(raw.pop("threads", 1), "threads", True, True), out=str(raw.pop("out", "out")),
                    mollify=bool(raw.pop("mollify", False)))
    if raw:
        raise ModelValidationError(f"config: unknown field(s) {sorted(raw)}")
    # building the objects surfaces model errors with their field names
    try:
        m = cfg.market()
    except ModelValidationError as exc:
        raise ModelValidationError(f"model: {exc}") from None
    if preset is None and cfg.payoff is None:
        raise ModelValidationError("payoff: required unless a power preset is used")
    if cfg.payoff is not None:
        cfg.payoff = dict(cfg.payoff)
    pay = cfg.build_payoff()
    if cfg.state is None:
        if preset is not None:
            st = power.AID_2FUEL_STATE
            cfg.state = {"t": st.t, "s": st.s.tolist(), "x": st.x.tolist()}
        else:
            raise ModelValidationError("state: required (fields t, s, x)")
    st = cfg.state
    try:
        cfg.state = {"t": float(st.get("t", 0.0)), "s": [float(v) for v in st.get("s", [])],
                     "x": [float(v) for v in st.get("x", [])]}
        cfg.start_state().check(m)
    except (AttributeError, TypeError) as exc:
        raise ModelValidationError(f"state: {exc}") from None
    except ModelValidationError as exc:
        raise ModelValidationError(f"state: {exc}") from None
    if engine == "pde" and m.dim > MAX_PDE_DIM:
        raise ModelValidationError(f"engine: the pde engine supports n + d <= {MAX_PDE_DIM}, this model has "
                                   f"{m.dim}; use the bsde or expand engine instead")
    if engine == "power" and preset is None:
        raise ModelValidationError("engine: the power engine needs a power preset")
    if engine == "pde" and pay.regularity == DISCONTINUOUS:
        cfg.mollify = True
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ModelValidationError(f"config: YAML parse error: {exc}") from None
    return validate_config(raw)


def dump_config(cfg: RunConfig, path):
    with open(path, "w") as fh:
        fh.write(cfg.to_yaml())


def normalized_raw(cfg: RunConfig) -> dict:
    """Raw mapping that validates back to ``cfg``."""
    d = cfg.to_dict()
    d["gamma"] = d.pop("gammas")
    return {k: v for k, v in d.items() if v is not None}


def apply_overrides(cfg: RunConfig, seed=None, gammas=None, out=None, threads=None, engine=None) -> RunConfig:
    raw = normalized_raw(cfg)
    if seed is not None:
        raw["seed"] = seed
    if gammas is not None:
        raw["gamma"] = list(gammas)
    if out is not None:
        raw["out"] = out
    if threads is not None:
        raw["threads"] = threads
    if engine is not None:
        raw["engine"] = engine
    return validate_config(raw)

