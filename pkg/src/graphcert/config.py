"""Experiment configuration: flat key-value files with defaults for every key.

Format: one `key = value` per line, `#` comments.  Unknown keys are errors.
The full effective configuration (defaults included) is echoed into every
output summary.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

from .adversary import (
    AllNonzeroDeviation,
    FixedDeviation,
    FixedShift,
    HonestStrategy,
    IIDNoiseStrategy,
    ScriptedStrategy,
    SingleBadStrategy,
    UniformNonzeroDeviation,
    load_assignment,
)
from .cv import NoiseModel
from .hypergraph import load_hypergraph, preset
from .verifier import ProtocolParams


class ConfigError(ValueError):
    """Malformed configuration file or inconsistent keys."""


@dataclass
class ExperimentConfig:
    """Every tunable of a run; field names double as config-file keys."""

    mode: str = "qudit"  # qudit | cv
    n: int = 9
    d: int = 2
    graph: str = "cluster2d"  # path | cycle | complete | cluster2d[:RxC] | file:PATH
    c: float = 13.0
    n_test: int | None = None  # default: ceil(5 n^4 ln n / 32)
    n_total: int | None = None  # default: 2 n n_test
    ntilde: int = 1
    seed: int = 1
    trials: int = 10
    adversary: str = "honest"  # honest | iid | single_bad | scripted
    epsilon: float = 0.01
    bad_model: str = "ones"  # ones | uniform | dev:a1,... | shift:s1,...
    bad_position: int | None = None  # single_bad placement; None -> uniform
    assignment_file: str | None = None
    squeeze_sigma: float = 0.0
    meas_sigma: float = 0.0
    tolerance_tau: float = 0.0
    x_window: float = 10.0
    cv_gaussian: bool = False
    outcome_mode: str = "sampled"  # sampled | residual
    record_raw: bool = False
    strict: bool = False
    out: str = "out"

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_BOOL_KEYS = {"cv_gaussian", "record_raw", "strict"}
_INT_KEYS = {"n", "d", "ntilde", "seed", "trials"}
_OPT_INT_KEYS = {"n_test", "n_total", "bad_position"}
_FLOAT_KEYS = {"c", "epsilon", "squeeze_sigma", "meas_sigma", "tolerance_tau", "x_window"}
_OPT_STR_KEYS = {"assignment_file"}


def _convert(key: str, value: str):
    value = value.strip()
    if key in _BOOL_KEYS:
        low = value.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {key}: expected a boolean, got {value!r}")
    if key in _INT_KEYS or key in _OPT_INT_KEYS:
        if key in _OPT_INT_KEYS and value.lower() in ("", "auto", "none"):
            return None
        try:
            return int(value)
        except ValueError:
            raise ConfigError(f"key {key}: expected an integer, got {value!r}")
    if key in _FLOAT_KEYS:
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"key {key}: expected a number, got {value!r}")
    if key in _OPT_STR_KEYS and value.lower() in ("", "none"):
        return None
    return value


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    known = {f.name for f in fields(ExperimentConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" in line:
            key, _, value = line.partition("=")
        else:
            parts = line.split(None, 1)
            if len(parts) != 2:
                raise ConfigError(f"line {lineno}: expected `key = value`")
            key, value = parts
        key = key.strip()
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _convert(key, value))
    return cfg


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


# -- turning a config into protocol objects ---------------------------------------


def build_graph(cfg: ExperimentConfig):
    if cfg.graph.startswith("file:"):
        return load_hypergraph(cfg.graph[5:])
    return preset(cfg.graph, cfg.n)


def build_params(cfg: ExperimentConfig) -> ProtocolParams:
    graph = build_graph(cfg)
    if cfg.mode == "qudit":
        noise = None
    else:
        noise = NoiseModel(
            squeeze_sigma=cfg.squeeze_sigma,
            meas_sigma=cfg.meas_sigma,
            x_window=cfg.x_window,
        )
    return ProtocolParams(
        graph=graph,
        mode=cfg.mode,
        d=cfg.d if cfg.mode == "qudit" else None,
        c=cfg.c,
        n_test=cfg.n_test,
        n_total=cfg.n_total,
        ntilde=cfg.ntilde,
        seed=cfg.seed,
        noise=noise,
        tau=cfg.tolerance_tau,
        cv_gaussian=cfg.cv_gaussian,
        strict=cfg.strict,
    )


def build_bad_model(cfg: ExperimentConfig):
    spec = cfg.bad_model
    if spec == "ones":
        return AllNonzeroDeviation()
    if spec == "uniform":
        return UniformNonzeroDeviation()
    if spec.startswith("dev:"):
        try:
            a = tuple(int(t) for t in spec[4:].split(","))
        except ValueError:
            raise ConfigError(f"bad_model {spec!r}: bad deviation vector")
        return FixedDeviation(a)
    if spec.startswith("shift:"):
        try:
            vals = tuple(float(t) for t in spec[6:].split(","))
        except ValueError:
            raise ConfigError(f"bad_model {spec!r}: bad shift vector")
        return FixedShift(vals)
    raise ConfigError(f"unknown bad_model {spec!r}")


def build_strategy(cfg: ExperimentConfig, params: ProtocolParams):
    name = cfg.adversary
    if name == "honest":
        return HonestStrategy()
    if name == "iid":
        return IIDNoiseStrategy(epsilon=cfg.epsilon, bad_model=build_bad_model(cfg))
    if name == "single_bad":
        model = build_bad_model(cfg)
        if isinstance(model, UniformNonzeroDeviation):
            raise ConfigError("single_bad needs a deterministic bad_model")
        return SingleBadStrategy(
            bad_entry=model.draw(None, params), position=cfg.bad_position
        )
    if name == "scripted":
        if not cfg.assignment_file:
            raise ConfigError("scripted adversary needs assignment_file")
        return load_assignment(cfg.assignment_file, params.n, params.mode)
    raise ConfigError(f"unknown adversary {name!r}")
