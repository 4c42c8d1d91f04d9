"""Run configuration: defaults < YAML file < command-line flags.

The config file is a flat YAML mapping whose keys are the field names of
:class:`RunConfig` (``learning_rate: 0.001``). Unknown keys are rejected
with the nearest valid key suggested; type errors name the file line.
"""

from __future__ import annotations

import dataclasses
import difflib
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .basis import BasisFamily
from .errors import InvalidArgumentError
from .harness import DEFAULT_K_CANDIDATES, MODEL_NAMES, ExperimentConfig
from .nn import HUBER_DELTA, Loss, TrainConfig
from .sim import Noise, NoiseKind, ScenarioConfig

SCENARIO_CHOICES = ("i", "ii", "iii")
NOISE_CHOICES = tuple(k.value for k in NoiseKind)
FAMILY_CHOICES = tuple(f.value for f in BasisFamily)


def _opt(kind):
    return ("optional", kind)


@dataclass
class RunConfig:
    # data and protocol
    scenario: str = "i"
    noise: str = "clean"
    n: int = 2500
    reps: int = 10
    seed: int = 0
    models: list = field(default_factory=lambda: list(MODEL_NAMES))
    model: str = "DK_S"
    value_column: str = "value"
    # basis
    family: str = BasisFamily.SPHERICAL_MRTS.value
    m_knots: int = 400
    k: int | None = None
    k_candidates: list = field(default_factory=lambda: list(DEFAULT_K_CANDIDATES))
    wendland_grids: list = field(default_factory=lambda: [100, 361, 1369])
    # network and training
    hidden: list = field(default_factory=lambda: [100, 100, 100])
    epochs_max: int = 500
    batch_size: int = 256
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout_rate: float = 0.2
    patience: int = 50
    bn_momentum: float = 0.1
    standardize: bool = True
    huber_delta: float = HUBER_DELTA
    # kriging
    neighbor_cap: int | None = None
    # files
    input: str | None = None
    output: str | None = None
    model_path: str | None = None
    grid: list | None = None

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            m_knots=self.m_knots, k_candidates=tuple(self.k_candidates),
            wendland_grids=tuple(self.wendland_grids), train=self.train_config(),
            huber_delta=self.huber_delta, neighbor_cap=self.neighbor_cap,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden=tuple(self.hidden), epochs_max=self.epochs_max, batch_size=self.batch_size,
            learning_rate=self.learning_rate, adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps, dropout_rate=self.dropout_rate, patience=self.patience,
            bn_momentum=self.bn_momentum, seed=self.seed, standardize=self.standardize,
        )

    def scenario_config(self) -> ScenarioConfig:
        return ScenarioConfig(self.scenario, n=self.n, noise=Noise(self.noise), seed=self.seed)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# key -> value type; "optional" wraps a type that also accepts null
FIELD_TYPES = {
    "scenario": str, "noise": str, "n": int, "reps": int, "seed": int, "models": ("list", str),
    "model": str, "value_column": str, "family": str, "m_knots": int, "k": _opt(int),
    "k_candidates": ("list", int), "wendland_grids": ("list", int), "hidden": ("list", int),
    "epochs_max": int, "batch_size": int, "learning_rate": float, "adam_beta1": float,
    "adam_beta2": float, "adam_eps": float, "dropout_rate": float, "patience": int,
    "bn_momentum": float, "standardize": bool, "huber_delta": float, "neighbor_cap": _opt(int),
    "input": _opt(str), "output": _opt(str), "model_path": _opt(str), "grid": _opt(("list", int)),
}
KEYS = tuple(f.name for f in dataclasses.fields(RunConfig))
assert set(KEYS) == set(FIELD_TYPES)


def _type_name(kind) -> str:
    if isinstance(kind, tuple):
        if kind[0] == "optional":
            return f"{_type_name(kind[1])} or null"
        return f"list of {_type_name(kind[1])}"
    return {int: "integer", float: "number", str: "string", bool: "boolean"}[kind]


def coerce(key: str, value, from_text: bool = False):
    """Check (and for flag text, convert) ``value`` for ``key``; ``TypeError`` on mismatch."""
    return _coerce(FIELD_TYPES[key], value, from_text)


def _coerce(kind, value, from_text):
    if isinstance(kind, tuple) and kind[0] == "optional":
        if value is None or (from_text and str(value).lower() in ("none", "null")):
            return None
        return _coerce(kind[1], value, from_text)
    if isinstance(kind, tuple):  # list
        if from_text and isinstance(value, str):
            value = [v for v in value.replace(",", " ").split() if v]
        if not isinstance(value, (list, tuple)):
            raise TypeError
        return [_coerce(kind[1], v, from_text) for v in value]
    if from_text and isinstance(value, str):
        if kind is bool:
            low = value.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise TypeError
        if kind is str:
            return value
        try:
            return kind(value) if kind is float else int(value, 10)
        except ValueError:
            raise TypeError from None
    if kind is bool:
        if isinstance(value, bool):
            return value
        raise TypeError
    if kind is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise TypeError
    if kind is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise TypeError
    if isinstance(value, str):
        return value
    raise TypeError


def unknown_key_message(key: str, where: str = "") -> str:
    near = difflib.get_close_matches(key, KEYS, n=1, cutoff=0.6)
    hint = f"; did you mean {near[0]!r}?" if near else ""
    return f"unknown configuration key {key!r}{where}{hint} Valid keys: {', '.join(KEYS)}"


def load_config_file(path) -> dict:
    """Parse a flat YAML mapping, checking keys and value types."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidArgumentError(f"{path}: YAML syntax error: {exc}") from exc
    if node is None:
        return {}
    if not isinstance(node, yaml.MappingNode) or not isinstance(data, dict):
        raise InvalidArgumentError(f"{path}: top level must be a mapping of key: value")
    lines = {k.value: k.start_mark.line + 1 for k, _ in node.value}
    out = {}
    for key, value in data.items():
        line = lines.get(str(key), "?")
        if key not in FIELD_TYPES:
            raise InvalidArgumentError(unknown_key_message(str(key), f" at {path}:{line}"))
        try:
            out[key] = coerce(key, value)
        except TypeError:
            raise InvalidArgumentError(
                f"{path}:{line}: {key} expects {_type_name(FIELD_TYPES[key])}, got {value!r}") from None
    return out


def parse_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Resolve defaults, then the file at ``path``, then ``overrides``, and validate."""
    values = {}
    if path is not None:
        values.update(load_config_file(path))
    for key, value in (overrides or {}).items():
        if key not in FIELD_TYPES:
            raise InvalidArgumentError(unknown_key_message(key))
        try:
            values[key] = coerce(key, value, from_text=isinstance(value, str))
        except TypeError:
            raise InvalidArgumentError(
                f"--{key.replace('_', '-')} expects {_type_name(FIELD_TYPES[key])}, got {value!r}") from None
    cfg = RunConfig(**values)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> None:
    """Run every module's precondition checks now rather than mid-run."""
    if cfg.scenario not in SCENARIO_CHOICES:
        raise InvalidArgumentError(f"scenario must be one of {SCENARIO_CHOICES}, got {cfg.scenario!r}")
    if cfg.noise not in NOISE_CHOICES:
        raise InvalidArgumentError(f"noise must be one of {NOISE_CHOICES}, got {cfg.noise!r}")
    if cfg.family not in FAMILY_CHOICES:
        raise InvalidArgumentError(f"family must be one of {FAMILY_CHOICES}, got {cfg.family!r}")
    for name in list(cfg.models) + [cfg.model]:
        if name not in MODEL_NAMES:
            raise InvalidArgumentError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    if cfg.reps < 1:
        raise InvalidArgumentError("reps must be >= 1")
    if not cfg.hidden or min(cfg.hidden) < 1:
        raise InvalidArgumentError("hidden must list at least one positive width")
    if cfg.k is not None and not 1 <= cfg.k <= cfg.m_knots:
        raise InvalidArgumentError(f"k must lie in [1, m_knots={cfg.m_knots}]")
    if cfg.neighbor_cap is not None and cfg.neighbor_cap < 1:
        raise InvalidArgumentError("neighbor_cap must be >= 1")
    if cfg.grid is not None and (len(cfg.grid) != 2 or cfg.grid[0] < 1 or cfg.grid[1] < 2):
        raise InvalidArgumentError("grid must be two integers: n_lon >= 1, n_lat >= 2")
    for g in cfg.wendland_grids:
        r = int(round(g ** 0.5))
        if r * r != g or r < 2:
            raise InvalidArgumentError(f"wendland grid count {g} is not a perfect square >= 4")
    Loss("huber", cfg.huber_delta)
    cfg.scenario_config()
    cfg.experiment_config()
