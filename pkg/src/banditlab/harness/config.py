"""Experiment configuration: a flat INI file plus command-line overrides.

Example::

    [instance]
    p = 10
    s = 2
    sigma = 0.01
    n = 100

    [run]
    seeds = 0..19
    output_dir = results

    [alexp]
    gamma0 = 0.01

    [etc]
    n0 = 20

Every section other than ``instance`` and ``run`` names an algorithm; its
keys are that algorithm's constructor parameters.
"""

from __future__ import annotations

import ast
import configparser
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..alexp import ALExp
from ..baselines import ETC, ETS, UCB, Corral
from ..features import GRID_SIZE


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


def _oracle_ucb(**kw):
    return UCB(mode="oracle", **kw)


def _naive_ucb(**kw):
    return UCB(mode="naive", **kw)


ALGORITHMS = {
    "alexp": ALExp,
    "oracle_ucb": _oracle_ucb,
    "naive_ucb": _naive_ucb,
    "etc": ETC,
    "ets": ETS,
    "corral": Corral,
}

RESERVED = ("instance", "run")


def make_algorithm(name: str, params: dict | None = None):
    """Instantiate a known algorithm, rejecting unknown names and parameters."""
    if name not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {name!r}; known: {', '.join(sorted(ALGORITHMS))}")
    params = dict(params or {})
    algo = ALGORITHMS[name]()
    valid = algo.get_params()
    bad = sorted(set(params) - set(valid) - ({"mode"} if "ucb" in name else set()))
    if "mode" in params and "ucb" in name:
        raise ConfigError(f"{name}: 'mode' is fixed by the algorithm name")
    if bad:
        raise ConfigError(f"{name}: unknown parameter(s) {', '.join(bad)}")
    return algo.set_params(**params)


@dataclass(frozen=True)
class Instance:
    p: int = 10
    s: int = 2
    sigma: float = 0.01
    n: int = 100


@dataclass(frozen=True)
class ExperimentConfig:
    instance: Instance = field(default_factory=Instance)
    algorithms: tuple[tuple[str, dict], ...] = ()
    seeds: tuple[int, ...] = tuple(range(20))
    grid_size: int = GRID_SIZE
    output_dir: str = "results"
    diagnostics: bool = False

    def __post_init__(self):
        inst = self.instance
        if inst.n < 1:
            raise ConfigError(f"horizon n must be >= 1, got {inst.n}")
        if not 1 <= inst.s <= inst.p + 1:
            raise ConfigError(f"need 1 <= s <= p + 1, got p={inst.p}, s={inst.s}")
        if inst.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if not self.seeds:
            raise ConfigError("seed list is empty")
        if self.grid_size < 1:
            raise ConfigError("grid_size must be positive")
        for name, params in self.algorithms:
            make_algorithm(name, params)

    @property
    def algorithm_names(self) -> list[str]:
        return [name for name, _ in self.algorithms]

    def params_for(self, name: str) -> dict:
        for alg, params in self.algorithms:
            if alg == name:
                return dict(params)
        raise ConfigError(f"algorithm {name!r} is not configured")

    def select(self, names) -> "ExperimentConfig":
        """Keep only ``names``; algorithms not in the file run with defaults."""
        have = dict(self.algorithms)
        return replace(self, algorithms=tuple((n, have.get(n, {})) for n in names))


def parse_value(text: str):
    """Python literal if it parses as one, else the raw string."""
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text.strip()


def parse_seeds(text: str) -> tuple[int, ...]:
    """``"0..19"`` (inclusive), ``"3"`` or a comma list ``"1, 4, 9"``."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = (int(v) for v in text.split(".."))
            if hi < lo:
                raise ConfigError(f"empty seed range {text!r}")
            return tuple(range(lo, hi + 1))
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad seed specification {text!r}") from exc


def _typed(section, key, kind, default):
    if key not in section:
        return default
    try:
        return kind(section[key])
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: expected {kind.__name__}, got {section[key]!r}") from exc


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def config_from_parser(parser: configparser.ConfigParser) -> ExperimentConfig:
    inst = parser["instance"] if parser.has_section("instance") else {}
    run = parser["run"] if parser.has_section("run") else {}
    if inst:
        extra = set(inst) - {"p", "s", "sigma", "n"}
        if extra:
            raise ConfigError(f"[instance] unknown key(s) {', '.join(sorted(extra))}")
    if run:
        extra = set(run) - {"seeds", "grid_size", "output_dir", "diagnostics"}
        if extra:
            raise ConfigError(f"[run] unknown key(s) {', '.join(sorted(extra))}")
    defaults = Instance()
    instance = Instance(
        p=_typed(inst, "p", int, defaults.p) if inst else defaults.p,
        s=_typed(inst, "s", int, defaults.s) if inst else defaults.s,
        sigma=_typed(inst, "sigma", float, defaults.sigma) if inst else defaults.sigma,
        n=_typed(inst, "n", int, defaults.n) if inst else defaults.n,
    )
    algorithms = []
    for name in parser.sections():
        if name in RESERVED:
            continue
        algorithms.append((name, {k: parse_value(v) for k, v in parser[name].items()}))
    return ExperimentConfig(
        instance=instance,
        algorithms=tuple(algorithms),
        seeds=parse_seeds(run["seeds"]) if run and "seeds" in run else tuple(range(20)),
        grid_size=_typed(run, "grid_size", int, GRID_SIZE) if run else GRID_SIZE,
        output_dir=run.get("output_dir", "results") if run else "results",
        diagnostics=_typed(run, "diagnostics", _bool, False) if run else False,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_parser(parser)


def loads_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    return config_from_parser(parser)
