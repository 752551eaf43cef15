"""Hyperparameter sweeps and design diagnostics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..diagnostics import cmin_uniform, restricted_eigenvalue
from ..environment import rng_stream
from ..features import action_grid
from .config import ConfigError, ExperimentConfig, make_algorithm, parse_value
from .outputs import _write_rows
from .runner import build_model_class, run_jobs, summarize


@dataclass(frozen=True)
class ParamRange:
    """``k`` values between ``lo`` and ``hi``, evenly or log-evenly spaced."""

    lo: float
    hi: float
    k: int
    log: bool = False
    integer: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("a parameter range needs k >= 1")
        if self.hi < self.lo:
            raise ConfigError(f"empty range [{self.lo}, {self.hi}]")
        if self.log and self.lo <= 0:
            raise ConfigError("log ranges need lo > 0")

    def grid(self) -> list:
        if self.k == 1:
            vals = np.array([self.lo])
        elif self.log:
            vals = np.geomspace(self.lo, self.hi, self.k)
        else:
            vals = np.linspace(self.lo, self.hi, self.k)
        if self.integer:
            return list(dict.fromkeys(int(round(v)) for v in vals))
        return [float(v) for v in vals]

    def sample(self, rng: np.random.Generator):
        if self.log:
            v = math.exp(rng.uniform(math.log(self.lo), math.log(self.hi)))
        else:
            v = rng.uniform(self.lo, self.hi)
        return int(round(v)) if self.integer else float(v)


# tuning ranges used for the published comparison
PAPER_SWEEPS = {
    "etc": ({"n0": ParamRange(2, 80, 10, integer=True)}, None),
    "ets": ({"n0": ParamRange(2, 80, 10, integer=True)}, None),
    "alexp": ({"gamma0": ParamRange(1e-4, 1e-1, 20, log=True),
               "eta0": ParamRange(1.0, 100.0, 20, log=True)}, 20),
}


def parse_param(spec: str, default_algorithm: str | None = None):
    """``[alg.]name=lo:hi:k[:log]`` -> ``(alg, name, ParamRange)``."""
    try:
        key, rng_text = spec.split("=", 1)
        parts = rng_text.split(":")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "log"):
            raise ValueError
        lo, hi = parse_value(parts[0]), parse_value(parts[1])
        k = int(parts[2])
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in (lo, hi)):
            raise ValueError
    except ValueError:
        raise ConfigError(f"bad --param {spec!r}; expected [alg.]name=lo:hi:k[:log]") from None
    if "." in key:
        alg, name = key.split(".", 1)
    elif default_algorithm is not None:
        alg, name = default_algorithm, key
    else:
        raise ConfigError(f"--param {spec!r} must name its algorithm when several are configured")
    is_log = len(parts) == 4
    integer = isinstance(lo, int) and isinstance(hi, int) and not is_log
    return alg, name, ParamRange(float(lo), float(hi), k, is_log, integer)


def candidate_configs(base: dict, ranges: dict[str, ParamRange], sample: int | None,
                      seed: int = 0, algorithm: str = "") -> list[dict]:
    """Cross product of the grids, or ``sample`` random draws from the box."""
    names = sorted(ranges)
    if sample is None:
        grids = [ranges[n].grid() for n in names]
        return [{**base, **dict(zip(names, combo))} for combo in itertools.product(*grids)]
    rng = rng_stream(seed, f"sweep:{algorithm}")
    return [{**base, **{n: ranges[n].sample(rng) for n in names}} for _ in range(sample)]


@dataclass
class SweepEntry:
    params: dict
    mean_final: float
    stderr_final: float


def sweep(cfg: ExperimentConfig, param_grid: dict[str, dict[str, ParamRange]],
          sample: dict[str, int | None] | None = None, workers: int | None = None,
          sample_seed: int = 0) -> dict[str, list[SweepEntry]]:
    """Run each candidate configuration on every seed and rank by mean R(n).

    ``param_grid`` maps algorithm -> {parameter: range}.  Algorithms listed
    in ``sample`` are searched by that many random draws instead of the
    full grid.  Ties in mean regret keep candidate order.
    """
    sample = sample or {}
    plan = []
    for alg, ranges in param_grid.items():
        base = cfg.params_for(alg) if alg in cfg.algorithm_names else {}
        for params in candidate_configs(base, ranges, sample.get(alg), sample_seed, alg):
            make_algorithm(alg, params)
            plan.append((alg, params))
    jobs = [(cfg, alg, params, seed) for alg, params in plan for seed in cfg.seeds]
    traces = run_jobs(jobs, workers)
    k = len(cfg.seeds)
    out: dict[str, list[SweepEntry]] = {}
    for i, (alg, params) in enumerate(plan):
        s = summarize(traces[i * k:(i + 1) * k])
        out.setdefault(alg, []).append(SweepEntry(params, s.final, float(s.stderr[-1])))
    for alg in out:
        out[alg].sort(key=lambda e: e.mean_final)
    return out


def write_sweep(ranking: dict[str, list[SweepEntry]], out) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for alg, entries in ranking.items():
        keys = sorted({k for e in entries for k in e.params})
        rows = [(i + 1, e.mean_final, e.stderr_final, *(e.params.get(k, "") for k in keys))
                for i, e in enumerate(entries)]
        paths.append(_write_rows(out / f"sweep_{alg}.csv",
                                 ("rank", "mean_final_regret", "stderr", *keys), rows))
    return paths


def trace_diagnostics(result, s: int = 1, restarts: int = 8, max_supports: int | None = 64):
    """Restricted-eigenvalue report on each trace's played actions.

    Returns ``(algorithm, seed, EigenReport, cmin_uniform)`` rows in
    deterministic order.
    """
    cfg = result.config
    mc = build_model_class(cfg.instance.p, cfg.instance.s, cfg.grid_size)
    cmin = cmin_uniform(mc, action_grid(cfg.grid_size))
    rows = []
    for name in cfg.algorithm_names:
        for tr in result.traces_for(name):
            report = restricted_eigenvalue(mc.features(tr.actions), min(s, mc.n_models),
                                           mc.n_models, restarts=restarts,
                                           max_supports=max_supports, seed=tr.seed)
            rows.append((name, tr.seed, report, cmin))
    return rows


def design_diagnostics(cfg: ExperimentConfig, s: int = 1, restarts: int = 8,
                       max_supports: int | None = 64):
    """Reports for ``n`` uniformly explored actions per seed, no algorithm involved."""
    mc = build_model_class(cfg.instance.p, cfg.instance.s, cfg.grid_size)
    grid = action_grid(cfg.grid_size)
    cmin = cmin_uniform(mc, grid)
    rows = []
    for seed in cfg.seeds:
        idx = rng_stream(seed, "diagnose").integers(len(grid), size=cfg.instance.n)
        report = restricted_eigenvalue(mc.features(grid[idx]), min(s, mc.n_models), mc.n_models,
                                       restarts=restarts, max_supports=max_supports, seed=seed)
        rows.append(("uniform", seed, report, cmin))
    return rows
