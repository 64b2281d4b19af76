"""Benchmark experiments: optimizer comparison, round-count sweep, noise probe.

Every experiment is a pure function of an :class:`ExperimentConfig`: repeats
get their own seed streams derived from the master seed, results are sorted
by repeat before anything is written, and floats are written with 17
significant digits, so reruns produce byte-identical files regardless of
how many worker processes were used.
"""
from __future__ import annotations

import copy
import csv
import dataclasses
import logging
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .core import derive_seed, estimate_noise_variance
from .gradient import ToleranceSpec, required_rounds, rounds_for_tolerance
from .optimizers import PspoConfig, SpsaConfig, StopCriteria, pspo_minimize, spsa2_minimize
from .problems import NoisyQuadratic, SirParams, load_epidemic_csv, simulate_sir, sir_objective

logger = logging.getLogger(__name__)

OPTIMIZERS = ("pspo", "spsa")
PROBLEMS = ("quadratic", "sir")

RUNS_COLUMNS = [
    "optimizer", "repeat", "k", "objective_mean", "true_objective", "grad_norm", "M",
    "alpha", "beta", "step_norm", "cumulative_evals", "restart", "capped", "fallback",
]
FINAL_COLUMNS = ["optimizer", "repeat", "iterations", "converged", "total_evals", "stop_reason"]
SUMMARY_COLUMNS = [
    "optimizer", "repeats", "converged", "nonconverged_rate", "iters_median", "iters_mean",
    "iters_q1", "iters_q3", "evals_median", "evals_mean", "max_iters", "threshold", "convergence_rule",
]
SWEEP_COLUMNS = ["M", "repeat", "iterations", "converged", "total_evals"]
PROBE_COLUMNS = ["c", "epsilon", "sigma2_hat", "M_required", "M"]

# seed-stream tags
_START, _OPT, _DATA, _PROBE = 100, 200, 300, 400


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class QuadraticSettings:
    dim: int = 5
    sigma: float = 3.0
    init_radius_min: float = 2.0
    init_radius_max: float = 4.0


@dataclass
class SirSettings:
    beta: float = 0.6
    gamma: float = 0.2
    population: int = 188
    initial_infected: int = 3
    horizon: float = 60.0
    dt: float = 0.1
    replicates: int = 10
    init_spread: float = 2.0


@dataclass
class ExperimentConfig:
    """Declarative experiment settings; see README for the file format.

    ``threshold`` is the convergence level: the noiseless objective for the
    quadratic, the update size ``|alpha d|`` for the SIR problem.
    """

    problem: str = "quadratic"
    data: Optional[str] = None
    optimizer: str = "both"
    repeats: int = 200
    max_iters: int = 100
    threshold: Optional[float] = None
    seed: int = 1
    out: str = "results"
    workers: int = 1
    m_values: list = field(default_factory=lambda: [1, 2, 5, 10, 20])
    probe_replicates: int = 1000
    probe_c: list = field(default_factory=lambda: [0.1, 0.5, 1.0])
    probe_epsilon: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    quadratic: QuadraticSettings = field(default_factory=QuadraticSettings)
    sir: SirSettings = field(default_factory=SirSettings)
    pspo: Optional[dict] = None
    spsa: Optional[dict] = None

    def __post_init__(self):
        # unset optimizer settings take the per-problem benchmark defaults
        if self.pspo is None:
            self.pspo = dict(DEFAULT_PSPO.get(self.problem, {}))
        if self.spsa is None:
            self.spsa = dict(DEFAULT_SPSA.get(self.problem, {}))
        self.validate()

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ConfigError(f"problem must be one of {PROBLEMS}, got {self.problem!r}")
        if self.optimizer not in (*OPTIMIZERS, "both"):
            raise ConfigError(f"optimizer must be pspo, spsa or both, got {self.optimizer!r}")
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.threshold is not None and not self.threshold > 0:
            raise ConfigError("threshold must be positive")
        if any(int(m) != m or m < 1 for m in self.m_values):
            raise ConfigError(f"every M value must be an integer >= 1, got {self.m_values}")
        if self.probe_replicates < 2:
            raise ConfigError("probe_replicates must be >= 2")
        q = self.quadratic
        if not 0 < q.init_radius_min <= q.init_radius_max:
            raise ConfigError("need 0 < init_radius_min <= init_radius_max")
        if self.problem == "quadratic" and self.convergence_threshold >= q.init_radius_min**2:
            raise ConfigError("threshold must be below init_radius_min**2 so no run starts converged")
        for name, cls in (("pspo", PspoConfig), ("spsa", SpsaConfig)):
            known = {f.name for f in dataclasses.fields(cls)} - {"stop", "seed"}
            unknown = set(getattr(self, name)) - known
            if unknown:
                raise ConfigError(f"unknown [{name}] keys: {sorted(unknown)}")
            try:
                self.optimizer_config(name, 0)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"[{name}]: {exc}") from exc

    @property
    def optimizers(self) -> tuple:
        return OPTIMIZERS if self.optimizer == "both" else (self.optimizer,)

    @property
    def convergence_threshold(self) -> float:
        if self.threshold is not None:
            return self.threshold
        return 0.5 if self.problem == "quadratic" else 0.01

    @property
    def convergence_rule(self) -> str:
        if self.problem == "quadratic":
            return f"noiseless objective <= {self.convergence_threshold:g}"
        return f"update size |alpha d| <= {self.convergence_threshold:g}"

    def optimizer_config(self, name: str, seed: int, **overrides):
        stop = StopCriteria(max_iters=self.max_iters)
        if self.problem == "sir":
            stop = StopCriteria(max_iters=self.max_iters, step_tol=self.convergence_threshold)
        cls = PspoConfig if name == "pspo" else SpsaConfig
        settings = {**getattr(self, name), **overrides}
        return cls(stop=stop, seed=seed, **settings)


# Benchmark settings found by a small grid search on the noisy quadratic;
# the SPSA gains are the best of that grid.
DEFAULT_PSPO = {"quadratic": {"c": 1.0, "c_tilde": 0.5}, "sir": {"c": 0.05, "c_tilde": 0.025}}
DEFAULT_SPSA = {
    "quadratic": {"a": 0.5, "c0": 1.0, "pd_floor": 2.0},
    "sir": {"a": 0.5, "c0": 0.1, "pd_floor": 10.0},
}


def _merge(dc, values: dict, where: str):
    known = {f.name for f in dataclasses.fields(dc)}
    for key, value in values.items():
        if key not in known:
            raise ConfigError(f"unknown key {where}.{key}")
        setattr(dc, key, value)


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build a config from nested dicts (e.g. a parsed TOML file), with defaults."""
    data = copy.deepcopy(data)
    problem = data.get("problem", "quadratic")
    quadratic, sir = QuadraticSettings(), SirSettings()
    _merge(quadratic, data.pop("quadratic", {}), "quadratic")
    _merge(sir, data.pop("sir", {}), "sir")
    if problem not in PROBLEMS:
        raise ConfigError(f"problem must be one of {PROBLEMS}, got {problem!r}")
    pspo = {**DEFAULT_PSPO[problem], **data.pop("pspo", {})}
    spsa = {**DEFAULT_SPSA[problem], **data.pop("spsa", {})}
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        return ExperimentConfig(quadratic=quadratic, sir=sir, pspo=pspo, spsa=spsa, **data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> dict:
    """Parse a TOML config file into a plain dict."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python < 3.11
        import tomli as tomllib
    with open(path, "rb") as fh:
        try:
            return tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc


# -- problem setup -----------------------------------------------------------

def _quadratic_start(cfg: ExperimentConfig, repeat: int) -> np.ndarray:
    q = cfg.quadratic
    rng = np.random.default_rng(derive_seed(cfg.seed, _START, repeat))
    u = rng.standard_normal(q.dim)
    u /= np.linalg.norm(u)
    return 1.0 + rng.uniform(q.init_radius_min, q.init_radius_max) * u


def _sir_data(cfg: ExperimentConfig, repeat: int):
    if cfg.data is not None:
        return load_epidemic_csv(cfg.data)
    s = cfg.sir
    init = (s.population - s.initial_infected, s.initial_infected, 0)
    return simulate_sir(SirParams(s.beta, s.gamma), init, s.horizon, s.dt, derive_seed(cfg.seed, _DATA, repeat))


def _sir_start(cfg: ExperimentConfig, repeat: int) -> np.ndarray:
    s = cfg.sir
    rng = np.random.default_rng(derive_seed(cfg.seed, _START, repeat))
    spread = math.log(s.init_spread)
    return SirParams(s.beta, s.gamma).to_log() + rng.uniform(-spread, spread, 2)


def _setup(cfg: ExperimentConfig, repeat: int):
    """Objective, start point and convergence predicate for one repeat."""
    if cfg.problem == "quadratic":
        q = NoisyQuadratic(cfg.quadratic.dim, cfg.quadratic.sigma)
        thr = cfg.convergence_threshold
        return q.objective(), _quadratic_start(cfg, repeat), (lambda th: q.mean(th) <= thr), q.mean
    data = _sir_data(cfg, repeat)
    obj = sir_objective(data, cfg.sir.replicates, cfg.sir.dt)
    return obj, _sir_start(cfg, repeat), None, None


def _run_one(args):
    cfg, name, repeat, overrides = args
    objective, theta0, predicate, truth = _setup(cfg, repeat)
    ocfg = cfg.optimizer_config(name, derive_seed(cfg.seed, _OPT, repeat), **overrides)
    callback = None if predicate is None else (lambda k, th: predicate(th))
    run = pspo_minimize if name == "pspo" else spsa2_minimize
    _, trace = run(objective, theta0, ocfg, callback=callback)
    if predicate is not None:
        iterations = trace.iterations_to(predicate, censor=cfg.max_iters)
        converged = iterations < cfg.max_iters or predicate(trace.final_theta)
    else:
        converged = trace.converged
        iterations = len(trace.iterations) if converged else cfg.max_iters
    return {
        "optimizer": name,
        "repeat": repeat,
        "trace": trace,
        "iterations": iterations,
        "converged": converged,
        "true": [truth(r.theta) for r in trace.iterations] if truth else None,
    }


def _map(cfg: ExperimentConfig, tasks):
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            return list(pool.map(_run_one, tasks, chunksize=max(1, len(tasks) // (4 * cfg.workers))))
    return [_run_one(t) for t in tasks]


# -- output ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".17g")
    return str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def prepare_output(out) -> Path:
    """Create ``out`` and check it is writable; raises OSError otherwise."""
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile(dir=path, prefix=".write-check-"):
        pass
    return path


def _theta_columns(p):
    return [f"theta_{i}" for i in range(p)]


def _runs_rows(results):
    for res in results:
        trace = res["trace"]
        true_vals = res["true"] or [None] * len(trace.iterations)
        for rec, tv in zip(trace.iterations, true_vals):
            yield [
                res["optimizer"], res["repeat"], rec.k, rec.objective_mean, tv, rec.grad_norm, rec.M,
                rec.alpha, rec.beta, rec.step_norm, rec.cumulative_evals, rec.restart, rec.capped,
                rec.fallback, *rec.theta,
            ]


def _summary_rows(cfg, results):
    for name in cfg.optimizers:
        mine = [r for r in results if r["optimizer"] == name]
        its = np.array([r["iterations"] for r in mine], dtype=float)
        evals = np.array([r["trace"].total_evals for r in mine], dtype=float)
        conv = sum(r["converged"] for r in mine)
        yield [
            name, len(mine), conv, 1 - conv / len(mine), np.median(its), its.mean(),
            np.percentile(its, 25), np.percentile(its, 75), np.median(evals), evals.mean(),
            cfg.max_iters, cfg.convergence_threshold, cfg.convergence_rule,
        ]


def _histogram_rows(cfg, results):
    counts = {name: np.zeros(cfg.max_iters + 1, dtype=int) for name in cfg.optimizers}
    for r in results:
        counts[r["optimizer"]][min(max(r["iterations"], 1), cfg.max_iters)] += 1
    for b in range(1, cfg.max_iters + 1):
        yield [b, *(counts[name][b] for name in cfg.optimizers)]


def run_compare(cfg: ExperimentConfig) -> dict:
    """Run every selected optimizer ``cfg.repeats`` times and write the CSVs.

    Writes ``runs.csv`` (one row per iteration), ``final.csv`` (one row per
    run), ``summary.csv`` and ``histogram.csv`` (iterations-to-converge per
    optimizer, non-converged runs counted at ``max_iters``).  Returns the
    paths keyed by file stem.
    """
    out = prepare_output(cfg.out)
    tasks = [(cfg, name, r, {}) for name in cfg.optimizers for r in range(cfg.repeats)]
    results = sorted(_map(cfg, tasks), key=lambda r: (OPTIMIZERS.index(r["optimizer"]), r["repeat"]))
    p = len(results[0]["trace"].theta0)
    paths = {name: out / f"{name}.csv" for name in ("runs", "final", "summary", "histogram")}
    _write_csv(paths["runs"], RUNS_COLUMNS + _theta_columns(p), _runs_rows(results))
    _write_csv(
        paths["final"],
        FINAL_COLUMNS + _theta_columns(p),
        (
            [r["optimizer"], r["repeat"], r["iterations"], r["converged"], r["trace"].total_evals,
             r["trace"].stop_reason.value, *r["trace"].final_theta]
            for r in results
        ),
    )
    _write_csv(paths["summary"], SUMMARY_COLUMNS, _summary_rows(cfg, results))
    _write_csv(paths["histogram"], ["iterations", *cfg.optimizers], _histogram_rows(cfg, results))
    return paths


def run_m_sweep(cfg: ExperimentConfig, m_values=None) -> Path:
    """PSPO with the number of rounds fixed at each M; writes ``m_sweep.csv``."""
    m_values = list(cfg.m_values if m_values is None else m_values)
    if not m_values or any(int(m) != m or m < 1 for m in m_values):
        raise ConfigError(f"every M value must be an integer >= 1, got {m_values}")
    out = prepare_output(cfg.out)
    tasks = [(cfg, "pspo", r, {"fixed_M": int(m)}) for m in m_values for r in range(cfg.repeats)]
    results = _map(cfg, tasks)
    rows = [
        [m, res["repeat"], res["iterations"], res["converged"], res["trace"].total_evals]
        for (_, _, _, ov), res in zip(tasks, results)
        for m in [ov["fixed_M"]]
    ]
    path = out / "m_sweep.csv"
    _write_csv(path, SWEEP_COLUMNS, rows)
    return path


def run_noise_probe(cfg: ExperimentConfig, point=None, replicates: Optional[int] = None):
    """Estimate the noise variance at ``point`` and tabulate the required rounds.

    Returns ``(sigma2_hat, rows)`` and writes ``noise_probe.csv``; each row
    is ``(c, epsilon, sigma2_hat, M_required, M)`` with ``M`` capped at
    ``M_max`` from the PSPO settings (default 10**6 here).
    """
    K = cfg.probe_replicates if replicates is None else replicates
    if K < 2:
        raise ConfigError("noise probe needs at least 2 replicates")
    out = prepare_output(cfg.out)
    objective, start, _, _ = _setup(cfg, 0)
    x = start if point is None else np.asarray(point, dtype=np.float64)
    sigma2 = estimate_noise_variance(objective, x, K, derive_seed(cfg.seed, _PROBE))
    p = objective.dim
    M_max = int(cfg.pspo.get("M_max") or 10**6)
    rows = []
    for c in cfg.probe_c:
        for eps in cfg.probe_epsilon:
            spec = ToleranceSpec(float(eps), sigma2, float(c), M_max)
            rows.append([float(c), float(eps), sigma2, required_rounds(spec, p), rounds_for_tolerance(spec, p)])
    _write_csv(out / "noise_probe.csv", PROBE_COLUMNS, rows)
    return sigma2, rows


def run_calibrate(cfg: ExperimentConfig) -> dict:
    """A single SIR calibration run per selected optimizer."""
    if cfg.problem != "sir":
        raise ConfigError("calibrate needs problem = 'sir'")
    single = dataclasses.replace(cfg, repeats=1)
    paths = run_compare(single)
    with open(paths["final"], newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    estimates = {
        row["optimizer"]: SirParams.from_log([float(row["theta_0"]), float(row["theta_1"])]) for row in rows
    }
    return {"paths": paths, "estimates": estimates}


def config_with_env(data: dict, environ=None) -> dict:
    """Overlay ``PSPO_*`` environment variables onto a config dict."""
    environ = os.environ if environ is None else environ
    casts: dict[str, Any] = {
        "SEED": ("seed", int), "OUT": ("out", str), "REPEATS": ("repeats", int),
        "MAX_ITERS": ("max_iters", int), "OPTIMIZER": ("optimizer", str),
        "PROBLEM": ("problem", str), "DATA": ("data", str), "WORKERS": ("workers", int),
        "THRESHOLD": ("threshold", float),
    }
    data = dict(data)
    for suffix, (key, cast) in casts.items():
        raw = environ.get(f"PSPO_{suffix}")
        if raw is not None:
            try:
                data[key] = cast(raw)
            except ValueError as exc:
                raise ConfigError(f"PSPO_{suffix}={raw!r}: {exc}") from exc
    return data
