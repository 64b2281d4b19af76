"""Stochastic SIR model and a simulation-based pseudo-likelihood for calibration.

Dynamics are a discrete-time chain binomial: within a step of length ``dt``
each susceptible is infected with probability ``1 - exp(-beta*I*dt/N)`` and
each infectious individual recovers with probability ``1 - exp(-gamma*dt)``.

The pseudo-likelihood scores observed day-to-day increments.  New infections
over an interval are binomial in the susceptibles at its start, with an
infection probability that depends on how prevalence moves inside the
interval; that probability is estimated by simulating the interval from the
observed state ``replicates`` times and averaging the per-susceptible escape
probability.  This Monte-Carlo average is what makes the objective noisy,
with noise shrinking as ``replicates`` grows.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binom

from ..core import Objective

_PROB_CLAMP = 1e-12


class ConservationError(ValueError):
    """S + I + R is not constant across a series."""


@dataclass(frozen=True)
class SirParams:
    beta: float
    gamma: float

    def __post_init__(self):
        if not (self.beta >= 0 and self.gamma >= 0):
            raise ValueError(f"rates must be nonnegative, got beta={self.beta}, gamma={self.gamma}")

    @classmethod
    def from_log(cls, theta) -> "SirParams":
        with np.errstate(over="ignore"):
            b, g = np.exp(np.asarray(theta, dtype=np.float64))
        return cls(float(b), float(g))

    def to_log(self) -> np.ndarray:
        return np.log([self.beta, self.gamma])


@dataclass(frozen=True)
class EpidemicSeries:
    t: np.ndarray
    S: np.ndarray
    I: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        n = len(self.t)
        if n < 1 or not (len(self.S) == len(self.I) == len(self.R) == n):
            raise ValueError("series columns must be non-empty and of equal length")
        if np.any(np.diff(self.t) <= 0) or self.t[0] < 0:
            raise ValueError("time points must be nonnegative and strictly increasing")
        if min(self.S.min(), self.I.min(), self.R.min()) < 0:
            raise ValueError("compartment counts must be nonnegative")
        total = self.S + self.I + self.R
        bad = np.flatnonzero(total != total[0])
        if bad.size:
            k = int(bad[0])
            raise ConservationError(
                f"S+I+R = {total[k]} at t={self.t[k]:g}, expected N = {total[0]}"
            )

    @property
    def N(self) -> int:
        return int(self.S[0] + self.I[0] + self.R[0])

    def __len__(self):
        return len(self.t)


def simulate_sir(
    params: SirParams,
    init: tuple[int, int, int],
    horizon: float,
    dt: float = 0.1,
    seed: int = 0,
    obs_interval: float = 1.0,
) -> EpidemicSeries:
    """Simulate a chain-binomial SIR epidemic and record it every ``obs_interval`` days."""
    S, I, R = (int(v) for v in init)
    if min(S, I, R) < 0 or I < 1:
        raise ValueError(f"invalid initial state {init}: need nonnegative counts and I0 >= 1")
    if not dt > 0 or not horizon > 0:
        raise ValueError("dt and horizon must be positive")
    N = S + I + R
    rng = np.random.default_rng(seed)
    per_obs = max(1, round(obs_interval / dt))
    n_steps = int(round(horizon / dt))
    p_rec = -math.expm1(-params.gamma * dt)
    t, out = [0.0], [(S, I, R)]
    for step in range(1, n_steps + 1):
        new_inf = rng.binomial(S, -math.expm1(-params.beta * I * dt / N)) if I else 0
        new_rec = rng.binomial(I, p_rec) if I else 0
        S -= new_inf
        I += new_inf - new_rec
        R += new_rec
        if step % per_obs == 0:
            t.append(step * dt)
            out.append((S, I, R))
    arr = np.array(out, dtype=np.int64)
    return EpidemicSeries(np.array(t), arr[:, 0], arr[:, 1], arr[:, 2])


def _infection_probabilities(params, data, replicates, rng, dt):
    """Monte-Carlo per-susceptible infection probability for each interval."""
    S0, I0 = data.S[:-1], data.I[:-1]
    span = np.diff(data.t)
    n_sub = np.maximum(1, np.round(span / dt).astype(int))
    h = span / n_sub
    N = data.N
    s = np.tile(S0, (replicates, 1))
    i = np.tile(I0, (replicates, 1))
    pressure = np.zeros(s.shape)
    p_rec = -np.expm1(-params.gamma * h)
    for step in range(int(n_sub.max())):
        active = step < n_sub
        with np.errstate(invalid="ignore"):
            # beta may overflow to inf far out in log space; no infectives means no pressure
            rate = np.where(i > 0, params.beta * i * h / N, 0.0)
        pressure += np.where(active, rate, 0.0)
        new_inf = rng.binomial(s, np.where(active, -np.expm1(-rate), 0.0))
        new_rec = rng.binomial(i, np.where(active, p_rec, 0.0))
        s = s - new_inf
        i = i + new_inf - new_rec
    return np.mean(-np.expm1(-pressure), axis=0)


def sir_neg_log_pseudolikelihood(
    params: SirParams,
    data: EpidemicSeries,
    replicates: int = 20,
    seed: int = 0,
    dt: float = 0.1,
) -> float:
    """Negative log pseudo-likelihood of observed increments (lower is better).

    Infections over ``[t_k, t_k+1)`` are scored as
    ``Binomial(S_k, p_inf)`` with ``p_inf`` simulated (see module docstring).
    Recoveries are scored as ``Binomial(I_k + x_k, q)`` where ``x_k`` are the
    observed new infections and ``q`` blends the recovery probability of
    those infectious from the start with that of those infected mid-interval.
    Probabilities are clamped to ``[1e-12, 1 - 1e-12]``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if len(data) < 2:
        raise ValueError("need at least two observations")
    rng = np.random.default_rng(seed)
    S, I, R = data.S, data.I, data.R
    new_inf = S[:-1] - S[1:]
    new_rec = R[1:] - R[:-1]
    if np.any(new_inf < 0) or np.any(new_rec < 0):
        raise ValueError("S must be nonincreasing and R nondecreasing")

    p_inf = _infection_probabilities(params, data, replicates, rng, dt)
    p_inf = np.clip(p_inf, _PROB_CLAMP, 1 - _PROB_CLAMP)

    span = np.diff(data.t)
    gs = params.gamma * span
    q_start = -np.expm1(-gs)
    with np.errstate(divide="ignore", invalid="ignore"):
        # infected uniformly inside the interval: 1 - (1 - e^-x)/x
        q_mid = np.where(gs > 1e-8, 1.0 - q_start / gs, gs / 2)
    at_risk = I[:-1] + new_inf
    q = np.where(at_risk > 0, (I[:-1] * q_start + new_inf * q_mid) / np.maximum(at_risk, 1), q_start)
    q = np.clip(q, _PROB_CLAMP, 1 - _PROB_CLAMP)

    ll = binom.logpmf(new_inf, S[:-1], p_inf).sum() + binom.logpmf(new_rec, at_risk, q).sum()
    return float(-ll)


def sir_objective(
    data: EpidemicSeries,
    replicates: int = 20,
    dt: float = 0.1,
) -> Objective:
    """Objective over ``(log beta, log gamma)`` for use with the optimizers."""

    def fn(theta, seed):
        return sir_neg_log_pseudolikelihood(SirParams.from_log(theta), data, replicates, seed, dt)

    return Objective(fn, 2, name=f"sir_pseudolikelihood(N={data.N})")


def load_epidemic_csv(path) -> EpidemicSeries:
    """Read a ``t,S,I,R`` CSV file into an :class:`EpidemicSeries`."""
    path = Path(path)
    rows = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty file")
        if [h.strip() for h in header] != ["t", "S", "I", "R"]:
            raise ValueError(f"{path}: expected header t,S,I,R, got {','.join(header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            try:
                t = float(row[0])
                counts = [int(cell) for cell in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from exc
            rows.append((t, *counts))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.array(rows, dtype=np.float64)
    counts = arr[:, 1:].astype(np.int64)
    N = counts[0].sum()
    bad = np.flatnonzero(counts.sum(axis=1) != N)
    if bad.size:
        k = int(bad[0])
        raise ConservationError(
            f"{path}:{k + 2}: S+I+R = {counts[k].sum()} at t={arr[k, 0]:g}, expected N = {N}"
        )
    return EpidemicSeries(arr[:, 0], counts[:, 0], counts[:, 1], counts[:, 2])


def write_epidemic_csv(series: EpidemicSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "S", "I", "R"])
        for row in zip(series.t, series.S, series.I, series.R):
            w.writerow([f"{row[0]:g}", *(int(v) for v in row[1:])])
