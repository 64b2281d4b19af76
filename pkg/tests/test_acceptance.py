"""Acceptance suite: one test, and one summary line, per criterion.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL table with the
measured quantities is printed at the end of the module.
"""
import csv
import os
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import binomtest

from conftest import linear_objective, quadratic_objective, random_spd
from pspo.experiments import config_from_dict, run_calibrate, run_compare, run_m_sweep, run_noise_probe
from pspo.gradient import ToleranceSpec, psp_gradient, rounds_for_tolerance
from pspo.hessian import curvature_along, full_hessian_estimate, reduced_hessian
from pspo.optimizers import PspoConfig, StopCriteria, pspo_minimize
from pspo.perturbation import build_perturbations, sample_delta0, scheme_block, spans_space
from pspo.problems import NoisyQuadratic, SirParams

WORKERS = os.cpu_count() or 1
RESULTS = {}


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None:
        return
    reporter.write_sep("-", "acceptance criteria")
    for key in sorted(RESULTS):
        ok, detail = RESULTS[key]
        reporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    assert ok, detail


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_ac01_round_count_bound():
    q = NoisyQuadratic(5, 3.0)
    obj = q.objective()
    M = rounds_for_tolerance(ToleranceSpec(1.0, 9.0, 0.1), 5)
    g = 2 * (np.zeros(5) - 1)
    misses = sum(np.linalg.norm(psp_gradient(obj, np.zeros(5), 0.1, M, s).g_hat - g) >= 1 for s in range(200))
    ci = binomtest(int(misses), 200).proportion_ci(0.99)
    record("AC01", M == 4500 and ci.low <= 0.5,
           f"M={M}, miss rate {misses}/200 = {misses / 200:.3f}, 99% CI [{ci.low:.3f}, {ci.high:.3f}] vs 0.5")


def test_ac02_spanning():
    bad = [
        (p, s) for p in [1] + list(range(3, 26)) for s in range(100)
        if not spans_space(scheme_block(sample_delta0(p, s)))
    ]
    p2_spanning = sum(spans_space(scheme_block(sample_delta0(2, s))) for s in range(100))
    record("AC02", not bad and p2_spanning == 0,
           f"{len(bad)} rank-deficient blocks for p != 2; {p2_spanning}/100 literal p=2 blocks full rank")


def test_ac03_trace_bound():
    worst, violations, checked = {}, 0, 0
    for p in range(3, 26):
        for M in range(max(4, p), 3 * p + 1):
            for s in range(50):
                D = build_perturbations(p, M, s).matrix
                t = np.trace(np.linalg.inv(D @ D.T))
                checked += 1
                if t > p / 4 + 1e-9:
                    violations += 1
                    worst[(p, M)] = max(worst.get((p, M), 0.0), t)
    detail = ", ".join(f"p={p} M={M}: {t:.3f} > {p / 4}" for (p, M), t in sorted(worst.items()))
    record("AC03", violations == 0, f"{violations}/{checked} matrices exceed p/4 ({detail or 'none'})")


def test_ac04_unbiased():
    p, N = 6, 10**4
    a = np.array([1.5, -2.0, 0.5, 3.0, -0.7, 0.0])
    obj = linear_objective(a, sigma=1.0)
    G = np.array([psp_gradient(obj, np.zeros(p), 0.1, p, 50_000 + s).g_hat for s in range(N)])
    z = np.abs(G.mean(axis=0) - a) / (G.std(axis=0, ddof=1) / np.sqrt(N))
    record("AC04", np.all(z <= 4), f"max |z| over coordinates = {z.max():.2f} (limit 4)")


def test_ac05_reduced_hessian_identity():
    rng = np.random.default_rng(2024)
    worst_rel, worst_full = 0.0, 0.0
    for i in range(50):
        p = 2 + i % 7
        B = rng.normal(size=(p, p))
        A = 0.5 * (B + B.T)
        x, d = rng.normal(size=p), rng.normal(size=p)
        h = reduced_hessian(2 * A @ (x + d), 2 * A @ (x - d), d)
        truth = d @ (2 * A) @ d
        worst_rel = max(worst_rel, abs(curvature_along(h, d) - truth) / abs(truth))
        H = full_hessian_estimate(lambda y: 2 * A @ y, x, 0.1 * np.eye(p))
        worst_full = max(worst_full, np.abs(H - 2 * A).max())
    record("AC05", worst_rel <= 1e-8 and worst_full <= 1e-9,
           f"max rel curvature error {worst_rel:.2e} (<= 1e-8); max |H - 2A| {worst_full:.2e} (<= 1e-9)")


def test_ac06_quadratic_comparison(tmp_path):
    cfg = config_from_dict({"repeats": 200, "max_iters": 100, "seed": 1, "out": str(tmp_path), "workers": WORKERS})
    s = {r["optimizer"]: r for r in read(run_compare(cfg)["summary"])}
    pm, sm = float(s["pspo"]["iters_median"]), float(s["spsa"]["iters_median"])
    pn, sn = float(s["pspo"]["nonconverged_rate"]), float(s["spsa"]["nonconverged_rate"])
    record("AC06", pm < sm and pn <= sn,
           f"median iterations PSPO {pm:g} vs SPSA {sm:g}; non-convergence {pn:.3f} vs {sn:.3f}")


def test_ac07_m_sweep(tmp_path):
    cfg = config_from_dict({"repeats": 50, "max_iters": 100, "seed": 1, "out": str(tmp_path), "workers": WORKERS})
    rows = read(run_m_sweep(cfg, [1, 2, 5, 10, 20]))
    means = {m: np.mean([int(r["iterations"]) for r in rows if int(r["M"]) == m]) for m in (1, 2, 5, 10, 20)}
    record("AC07", means[20] <= 0.8 * means[1],
           "mean iterations by M: " + ", ".join(f"{m}: {v:.1f}" for m, v in means.items()))


def test_ac08_cg_finite_termination():
    worst, worst_iters = 0.0, 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        A = random_spd(rng, 6)
        x_star = rng.normal(size=6)
        cfg = PspoConfig(c_tilde=1.0, sigma2=0.0, stop=StopCriteria(max_iters=6))
        _, trace = pspo_minimize(
            quadratic_objective(A), rng.normal(size=6) * 3, cfg, gradient=lambda th, M, s: 2 * A @ (th - x_star)
        )
        errs = [np.linalg.norm(r.theta - x_star) for r in trace.iterations]
        worst = max(worst, min(errs))
        worst_iters = max(worst_iters, next(i + 1 for i, e in enumerate(errs) if e == min(errs)))
    record("AC08", worst <= 1e-8, f"20 random p=6 quadratics: worst error {worst:.2e} reached by iteration {worst_iters}")


def test_ac09_sir_calibration(tmp_path):
    cfg = config_from_dict({"problem": "sir", "repeats": 20, "max_iters": 30, "seed": 1, "out": str(tmp_path),
                            "workers": WORKERS})
    paths = run_compare(cfg)
    truth = SirParams(cfg.sir.beta, cfg.sir.gamma)
    final = read(paths["final"])
    runs = read(paths["runs"])
    hits = 0
    complete = True
    for row in final:
        est = SirParams.from_log([float(row["theta_0"]), float(row["theta_1"])])
        if row["optimizer"] == "pspo":
            hits += abs(est.beta / truth.beta - 1) <= 0.25 and abs(est.gamma / truth.gamma - 1) <= 0.25
        ks = [int(r["k"]) for r in runs if r["optimizer"] == row["optimizer"] and r["repeat"] == row["repeat"]]
        complete &= row["stop_reason"] in ("step_size", "max_iters") and ks == list(range(len(ks))) and len(ks) >= 1
    with open(paths["histogram"], newline="", encoding="utf-8") as fh:
        hist = list(csv.reader(fh))
    fmt = hist[0] == ["iterations", "pspo", "spsa"] and [int(r[0]) for r in hist[1:]] == list(range(1, 31))
    fmt &= all(sum(int(r[i]) for r in hist[1:]) == 20 for i in (1, 2))
    record("AC09", hits >= 14 and complete and fmt,
           f"PSPO within 25%: {hits}/20 (need 14); traces complete: {complete}; histogram format ok: {fmt}")


def test_ac10_determinism(tmp_path):
    def files(tag):
        base = {"seed": 5, "workers": WORKERS}
        out = tmp_path / tag
        run_compare(config_from_dict({**base, "repeats": 20, "max_iters": 40, "out": str(out / "quad")}))
        run_compare(config_from_dict({**base, "problem": "sir", "repeats": 3, "max_iters": 10, "out": str(out / "sir")}))
        run_m_sweep(config_from_dict({**base, "repeats": 5, "max_iters": 30, "out": str(out / "sweep")}), [1, 5, 20])
        run_noise_probe(config_from_dict({**base, "out": str(out / "probe")}), None, 500)
        run_calibrate(config_from_dict({**base, "problem": "sir", "max_iters": 10, "out": str(out / "cal")}))
        return {p.relative_to(out): p.read_bytes() for p in sorted(out.rglob("*.csv"))}

    a, b = files("a"), files("b")
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    record("AC10", same and len(a) >= 12, f"{len(a)} CSV files compared across reruns; identical: {same}")
