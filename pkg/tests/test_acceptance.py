"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line in the summary."""

import json
import time
from pathlib import Path

import numpy as np
import pytest

from heatcast.anomaly import DetectorConfig, flag_cdf, inject
from heatcast.combiners import CombinerWindow, fit_gamlss, fit_qra
from heatcast.config import load_config
from heatcast.distributions import ZeroMassGaussian, ZeroMassT
from heatcast.forecasters import fit_lasso
from heatcast.metrics import crps_gaussian_closed, crps_sample
from heatcast.pipeline import Pipeline

from .conftest import ACCEPTANCE

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def record(n, ok, detail):
    ACCEPTANCE[f"criterion {n}"] = (bool(ok), detail)
    assert ok, detail


def test_criterion_1_crps_estimator():
    t0 = time.perf_counter()
    worst = 0.0
    # the zero-mass Gaussian is shifted far from 0 so it is an ordinary Gaussian
    shift = 1000.0
    for mu in (0.0, 10.0):
        for sigma in (1.0, 10.0):
            for k in np.linspace(-2, 2, 9):
                y = mu + k * sigma
                est = crps_sample(ZeroMassGaussian(mu + shift, sigma), y + shift, np.random.default_rng(2019))
                exact = crps_gaussian_closed(mu, sigma, y)
                worst = max(worst, abs(est / exact - 1))
    elapsed = time.perf_counter() - t0
    record(1, worst < 0.03 and elapsed < 10, f"max rel err {worst:.2e} (< 3e-2), {elapsed:.2f}s (< 10s)")


def test_criterion_2_lasso_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(5):
        r = np.random.default_rng(100 + seed)
        X = r.normal(size=(500, 18)) * r.uniform(0.5, 3, 18) + r.normal(0, 5, 18)
        y = 2.0 + X @ r.normal(size=18) + r.normal(0, 0.5, 500)
        A = np.column_stack([np.ones(500), X])
        beta = np.linalg.solve(A.T @ A, A.T @ y)
        m = fit_lasso(X, 0.0, y=y)
        worst = max(worst, np.max(np.abs(m.coefficients - beta[1:])))
    elapsed = time.perf_counter() - t0
    record(2, worst < 1e-6 and elapsed < 5, f"max |dbeta| {worst:.2e} (< 1e-6), {elapsed:.2f}s (< 5s)")


def test_criterion_3_quantile_regression():
    t0 = time.perf_counter()
    r = np.random.default_rng(3)
    y = r.gamma(3.0, 40.0, 2001)
    med = fit_qra(CombinerWindow(np.full((2001, 9), 50.0), y), levels=[0.5]).coefficients[0, 0]
    n = 2000
    base = r.uniform(100, 400, n)
    members = base[:, None] + r.normal(0, 15, (n, 9)) + r.normal(0, 5, 9)
    obs = np.maximum(base + 20 * r.standard_t(5, n), 0)
    levels = np.array([0.05, 0.5, 0.95])
    q = fit_qra(CombinerWindow(members, obs), levels=levels).raw_quantiles(members)
    cover = np.array([np.mean(obs <= q[:, k] + 1e-9) for k in range(3)])
    dev = np.max(np.abs(cover - levels))
    elapsed = time.perf_counter() - t0
    ok = med == np.median(y) and dev <= 3 / np.sqrt(n) and elapsed < 30
    record(3, ok, f"median exact={med == np.median(y)}, coverage {np.round(cover, 4).tolist()} "
                  f"(max dev {dev:.4f} <= {3 / np.sqrt(n):.4f}), {elapsed:.1f}s (< 30s)")


def test_criterion_4_gamlss_recovery():
    t0 = time.perf_counter()
    r = np.random.default_rng(4)
    n = 5000
    m1 = r.uniform(100, 300, n)
    members = np.column_stack([m1] + [r.uniform(100, 300, n) for _ in range(8)])
    y = np.maximum(m1 + 5 * r.standard_t(6, n), 0)
    fit = fit_gamlss(CombinerWindow(members, y))
    grid = np.linspace(fit.spline.lo, fit.spline.hi, 1000)
    mono = bool(np.all(np.diff(fit.log_sigma(grid)) >= -1e-9))
    elapsed = time.perf_counter() - t0
    ok = not fit.fallback and 0.9 <= fit.beta[1] <= 1.1 and 3 <= fit.nu <= 12 and mono and elapsed < 120
    record(4, ok, f"beta1 {fit.beta[1]:.4f}, nu {fit.nu:.2f}, spline nondecreasing={mono}, {elapsed:.1f}s (< 120s)")


def test_criterion_5_zero_mass_laws():
    t0 = time.perf_counter()
    dists = [ZeroMassGaussian(15.0, 20.0), ZeroMassT(15.0, 20.0, 3.0)]
    problems = []
    worst_rt = worst_ks = 0.0
    for d in dists:
        grid = np.linspace(-20, 200, 1000)
        F = d.cdf(grid)
        if np.any(np.diff(F) < 0) or F[0] != 0:
            problems.append("monotone")
        if np.any(np.abs(d.cdf(grid + 1e-12) - F) > 1e-9):
            problems.append("right-continuity")
        p0 = float(d.prob_zero)
        tau = np.linspace(p0 + 1e-6, 0.999, 1000)
        worst_rt = max(worst_rt, np.max(np.abs(d.cdf(d.quantile(tau)) - tau)))
        x = np.sort(d.sample(100_000, np.random.default_rng(5)))
        pts = np.r_[0.0, np.linspace(0, 200, 4001)]
        ecdf = np.searchsorted(x, pts, side="right") / x.size
        worst_ks = max(worst_ks, np.max(np.abs(ecdf - d.cdf(pts))))
    elapsed = time.perf_counter() - t0
    ok = not problems and worst_rt < 1e-9 and worst_ks < 0.01 and elapsed < 30
    record(5, ok, f"grid checks {problems or 'ok'}, roundtrip {worst_rt:.1e} (< 1e-9), "
                  f"KS {worst_ks:.1e} (< 0.01), {elapsed:.1f}s (< 30s)")


def test_criterion_6_calibration():
    r = np.random.default_rng(6)
    n = 5000
    d = ZeroMassGaussian(r.uniform(100, 400, n), r.uniform(10, 40, n))
    y = d.sample(1, r)[:, 0]
    F = d.cdf(y)
    fpr = {t: float(flag_cdf(F, DetectorConfig(t)).mean()) for t in (0.01, 0.05)}
    ok = all(abs(v - 2 * t) <= 0.01 for t, v in fpr.items())
    record(6, ok, "FPR " + ", ".join(f"{v:.4f} at tau {t} (2tau={2 * t})" for t, v in fpr.items()))


def test_criterion_7_injection_contract():
    t0 = time.perf_counter()
    r = np.random.default_rng(7)
    y = np.where(r.random(5000) < 0.15, 0.0, r.gamma(2.0, 60.0, 5000))
    ybar = y.mean()
    counts, negatives, small = [], 0, 0
    for child in np.random.SeedSequence(7).spawn(30):
        y_mod, rec = inject(y, 0.05, np.random.default_rng(child))
        counts.append(len(rec))
        negatives += int(np.sum(y_mod < 0))
        small += int(np.sum(np.abs(rec.injected - rec.original) < 0.2 * ybar - 1e-9))
    elapsed = time.perf_counter() - t0
    ok = set(counts) == {250} and negatives == 0 and small == 0 and elapsed < 10
    record(7, ok, f"counts {sorted(set(counts))}, negatives {negatives}, |d| < 0.2 ybar: {small}, {elapsed:.2f}s (< 10s)")


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    cfg = load_config(CONFIGS / "acceptance.cfg")
    out = tmp_path_factory.mktemp("acceptance")
    t0 = time.perf_counter()
    Pipeline(cfg, out).run("report")
    return json.loads((out / "report.json").read_text()), time.perf_counter() - t0


def test_criterion_8_end_to_end(full_run):
    report, elapsed = full_run
    ok = True
    parts = []
    for name, b in sorted(report["buildings"].items()):
        members = {k: v["rmse"] for k, v in b["point"].items() if k != "ensemble_mean"}
        ratio = b["point"]["ensemble_mean"]["rmse"] / min(members.values())
        crps = b["crps"]
        gam_best = all(crps["GAMLSS"] <= crps[m] for m in ("EA", "EA-EV", "Naive"))
        gap = b["roc"]["GAMLSS"]["tpr_at_fpr_0.1"] - b["roc"]["Naive"]["tpr_at_fpr_0.1"]
        ok &= ratio <= 1.02 and gam_best and gap >= 0.05
        parts.append(
            f"{name}: (a) rmse ratio {ratio:.4f} (<= 1.02) (b) CRPS GAMLSS {crps['GAMLSS']:.2f} vs "
            f"EA {crps['EA']:.2f} EA-EV {crps['EA-EV']:.2f} Naive {crps['Naive']:.2f} "
            f"(c) TPR gap at FPR 0.1 {gap:.3f} (>= 0.05)"
        )
    parts.append(f"runtime {elapsed / 60:.1f} min (< 30)")
    record(8, ok and elapsed < 1800, "; ".join(parts))


DETERMINISM = """\
input = synthetic
synthetic.n_buildings = 1
master_seed = 99
validation_days_limit = 15
test_days_limit = 2
lasso_grid = 0.1
gam_grid = 0.1
gbr_grid = 3
retrain_every_days = 5
gbqrt_refit_every_days = 10
crps_samples = 100
anomaly_runs = 3
"""


def test_criterion_9_determinism(tmp_path):
    cfg_path = tmp_path / "det.cfg"
    cfg_path.write_text(DETERMINISM)
    outputs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        Pipeline(load_config(cfg_path), out).run("report")
        outputs.append({str(p.relative_to(out)): p.read_bytes() for p in sorted(out.rglob("*.csv"))})
    same = outputs[0] == outputs[1]
    models = sorted(p.split("_", 2)[-1][:-4] for p in outputs[0] if p.startswith("quantiles/"))
    record(9, same and len(outputs[0]) > 0, f"{len(outputs[0])} CSV files byte-identical={same}; models {models}")
