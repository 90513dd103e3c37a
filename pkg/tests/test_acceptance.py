"""Acceptance suite.

Each test checks one numbered criterion at its stated tolerance and prints a
single ``criterion N: PASS|FAIL`` line (visible with ``pytest -s`` and in the
terminal summary).  The Monte Carlo criteria are marked ``slow`` but run by
default.
"""

import json
import math
import time
import warnings

import numpy as np
import pytest

from dualcv import cli
from dualcv.biprobit import BiprobitSpec, fit_biprobit
from dualcv.bvn import bvn_cdf, norm_quantile, quadrant_probs
from dualcv.data import consistency_filter
from dualcv.effects import ame
from dualcv.probit import ModelSpec, fit_probit, probit_loglik
from dualcv.simulate import monte_carlo, survey_profile
from dualcv.welfare import ShadowWage, cv_total, shadow_wage
import oracles as P
from oracles import (
    PROBIT8_X,
    PROBIT8_Y,
    bvn_cdf_quad,
    consistency_fixture_210,
    counterfactual_ame,
    make_dataset,
    probit8_oracle,
    probit_loglik_plain,
)

MC_SEED = 20261018
RESULTS: dict[int, str] = {}


def verdict(number, ok, detail):
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS[number] = line
    print(line)
    assert ok, line


def quiet(f, *a, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return f(*a, **kw)


def test_01_bvn_accuracy():
    hs = np.arange(-3.0, 3.0 + 1e-9, 0.75)
    rhos = (-0.95, -0.5, 0.0, 0.3, 0.5, 0.8, 0.95)
    H, K, R = (a.ravel() for a in np.meshgrid(hs, hs, rhos, indexing="ij"))
    t0 = time.perf_counter()
    got = np.array([bvn_cdf(h, k, r) for h, k, r in zip(H, K, R)])
    elapsed = time.perf_counter() - t0
    ref = np.array([bvn_cdf_quad(h, k, r) for h, k, r in zip(H, K, R)])
    err = float(np.max(np.abs(got - ref)))
    verdict(1, err <= 1e-8 and elapsed < 10, f"max |err| {err:.2e} over {H.size} points, {elapsed:.2f} s")


def test_02_quadrant_partition():
    rng = np.random.default_rng(2)
    v1, v2 = rng.uniform(-6, 6, 10_000), rng.uniform(-6, 6, 10_000)
    rho = rng.uniform(-0.999, 0.999, 10_000)
    dev = max(abs(quadrant_probs(a, b, r).total() - 1.0) for a, b, r in zip(v1, v2, rho))
    verdict(2, dev <= 1e-12, f"max |sum - 1| {dev:.2e} on 10^4 triples")


def test_03_probit_correctness():
    y = np.array([1, 1, 0, 1, 0, 1, 1, 0, 1, 1])
    c = fit_probit(ModelSpec("y1", ()), make_dataset(y, np.zeros(y.size, int))).coefficients["const"]
    e_int = abs(c - norm_quantile(y.mean()))

    fit8 = fit_probit(ModelSpec("y1", ("x",)), make_dataset(PROBIT8_Y, np.zeros(8, int), x=PROBIT8_X))
    e_grid = float(np.max(np.abs(fit8.params - probit8_oracle())))

    rng = np.random.default_rng(3)
    x, d = rng.normal(size=200), rng.integers(0, 2, 200).astype(float)
    yy = (0.2 + 0.6 * x - 0.4 * d + rng.normal(size=200) > 0).astype(int)
    ds = make_dataset(yy, np.zeros(200, int), x=x, d=d)
    X = np.column_stack([np.ones(200), x, d])
    beta = np.array([0.1, 0.5, -0.2])
    _, g = probit_loglik(ModelSpec("y1", ("x", "d")), ds, beta)
    fd = np.array([(probit_loglik_plain(yy, X, beta + e) - probit_loglik_plain(yy, X, beta - e)) / 2e-6 for e in np.eye(3) * 1e-6])
    e_grad = float(np.max(np.abs(g - fd) / np.abs(fd)))
    ok = e_int <= 1e-8 and e_grid <= 1e-3 and e_grad <= 1e-6
    verdict(3, ok, f"intercept {e_int:.1e}, 8-record grid {e_grid:.1e}, gradient rel {e_grad:.1e}")


def test_04_joint_model_nesting():
    spec = BiprobitSpec(ModelSpec("y1", ("bid_cash", "x")), ModelSpec("y2", ("y1", "bid_labor", "x")))
    worst = math.inf
    fitted = 0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(80, 250))
        rho, eta = rng.uniform(-0.8, 0.8), rng.uniform(-1.5, 1.5)
        x = rng.normal(size=n)
        bc = rng.choice(P.SURVEY_CASH_BIDS, n)
        bl = rng.choice(P.SURVEY_LABOR_BIDS, n)
        e1 = rng.normal(size=n)
        e2 = rho * e1 + math.sqrt(1 - rho * rho) * rng.normal(size=n)
        y1 = (1.5 - 0.03 * bc + 0.5 * x + e1 > 0).astype(int)
        y2 = (1.0 + eta * y1 - 0.4 * bl + 0.3 * x + e2 > 0).astype(int)
        ds = make_dataset(y1, y2, bid_cash=bc, bid_labor=bl, x=x)
        joint = quiet(fit_biprobit, spec, ds)
        u1, u2 = fit_probit(spec.eq1, ds), fit_probit(spec.eq2, ds)
        worst = min(worst, joint.loglik - (u1.loglik + u2.loglik))
        fitted += 1
    verdict(4, fitted == 50 and worst >= -1e-6, f"min(joint - separate loglik) {worst:.2e} over {fitted} datasets")


@pytest.mark.slow
def test_05_parameter_recovery():
    cfg = survey_profile(n=5000, rho=0.9, seed=MC_SEED)
    t0 = time.perf_counter()
    res = monte_carlo(cfg, 200)
    elapsed = time.perf_counter() - t0
    slopes = {k: v["abs_bias"] for k, v in res.parameters.items() if k not in ("eq1:const", "eq2:const", "athrho", "rho")}
    worst = max(slopes, key=slopes.get)
    cover = res.parameters["eq2:y1"]["ci_coverage"]
    ok = res.failures == 0 and slopes[worst] <= 0.05 and 0.90 <= cover <= 0.99 and elapsed < 300
    verdict(5, ok, f"max |bias| {slopes[worst]:.4f} ({worst}), eta coverage {cover:.3f}, failures {res.failures}, {elapsed:.0f} s")


@pytest.mark.slow
def test_06_lr_test_size():
    cfg = survey_profile(n=2000, rho=0.0, seed=MC_SEED + 1)
    cfg = cfg.replace(eq2_coefs=dict(cfg.eq2_coefs, y1=0.0))
    res = monte_carlo(cfg, 200)
    rate = res.lr_rejection_rate
    verdict(6, res.failures == 0 and 0.01 <= rate <= 0.11, f"rejection rate {rate:.3f}, failures {res.failures}")


@pytest.mark.slow
def test_07_misspecification():
    cfg = survey_profile(n=194, rho=0.8, seed=MC_SEED + 2)
    cfg = cfg.replace(eq2_coefs=dict(cfg.eq2_coefs, y1=-1.2))
    eta = monte_carlo(cfg, 200).eta_univariate
    ok = eta["bias"] > 0.5 and eta["flip_or_insignificant_rate"] >= 0.6
    verdict(7, ok, f"univariate eta bias {eta['bias']:+.3f}, flip-or-insignificant {eta['flip_or_insignificant_rate']:.3f}")


def test_08_welfare_arithmetic():
    sw = shadow_wage(P.WAGE_SLACK, P.WAGE_PEAK, P.SHADOW_RATIO)
    e_sw = max(abs(sw.lower - P.SHADOW_LOWER), abs(sw.upper - P.SHADOW_UPPER))
    tv = cv_total(P.WTP_MEAN, P.ANNUAL_DAYS / 12, ShadowWage(P.SHADOW_RATIO, P.SHADOW_LOWER, P.SHADOW_UPPER))
    e_days = max(abs(tv.labor_value_slack - P.WTC_SLACK), abs(tv.labor_value_peak - P.WTC_PEAK))
    # labor value 177.82 enters through its days-equivalent at the mean shadow wage
    total = cv_total(P.WTP_MEAN, P.WTC_AVERAGE / (12 * sw.mean_w), sw).total
    e_total = abs(total - P.TOTAL)
    e_share = abs(P.WTP_MEAN / total - P.CASH_SHARE)
    ok = e_sw <= 0.01 and e_days <= 0.05 and e_total <= 0.01 and e_share <= 0.001
    verdict(8, ok, f"shadow wage {e_sw:.4f}, seasonal values {e_days:.4f}, total {e_total:.4f}, share {e_share:.5f}")


def test_09_ame_oracle():
    worst = 0.0
    zero_ok = True
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        n = int(rng.integers(100, 400))
        x = rng.normal(size=n)
        d = rng.integers(0, 2, n).astype(float)
        y1 = (rng.normal(0.3, 1) + rng.normal(0, 0.7) * d + 0.5 * x + rng.normal(size=n) > 0).astype(int)
        y2 = (rng.normal(0, 0.5) + rng.normal(0, 1) * y1 - 0.4 * x + rng.normal(size=n) > 0).astype(int)
        ds = make_dataset(y1, y2, x=x, d=d, kinds={"d": "dummy"})
        fit = fit_probit(ModelSpec("y2", ("y1", "x", "d")), ds)
        X = np.column_stack([np.ones(n), y1, x, d])
        rows = {r.variable: r.ame for r in ame(fit, ds)}
        worst = max(worst, abs(rows["y1"] - counterfactual_ame(fit.params, X, 1)), abs(rows["d"] - counterfactual_ame(fit.params, X, 3)))
        fit.coefficients["d"] = 0.0
        zero_ok &= next(r.ame for r in ame(fit, ds, variables=["d"])) == 0.0
    verdict(9, worst <= 1e-14 and zero_ok, f"max |AME - counterfactual| {worst:.1e} on 20 fits, zero coefficient gives 0: {zero_ok}")


@pytest.mark.slow
def test_10_determinism(tmp_path):
    paths = {}
    for name, threads in (("a", 1), ("b", 1), ("c", 2)):
        paths[name] = tmp_path / f"{name}.json"
        argv = ["simulate", "--seed", "7", "--reps", "50", "--threads", str(threads), "--out", str(paths[name])]
        assert cli.main(argv) == 0
    a, b, c = (paths[k].read_bytes() for k in "abc")
    assert json.loads(a)["replications"] == 50
    verdict(10, a == b == c, f"repeat identical {a == b}, 2 workers identical {a == c}, {len(a)} bytes")


def test_11_consistency_filter():
    ds, bad = consistency_fixture_210()
    kept, excluded = consistency_filter(ds)
    ids = {e.id for e in excluded}
    ok = ds.n == 210 and len(excluded) == 16 and kept.n == 194 and ids == bad
    verdict(11, ok, f"input {ds.n}, excluded {len(excluded)}, kept {kept.n}")

