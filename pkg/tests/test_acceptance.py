"""Acceptance suite: one test (and one summary line) per criterion.

Each test records ``ACCEPTANCE n PASS|FAIL`` with the measured numbers; the
lines are printed in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.special import ndtr, ndtri

from hermite_risk.cli import main as cli_main
from hermite_risk.expansion import (
    conditional_mu2,
    conditional_mu3,
    conditional_tables,
    expand_portfolio,
    tail_split,
)
from hermite_risk.hermite import (
    gauss_hermite_rule,
    he_all,
    mehler_kernel,
    mehler_partial_sum,
    triple_product_integral,
)
from hermite_risk.measures import RiskConfig, analyze
from hermite_risk.montecarlo import SimConfig, simulate
from hermite_risk.portfolio import (
    DefaultIndicator,
    portfolio_from_arrays,
    save_portfolio,
    synthesize_benchmark,
    synthesize_heterogeneous,
)

from conftest import random_portfolio
from oracles import gaussian_toy_errors, systematic_variance

RESULTS = {}


def record(n, ok, detail):
    RESULTS[n] = f"ACCEPTANCE {n} {'PASS' if ok else 'FAIL'}: {detail}"
    assert ok, RESULTS[n]


def rel(a, b):
    return (a - b) / b


# ---------------------------------------------------------------- 1


def test_criterion_1_vasicek_equivalence():
    t0 = time.perf_counter()
    rho, pd, alpha = 0.6, 0.01, 0.001
    p = portfolio_from_arrays([1.0], [rho], [[1.0]], [DefaultIndicator(pd)])
    rep = analyze(p, RiskConfig(alpha=alpha, orders=("onef",), onef_order=40))
    e = expand_portfolio(p, onef_order=40)
    tc = tail_split(e)
    eta = np.linspace(-4, 4, 801)
    oracle = ndtr((rho * eta - ndtri(pd)) / math.sqrt(1 - rho ** 2))
    cond_err = float(np.max(np.abs(tc.v1f_value(eta) - oracle)))
    q = ndtr((rho * ndtri(alpha) - ndtri(pd)) / math.sqrt(1 - rho ** 2))
    var_err = abs(rep.var_total - (rep.expected_value - q))
    elapsed = time.perf_counter() - t0
    record(1, cond_err < 1e-3 and var_err < 2e-3 and elapsed < 1.0,
           f"max |E[v|eta] err| {cond_err:.2e} (<1e-3), VaR err {var_err:.2e} (<2e-3), {elapsed:.2f}s (<1s)")


# ---------------------------------------------------------------- 2


def test_criterion_2_math_kernels():
    t0 = time.perf_counter()
    rule = gauss_hermite_rule(256)
    h = he_all(20, rule.nodes)
    norms = np.sqrt([float(math.factorial(n)) for n in range(21)])
    gram = (h * rule.weights) @ h.T / np.outer(norms, norms)
    orth_err = float(np.max(np.abs(gram - np.eye(21))))

    g = np.linspace(-3, 3, 13)
    E, H = np.meshgrid(g, g)
    mehler_ok = True
    for rho in (0.3, 0.6, 0.9):
        exact = mehler_kernel(rho, E, H)
        errs = [np.max(np.abs(mehler_partial_sum(rho, E, H, n) - exact)) for n in range(10, 60, 5)]
        mehler_ok &= all(b < a or max(a, b) < 1e-12 for a, b in zip(errs, errs[1:]))
        mehler_ok &= errs[-1] < 0.1 * errs[0]

    r128 = gauss_hermite_rule(128)
    h10 = he_all(10, r128.nodes)
    tri_err = 0.0
    for n in range(11):
        for m in range(11):
            for k in range(11):
                quad = np.sum(r128.weights * h10[n] * h10[m] * h10[k])
                scale = math.sqrt(math.factorial(n) * math.factorial(m) * math.factorial(k))
                tri_err = max(tri_err, abs(quad - triple_product_integral(n, m, k)) / scale)
    t123 = triple_product_integral(1, 2, 3)
    elapsed = time.perf_counter() - t0
    record(2, orth_err < 1e-8 and mehler_ok and tri_err < 1e-8 and t123 == 6.0 and elapsed < 10,
           f"orthonormal err {orth_err:.1e}, Mehler converges {mehler_ok}, "
           f"scaled triple err {tri_err:.1e}, triple(1,2,3) = {t123:g}, {elapsed:.2f}s")


# ---------------------------------------------------------------- 3


def test_criterion_3_variance_oracle():
    t0 = time.perf_counter()
    p = random_portfolio(5, 2, seed=31)
    rep = analyze(p, RiskConfig(sigma_order=30))
    oracle = systematic_variance(p)
    err = abs(rep.sigma ** 2 / oracle - 1)
    eul = abs(rep.contributions["sigma_c"].sum() / rep.sigma - 1)
    elapsed = time.perf_counter() - t0
    record(3, err < 1e-6 and eul < 1e-12 and elapsed < 5,
           f"sigma^2 rel err {err:.1e} (<1e-6), Euler sum rel err {eul:.1e} (<1e-12), {elapsed:.2f}s")


# ---------------------------------------------------------------- 4


def test_criterion_4_quantile_expansion():
    t0 = time.perf_counter()
    errs = gaussian_toy_errors(alpha=0.001, a=0.02, b=0.01, halvings=3)
    ratios = errs[:-1] / errs[1:]
    elapsed = time.perf_counter() - t0
    ok = bool(np.all((ratios >= 8) & (ratios <= 32))) and elapsed < 10
    record(4, ok, "error ratios per noise halving " + ", ".join(f"{r:.1f}" for r in ratios)
           + f" (in [8, 32]), {elapsed:.2f}s")


# ---------------------------------------------------------------- 5


def test_criterion_5_derivatives():
    t0 = time.perf_counter()
    p = random_portfolio(10, 3)
    e = expand_portfolio(p)
    tc = tail_split(e)
    worst = 0.0
    h = 1e-4

    def check(analytic, fd):
        nonlocal worst
        worst = max(worst, abs(analytic - fd) / max(abs(fd), 1e-12))

    for eta1 in (-3.09, -1.0, 0.5):
        for d in (1, 2, 3):
            check(tc.v1f_value(eta1, d), (tc.v1f_value(eta1 + h, d - 1) - tc.v1f_value(eta1 - h, d - 1)) / (2 * h))
        m0, m_up, m_dn = (conditional_tables(e, x) for x in (eta1, eta1 + h, eta1 - h))
        check(conditional_mu2(m0)[1], (conditional_mu2(m_up)[0] - conditional_mu2(m_dn)[0]) / (2 * h))
        a, up, dn = conditional_mu3(m0), conditional_mu3(m_up), conditional_mu3(m_dn)
        check(a[1], (up[0] - dn[0]) / (2 * h))
        check(a[2], (up[1] - dn[1]) / (2 * h))

    base = analyze(p)
    cfg = RiskConfig(principal=tuple(base.principal))
    keys = [k for k in base.breakdown] + ["var_c", "es_c"]
    hw = 1e-5
    for i in range(len(p)):
        w_up, w_dn = p.weights.copy(), p.weights.copy()
        w_up[i] *= 1 + hw
        w_dn[i] *= 1 - hw
        vals = [f.value for f in p.facilities]
        up = analyze(portfolio_from_arrays(w_up, p.rhos, p.loading_matrix, vals), cfg)
        dn = analyze(portfolio_from_arrays(w_dn, p.rhos, p.loading_matrix, vals), cfg)
        for k in keys:
            tot_up = up.breakdown.get(k, up.var_total if k == "var_c" else up.es_total)
            tot_dn = dn.breakdown.get(k, dn.var_total if k == "var_c" else dn.es_total)
            fd = (tot_up - tot_dn) / (2 * hw)
            if abs(fd) > 1e-9:
                check(base.contributions[k][i], fd)
    elapsed = time.perf_counter() - t0
    record(5, worst < 1e-4 and elapsed < 30, f"worst relative mismatch {worst:.1e} (<1e-4), {elapsed:.2f}s")


# ---------------------------------------------------------------- 6 and 8


@pytest.fixture(scope="module")
def concentrated_run():
    t0 = time.perf_counter()
    p = synthesize_benchmark("concentrated", (8, 12), loans=300, block=60, rho=0.6, pd=0.01,
                             factor_correlation=0.2)
    rep = analyze(p, RiskConfig(alpha=0.001, orders=("onef", "mf2", "mf3")))
    mc = simulate(p, SimConfig(scenarios=2_000_000, seed=7, mode="systematic", alpha=0.001))
    return p, rep, mc, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_6_concentrated_benchmark(concentrated_run):
    p, rep, mc, elapsed = concentrated_run
    cum = rep.cumulative_var()
    diffs = [rel(cum[k], mc.var_estimate) for k in ("1f", "1f+mf2", "1f+mf2+mf3")]
    se = mc.var_std_error / mc.var_estimate
    ok = (
        p.n_factors == 20 and len(p) == 300
        and diffs[0] < 0
        and abs(diffs[1]) < abs(diffs[0]) and abs(diffs[2]) < abs(diffs[1])
        and abs(diffs[2]) <= max(0.006, 3 * se)
        and elapsed < 600
    )
    record(6, ok, "1f / +mf2 / +mf3 vs MC " + " / ".join(f"{d:+.2%}" for d in diffs)
           + f", MC SE {se:.2%}, bound {max(0.006, 3 * se):.2%}, {elapsed:.0f}s")


@pytest.mark.slow
def test_criterion_8_allocation_consistency(concentrated_run):
    _, rep, mc, _ = concentrated_run
    z = (rep.contributions["var_c"] - mc.contributions) / mc.contribution_se
    frac = float(np.mean(np.abs(z) <= 3))
    med = float(np.median(np.abs(rep.contributions["var_c"] / mc.contributions - 1)))
    record(8, frac >= 0.9, f"{frac:.1%} of facilities within 3 SE (>=90%), "
           f"median |rel diff| {med:.2%}, window count {mc.window_count}")


# ---------------------------------------------------------------- 7


@pytest.mark.slow
def test_criterion_7_granular_benchmark():
    t0 = time.perf_counter()
    p = synthesize_heterogeneous(loans=200, factor_correlation=0.2)
    rep = analyze(p, RiskConfig(alpha=0.001))
    mc = simulate(p, SimConfig(scenarios=1_000_000, seed=11, mode="full", alpha=0.001))
    cum = rep.cumulative_var()
    syst = rel(cum["1f+mf2+mf3"], mc.var_estimate)
    ga2 = rel(cum["1f+mf2+mf3+ga2"], mc.var_estimate)
    ga3 = rel(cum["1f+mf2+mf3+ga2+ga3"], mc.var_estimate)
    se = mc.var_std_error / mc.var_estimate
    ga = rep.contributions["var_ga2"] + rep.contributions["var_ga3"]
    top = np.argsort(-p.weights, kind="stable")[:10]
    top_pos = bool(np.all(ga[top] > 0))
    med = float(np.median(ga))
    elapsed = time.perf_counter() - t0
    ok = (syst < 0 and abs(ga2) <= 0.015 and abs(ga3) <= max(0.008, 3 * se)
          and top_pos and med < 0 and elapsed < 900)
    record(7, ok, f"syst {syst:+.2%} (<0), +ga2 {ga2:+.2%} (|.|<=1.5%), +ga3 {ga3:+.2%} "
           f"(|.|<={max(0.008, 3 * se):.2%}), top-10 GA > 0 {top_pos}, median GA {med:+.2e} (<0), {elapsed:.0f}s")


# ---------------------------------------------------------------- 9


def test_criterion_9_determinism(tmp_path):
    p = random_portfolio(12, 3, seed=91)
    save_portfolio(p, tmp_path / "p.csv", tmp_path / "f.json")
    same = []
    for run in (1, 2):
        out = tmp_path / f"run{run}"
        assert cli_main(["analyze", str(tmp_path / "p.csv"), str(tmp_path / "f.json"),
                         "--out-dir", str(out), "--deterministic"]) == 0
        assert cli_main(["simulate", str(tmp_path / "p.csv"), str(tmp_path / "f.json"),
                         "--out-dir", str(out), "--scenarios", "200000", "--seed", "5",
                         "--mode", "full", "--deterministic", "--tail-dump"]) == 0
    for name in ("report.json", "contributions.csv", "simulation.json", "mc_contributions.csv", "tail.csv"):
        same.append((tmp_path / "run1" / name).read_bytes() == (tmp_path / "run2" / name).read_bytes())
    record(9, all(same), f"{sum(same)}/{len(same)} output files byte-identical across reruns")
