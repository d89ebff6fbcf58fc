"""Acceptance criteria 1-10, each at its stated tolerance.

Criteria 5-7 share one Monte Carlo run (500 replications per scenario at
n = 10,000) and take several minutes on a single core.
"""
import json
import os
import time

import numpy as np
import pytest

from monomed.cli import main
from monomed.crossfit import fit_crossfit, make_folds
from monomed.dataset import Dataset, write_csv
from monomed.estimator import EstimandSpec, EstimatorConfig, estimate, fit_rho
from monomed.learners import default_stack
from monomed.oracle import ESTIMANDS, a_depends_on_w_dgm, reference_dgm, remainder_check, verify_eif_mean_zero
from monomed.sim import report, run_study, sample_dgm, scenarios

PUBLISHED = {"nde": 0.1036, "nie": 0.0827}
PUBLISHED_BOUND = {"nde": 1.7858, "nie": 0.9293}
ALL_AAP = [EstimandSpec(a, ap) for a in (0, 1) for ap in (0, 1)]
MC_REPS, MC_N, MC_SEED = 500, 10_000, 2024


@pytest.fixture(scope="module")
def oracle_json(tmp_path_factory):
    out = tmp_path_factory.mktemp("acc") / "oracle.json"
    t0 = time.perf_counter()
    assert main(["oracle-check", "--out", str(out)]) == 0
    return json.loads(out.read_text()), time.perf_counter() - t0


@pytest.fixture(scope="module")
def mc_study():
    jobs = max(1, os.cpu_count() or 1)
    t0 = time.perf_counter()
    runs = {s.name: run_study(reference_dgm(), s, MC_REPS, MC_N, J=2, seed=MC_SEED, n_jobs=jobs) for s in scenarios()}
    elapsed = time.perf_counter() - t0
    print("\n" + report(list(runs.values())))
    print(f"Monte Carlo: {len(runs)} scenarios x {MC_REPS} reps at n={MC_N} in {elapsed / 60:.1f} min")
    return runs, elapsed


def test_c01_oracle_truths(oracle_json, acceptance_line):
    rep, secs = oracle_json
    got = {k: rep["truth"][k] for k in ("nde", "nie")}
    ok = all(abs(got[k] - PUBLISHED[k]) <= 5e-5 for k in got) and secs < 1.0
    acceptance_line(1, ok, f"NDE {got['nde']:.5f} (target 0.1036), NIE {got['nie']:.5f} (target 0.0827), "
                           f"tol 5e-5, {secs:.2f}s")
    assert ok


def test_c02_efficiency_bounds(oracle_json, acceptance_line):
    rep, secs = oracle_json
    got = rep["efficiency_bound"]
    ok = all(abs(got[k] - PUBLISHED_BOUND[k]) <= 5e-4 for k in PUBLISHED_BOUND) and secs < 1.0
    acceptance_line(2, ok, f"bounds NDE {got['nde']:.4f} (target 1.7858), NIE {got['nie']:.4f} (target 0.9293), "
                           "tol 5e-4")
    assert ok


def test_c03_eif_mean_zero(acceptance_line):
    t0 = time.perf_counter()
    worst = max(r for dgm in (reference_dgm(), a_depends_on_w_dgm()) for e in ALL_AAP
                for r in verify_eif_mean_zero(dgm, e).values())
    secs = time.perf_counter() - t0
    ok = worst < 1e-10 and secs < 1.0
    acceptance_line(3, ok, f"max |E[D_zz'] - theta_zz'| = {worst:.1e} over 2 DGMs x 4 (a,a') x 3 (z,z'), {secs:.2f}s")
    assert ok


def test_c04_remainder(acceptance_line):
    t0 = time.perf_counter()
    gap, ratios = 0.0, []
    for dgm in (reference_dgm(), a_depends_on_w_dgm()):
        for e in ESTIMANDS:
            rows = {eps: remainder_check(dgm, e, eps) for eps in (0.1, 0.05, 0.025)}
            gap = max(gap, max(r["abs_diff"] for r in rows[0.1]))
            for i in range(3):
                lhs = [rows[eps][i]["lhs"] for eps in (0.1, 0.05, 0.025)]
                if max(map(abs, lhs)) > 1e-14:
                    ratios += [lhs[0] / lhs[1], lhs[1] / lhs[2]]
    secs = time.perf_counter() - t0
    ok = gap < 1e-8 and all(3.5 <= r <= 4.5 for r in ratios) and secs < 5.0
    acceptance_line(4, ok, f"max |lhs - rhs| = {gap:.1e} at eps=0.1; halving ratios in "
                           f"[{min(ratios):.3f}, {max(ratios):.3f}], {secs:.2f}s")
    assert ok


def test_c05_mc_correct_specification(mc_study, acceptance_line):
    runs, elapsed = mc_study
    m = runs["all_correct"]
    ok = (m.nde.abs_bias <= 0.003 and 0.925 <= m.nde.coverage95 <= 0.965
          and m.nie.abs_bias <= 0.003 and 0.90 <= m.nie.coverage95 <= 0.965 and m.n_failed <= 0.01 * MC_REPS)
    acceptance_line(5, ok, f"NDE |bias| {m.nde.abs_bias:.4f} cov {m.nde.coverage95:.3f}; "
                           f"NIE |bias| {m.nie.abs_bias:.4f} cov {m.nie.coverage95:.3f}; "
                           f"all four scenarios took {elapsed / 60:.1f} min")
    assert ok


def test_c06_mc_misspecification_pattern(mc_study, acceptance_line):
    m = mc_study[0]["mu_rho_g_correct"]
    ok = m.nie.coverage95 < 0.60 and m.nde.coverage95 > 0.80
    acceptance_line(6, ok, f"mu_rho_g_correct: NIE cov {m.nie.coverage95:.3f} (need < 0.60), "
                           f"NDE cov {m.nde.coverage95:.3f} (need > 0.80)")
    assert ok


def test_c07_mc_robustness(mc_study, acceptance_line):
    runs = mc_study[0]
    vals = {(name, eff): getattr(m, eff).sqrt_n_abs_bias for name, m in runs.items() for eff in ("nde", "nie")}
    worst = max(vals, key=vals.get)
    ok = all(v < 0.35 for v in vals.values())
    acceptance_line(7, ok, f"max sqrt(n)|bias| = {vals[worst]:.3f} ({worst[0]}, {worst[1].upper()}), limit 0.35")
    assert ok


def test_c08_decomposition(acceptance_line):
    worst = 0.0
    for seed in range(6):
        r = np.random.default_rng(seed)
        n = 150 + 50 * seed
        Y = r.normal(size=n) if seed % 2 else r.integers(0, 2, n)
        d = Dataset(r.normal(size=(n, 2)), r.integers(0, 2, n), r.integers(0, 2, n), r.normal(size=n), Y)
        res = estimate(d, EstimatorConfig(seed=seed))
        worst = max(worst, abs(res.ate.est - (res.nde.est + res.nie.est)))
    ok = worst == 0.0
    acceptance_line(8, ok, f"max |ATE - (NDE + NIE)| = {worst:.1e} over 6 datasets")
    assert ok


def test_c09_crossfit_purity(acceptance_line):
    t0 = time.perf_counter()
    d = sample_dgm(reference_dgm(), 5000, seed=8)
    plan = make_folds(d.n, 2, seed=8)
    feats = ["M", "Z", "A", "W1", "W2", "W3"]
    base = {
        "mu": fit_crossfit(d, plan, default_stack(), "Y", feats),
        "q": fit_crossfit(d, plan, default_stack(), "Z", ["A", "W1", "W2", "W3"]),
    }
    base["rho"] = fit_rho(d, plan, base["mu"], default_stack(), 1, 1)
    identical = True
    for j in range(plan.J):
        v = plan.valid_idx(j)
        r = np.random.default_rng(100 + j)
        Y, Z = d.Y.copy(), d.Z.copy()
        Y[v] = r.integers(0, 2, v.size)
        Z[v] = r.integers(0, 2, v.size)
        noisy = d.replace(Y=Y, Z=Z)
        mu = fit_crossfit(noisy, plan, default_stack(), "Y", feats)
        q = fit_crossfit(noisy, plan, default_stack(), "Z", ["A", "W1", "W2", "W3"])
        rho = fit_rho(noisy, plan, mu, default_stack(), 1, 1)
        for name, m in (("mu", mu), ("q", q), ("rho", rho)):
            a, b = base[name].models[j], m.models[j]
            identical &= a.spec == b.spec and np.array_equal(a.coefficients, b.coefficients)
    secs = time.perf_counter() - t0
    ok = bool(identical) and secs < 10
    acceptance_line(9, ok, f"training fits bit-identical after noising validation targets: {bool(identical)}, {secs:.2f}s")
    assert ok


def test_c10_cli_determinism(tmp_path, acceptance_line):
    data = tmp_path / "obs.csv"
    write_csv(sample_dgm(reference_dgm(), 10_000, seed=10), data)
    t0 = time.perf_counter()
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}.json"
        assert main(["estimate", "--data", str(data), "--seed", "17", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    secs = time.perf_counter() - t0
    ok = outs[0] == outs[1] and secs < 60
    acceptance_line(10, ok, f"byte-identical JSON: {outs[0] == outs[1]}, two runs in {secs:.1f}s")
    assert ok
