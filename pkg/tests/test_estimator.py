import json
from importlib import resources

import jsonschema
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import expit

from monomed import estimator as est_mod
from monomed.crossfit import fit_crossfit, make_folds
from monomed.dataset import Dataset
from monomed.estimator import (
    EstimandSpec,
    EstimationError,
    EstimatorConfig,
    NuisanceFits,
    default_variant,
    eif_contribution,
    eif_weights,
    estimate,
    fit_nuisances,
    fit_rho,
)
from monomed.learners import default_stack, intercept_only
from monomed.oracle import reference_dgm, true_effects

SLOTS = [f for f in NuisanceFits.__dataclass_fields__ if f not in ("truncated", "producers")]
W3 = ["W1", "W2", "W3"]


def _const_fits(n, **over):
    vals = {s: np.full(n, 0.5) for s in SLOTS}
    vals.update({k: np.broadcast_to(np.asarray(v, float), (n,)).copy() for k, v in over.items()})
    return NuisanceFits(**vals)


@pytest.fixture(scope="module")
def truth():
    return true_effects(reference_dgm())


@pytest.fixture(scope="module")
def reference_nuis(reference_data):
    plan = make_folds(reference_data.n, 2, 0)
    return fit_nuisances(reference_data, plan, {}, EstimandSpec(1, 0))


def test_shipped_variant_fixture():
    assert default_variant() == "derived"


def test_g_near_half(reference_nuis):
    assert np.all(np.abs(reference_nuis.g_a - 0.5) < 0.05)


def test_q_at_full_covariates(reference_data, reference_nuis):
    rows = np.flatnonzero(np.all(reference_data.W == 1, axis=1))
    assert rows.size > 0
    target = expit(-np.log(1.3) + 1)
    assert np.all(np.abs(reference_nuis.q_a[rows] - target) < 0.05)


def test_intercept_only_mu_is_training_mean(reference_data):
    d = reference_data.take(np.arange(2000))
    plan = make_folds(d.n, 2, 1)
    nf = fit_nuisances(d, plan, {"mu": intercept_only()}, EstimandSpec(1, 0))
    for j in range(2):
        v = plan.valid_idx(j)
        assert np.allclose(nf.mu_a_z1[v], d.Y[plan.train_idx(j)].mean())


def test_rho_of_constant_pseudo_outcome():
    r = np.random.default_rng(0)
    n = 400
    d = Dataset(r.integers(0, 2, (n, 2)), r.integers(0, 2, n), r.integers(0, 2, n), r.integers(0, 2, n),
                np.full(n, 0.7), ("W1", "W2"))
    plan = make_folds(n, 2, 0)
    mu = fit_crossfit(d, plan, default_stack("identity"), "Y", ["M", "Z", "A", "W1", "W2"])
    rho = fit_rho(d, plan, mu, default_stack(), 1, 1).predict(d, {"A": 0, "Z": 1})
    assert np.allclose(rho.values, 0.7, atol=1e-10)


def test_rho_with_independent_mediator():
    r = np.random.default_rng(1)
    n = 20_000
    W = r.integers(0, 2, (n, 1))
    A, Z, M = r.integers(0, 2, n), r.integers(0, 2, n), r.integers(0, 2, n)
    Y = (r.random(n) < 0.2 + 0.5 * M).astype(float)
    d = Dataset(W, A, Z, M, Y)
    plan = make_folds(n, 2, 0)
    mu = fit_crossfit(d, plan, default_stack(), "Y", ["M", "Z", "A", "W1"])
    model = fit_rho(d, plan, mu, default_stack(), 1, 1)
    for at in ({"A": 0, "Z": 0}, {"A": 1, "Z": 1}):
        assert np.allclose(model.predict(d, at).values, 0.45, atol=0.03)


def test_rho_matches_two_term_sum(reference_data):
    plan = make_folds(reference_data.n, 2, 2)
    mu = fit_crossfit(reference_data, plan, default_stack(), "Y", ["M", "Z", "A", *W3])
    rho = fit_rho(reference_data, plan, mu, default_stack(), 1, 1).predict(reference_data, {"A": 1, "Z": 1}).values
    rows = np.flatnonzero(np.all(reference_data.W == 0, axis=1))
    pm1 = expit(2 - 0.9)
    analytic = sum(expit(1 + m) * (pm1 if m else 1 - pm1) for m in (0, 1))
    assert np.all(np.abs(rho[rows] - analytic) < 0.03)


def test_indicator_semantics():
    A = np.array([0.0, 0.0, 1.0])
    Z = np.array([1.0, 0.0, 1.0])
    H = eif_weights(A, Z, _const_fits(3), EstimandSpec(1, 1))
    for zz in H:
        assert H[zz].y[0] == 0 and H[zz].y[1] == 0
        assert H[zz].m[0] == 0 and H[zz].m[1] == 0
        assert H[zz].z[0] == 0 and H[zz].z[1] == 0


def test_a_equals_aprime_cancels_middle_piece():
    r = np.random.default_rng(2)
    n = 50
    fits = NuisanceFits(**{s: r.uniform(0.1, 0.9, n) for s in SLOTS})
    fits = NuisanceFits(**{**{s: getattr(fits, s) for s in SLOTS}, "q_ap": fits.q_a, "g_ap": fits.g_a})
    A, Z = r.integers(0, 2, n), r.integers(0, 2, n)
    h = eif_weights(A, Z, fits, EstimandSpec(1, 1))[(1, 0)]
    assert not np.any(h.y) and not np.any(h.m) and not np.any(h.w)
    assert not np.any(h.z)


def test_symmetric_hand_values():
    A = np.array([1.0, 1.0, 0.0, 0.0])
    Z = np.array([1.0, 0.0, 1.0, 0.0])
    H = eif_weights(A, Z, _const_fits(4), EstimandSpec(1, 0))
    assert H[(1, 1)].m.tolist() == [0, 0, 2, 0]
    assert H[(0, 0)].y.tolist() == [0, 2, 0, 0]


def test_perfect_fit_leaves_h_w():
    r = np.random.default_rng(3)
    n = 30
    fits = NuisanceFits(**{s: r.uniform(0.1, 0.9, n) for s in SLOTS})
    fits = NuisanceFits(**{**{s: getattr(fits, s) for s in SLOTS},
                           "rho_11": fits.mu_a_z1, "rho_10": fits.mu_a_z1, "rho_00": fits.mu_a_z0})
    A, Z = r.integers(0, 2, n).astype(float), fits.q_obs.copy()
    H = eif_weights(A, Z, fits, EstimandSpec(1, 0))
    D = eif_contribution(fits.mu_obs, Z, fits, H)
    for zz in H:
        assert np.allclose(D[zz], H[zz].w, atol=1e-15)


def test_single_record_mean_is_value():
    fits = _const_fits(1, mu_obs=0.3)
    H = eif_weights([1.0], [0.0], fits, EstimandSpec(1, 0))
    D = eif_contribution([1.0], [0.0], fits, H)
    for zz in H:
        assert D[zz].mean() == D[zz][0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_sign_property(seed):
    r = np.random.default_rng(seed)
    n = 40
    fits = NuisanceFits(**{s: r.uniform(0.01, 0.99, n) for s in SLOTS})
    lo, hi = np.sort(r.uniform(0.01, 0.99, (2, n)), axis=0)
    fits = NuisanceFits(**{**{s: getattr(fits, s) for s in SLOTS}, "q_a": hi, "q_ap": lo})
    H = eif_weights(r.integers(0, 2, n), r.integers(0, 2, n), fits, EstimandSpec(1, 0))[(1, 0)]
    assert np.all(H.y >= 0) and np.all(H.m >= 0)


def test_variants_agree_when_treatment_is_fair():
    r = np.random.default_rng(4)
    n = 60
    fits = NuisanceFits(**{s: r.uniform(0.05, 0.95, n) for s in SLOTS})
    fits = NuisanceFits(**{**{s: getattr(fits, s) for s in SLOTS}, "g_a": np.full(n, 0.5), "g_ap": np.full(n, 0.5)})
    A, Z = r.integers(0, 2, n), r.integers(0, 2, n)
    a = eif_weights(A, Z, fits, EstimandSpec(1, 0), "derived")
    b = eif_weights(A, Z, fits, EstimandSpec(1, 0), "printed")
    assert np.array_equal(a[(0, 0)].y, b[(0, 0)].y)


def test_unknown_variant():
    with pytest.raises(ValueError):
        eif_weights([1.0], [1.0], _const_fits(1), EstimandSpec(1, 0), "typo")


def test_estimates_near_truth(reference_fit, truth):
    # one standard error at n=10,000 is about 0.01 for the NDE, so allow 3 SE
    assert abs(reference_fit.nde.est - truth["nde"]) < 3 * reference_fit.nde.se
    assert abs(reference_fit.nie.est - truth["nie"]) < 3 * reference_fit.nie.se
    for c in (reference_fit.nde, reference_fit.nie, reference_fit.ate):
        assert c.ci_low <= c.est <= c.ci_high


def test_decomposition_exact(reference_fit):
    assert reference_fit.ate.est - (reference_fit.nde.est + reference_fit.nie.est) == 0.0


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(30, 200), st.booleans())
def test_decomposition_on_random_data(seed, n, continuous):
    r = np.random.default_rng(seed)
    Y = r.normal(size=n) if continuous else r.integers(0, 2, n)
    d = Dataset(r.normal(size=(n, 2)), r.integers(0, 2, n), r.integers(0, 2, n), r.normal(size=n), Y)
    res = estimate(d, EstimatorConfig(seed=seed % 1000))
    assert res.ate.est - (res.nde.est + res.nie.est) == 0.0


def test_randomized_a_fixes_g(reference_data):
    d = reference_data.take(np.arange(3000))
    nf = est_mod._assemble(est_mod._Regressions(d, make_folds(d.n, 2, 0), EstimatorConfig().resolved_specs()),
                           EstimandSpec(1, 0), 0.01, 0.5)
    assert np.all(nf.g_a == 0.5) and np.all(nf.g_ap == 0.5)
    assert "fixed" in nf.producers["g_a"]


def test_truncation_is_reported(reference_data):
    d = reference_data.take(np.arange(2000))
    res = estimate(d, EstimatorConfig(delta=0.45))
    assert any("truncated" in w for w in res.warnings)


def test_clip_q_diff_option():
    fits = _const_fits(2, q_a=[0.2, 0.6], q_ap=[0.4, 0.3])
    h = eif_weights([1.0, 1.0], [1.0, 1.0], fits, EstimandSpec(1, 0), clip_q_diff=True)[(1, 0)]
    assert h.w[0] == 0 and h.y[0] == 0 and h.w[1] > 0


def test_failure_names_regression(reference_data, monkeypatch):
    def boom(*args, **kw):
        raise RuntimeError("singular")

    monkeypatch.setattr(est_mod, "fit_crossfit", boom)
    with pytest.raises(EstimationError, match="'g'"):
        estimate(reference_data.take(np.arange(200)))


def test_too_few_rows():
    d = Dataset(np.zeros((3, 1)), [0, 1, 0], [0, 1, 1], [0, 0, 1], [0, 1, 1])
    with pytest.raises(EstimationError):
        estimate(d)


def test_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(delta=0.5)
    with pytest.raises(ValueError):
        EstimatorConfig(folds=1)
    with pytest.raises(ValueError):
        EstimatorConfig(specs={"nu": intercept_only()})
    with pytest.raises(ValueError):
        EstimandSpec(2, 0)


def test_json_matches_schema(reference_fit):
    schema = json.loads(resources.files("monomed").joinpath("schemas/estimate.schema.json").read_text())
    doc = json.loads(reference_fit.to_json())
    jsonschema.validate(doc, schema)
    assert set(doc["theta"]) == {"0,0", "1,0", "1,1"}


def test_other_estimand_reported(reference_data):
    res = estimate(reference_data.take(np.arange(3000)), EstimatorConfig(estimand=EstimandSpec(0, 1)))
    assert "0,1" in res.theta
    assert res.to_dict()["estimand"]["a"] == 0
    assert any("a >= a'" in w for w in res.warnings)


def test_continuous_outcome_and_two_mediators():
    r = np.random.default_rng(8)
    n = 3000
    W = r.integers(0, 2, (n, 1)).astype(float)
    A = r.integers(0, 2, n)
    Z = (r.random(n) < 0.2 + 0.5 * A).astype(float)
    M = np.column_stack([r.normal(Z, 1.0), r.normal(0.5 * Z, 1.0)])
    Y = 1.0 + M[:, 0] + 0.5 * M[:, 1] + Z + r.normal(size=n)
    d = Dataset(W, A, Z, M, Y, ("W1",), ("M1", "M2"))
    res = estimate(d)
    assert np.isfinite(res.nde.est) and np.isfinite(res.nie.est)
    assert res.nie.est > 0
