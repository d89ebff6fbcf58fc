import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from monomed.crossfit import FoldError, crossfit_regression, fit_crossfit, make_folds
from monomed.dataset import Dataset
from monomed.estimator import fit_rho
from monomed.learners import default_stack, intercept_only


def _noisy_copy(d: Dataset, rows, seed):
    r = np.random.default_rng(seed)
    Y = d.Y.copy()
    Y[rows] = r.random(rows.size) < 0.5
    A = d.A.copy()
    A[rows] = r.integers(0, 2, rows.size)
    return d.replace(Y=Y, A=A)


def test_balanced_even():
    assert sorted(make_folds(10, 2, 0).sizes()) == [5, 5]


def test_balanced_odd():
    assert sorted(make_folds(11, 2, 0).sizes()) == [5, 6]


def test_deterministic():
    assert np.array_equal(make_folds(101, 3, 7).assignment, make_folds(101, 3, 7).assignment)
    assert not np.array_equal(make_folds(101, 3, 7).assignment, make_folds(101, 3, 8).assignment)


def test_too_small():
    with pytest.raises(FoldError):
        make_folds(3, 2, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(4, 300), st.integers(2, 5), st.integers(0, 10**6), st.booleans())
def test_partition_properties(n, J, seed, stratified):
    if n < 2 * J:
        return
    strata = np.random.default_rng(seed).integers(0, 4, n) if stratified else None
    plan = make_folds(n, J, seed, strata)
    sizes = plan.sizes()
    assert sum(sizes) == n and max(sizes) - min(sizes) <= 1
    assert np.array_equal(np.sort(np.concatenate([plan.valid_idx(j) for j in range(J)])), np.arange(n))


def test_stratified_spreads_each_stratum():
    strata = np.repeat([0, 1, 2, 3], [10, 7, 5, 2])
    plan = make_folds(24, 2, 1, strata)
    for s in range(4):
        counts = np.bincount(plan.assignment[strata == s], minlength=2)
        assert abs(counts[0] - counts[1]) <= 1


def test_intercept_only_gives_training_half_means(reference_data):
    d = reference_data.take(np.arange(1000))
    plan = make_folds(d.n, 2, 3)
    pred = crossfit_regression(d, plan, intercept_only(), "Y", ["W1"])
    for j in range(2):
        v = plan.valid_idx(j)
        assert np.allclose(pred.values[v], d.Y[plan.train_idx(j)].mean())
    assert len(np.unique(pred.values)) == 2


def test_randomized_treatment_predictions_near_half(reference_data):
    plan = make_folds(reference_data.n, 2, 0)
    pred = crossfit_regression(reference_data, plan, default_stack(), "A", ["W1", "W2", "W3"])
    assert np.all(np.abs(pred.values - 0.5) < 0.05)


def test_override_semantics(reference_data):
    d = reference_data.take(np.arange(2000))
    plan = make_folds(d.n, 2, 0)
    model = fit_crossfit(d, plan, default_stack(), "Z", ["A", "W1", "W2", "W3"])
    at1 = model.predict(d, {"A": 1}).values
    treated = d.take(np.arange(d.n)).replace(A=np.ones(d.n))
    assert np.array_equal(at1, model.predict(treated).values)
    assert "A=1" in model.predict(d, {"A": 1}).producer


def test_exactly_J_models():
    d = Dataset(np.arange(30.0)[:, None] % 3, np.arange(30) % 2, np.zeros(30), np.zeros(30), np.arange(30.0))
    m = fit_crossfit(d, make_folds(30, 3, 0), intercept_only("identity"), "Y", ["W1"])
    assert m.n_models == 3


def test_single_class_fold_falls_back():
    d = Dataset(np.zeros((8, 1)), [0, 1] * 4, np.zeros(8), np.zeros(8), np.zeros(8))
    m = fit_crossfit(d, make_folds(8, 2, 0), default_stack(), "Z", ["W1"])
    assert all(mod.spec.kind == "intercept_only" for mod in m.models)
    assert any("single outcome class" in w for w in m.warnings)


def test_empty_subset_falls_back():
    d = Dataset(np.zeros((8, 1)), [0, 1] * 4, [0, 1] * 4, np.zeros(8), np.arange(8.0))
    m = fit_crossfit(d, make_folds(8, 2, 0), default_stack("identity"), "Y", ["W1"], subset=np.zeros(8, bool))
    assert any("empty training subset" in w for w in m.warnings)


def test_crossfit_purity(reference_data):
    d = reference_data.take(np.arange(4000))
    plan = make_folds(d.n, 2, 5)
    spec = default_stack()
    base_mu = fit_crossfit(d, plan, spec, "Y", ["M", "Z", "A", "W1", "W2", "W3"])
    for j in range(plan.J):
        noisy = _noisy_copy(d, plan.valid_idx(j), seed=j)
        mu = fit_crossfit(noisy, plan, spec, "Y", ["M", "Z", "A", "W1", "W2", "W3"])
        assert np.array_equal(mu.models[j].coefficients, base_mu.models[j].coefficients)
        rho0 = fit_rho(d, plan, base_mu, spec, 1, 1)
        rho1 = fit_rho(noisy, plan, mu, spec, 1, 1)
        assert np.array_equal(rho0.models[j].coefficients, rho1.models[j].coefficients)


def test_permuting_validation_rows_keeps_fits(reference_data):
    d = reference_data.take(np.arange(3000))
    plan = make_folds(d.n, 2, 9)
    v = plan.valid_idx(0)
    perm = np.arange(d.n)
    perm[v] = np.random.default_rng(0).permutation(v)
    shuffled = d.take(perm)
    a = fit_crossfit(d, plan, default_stack(), "Z", ["A", "W1", "W2", "W3"])
    b = fit_crossfit(shuffled, plan, default_stack(), "Z", ["A", "W1", "W2", "W3"])
    assert np.array_equal(a.models[0].coefficients, b.models[0].coefficients)
