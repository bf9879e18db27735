import math

import numpy as np
import pytest
from scipy import optimize, stats

from lgp.dataset import CovariateColumn, LongitudinalDataset, make_dataset
from lgp.formula import parse_formula
from lgp.inference import component_posterior_gaussian, grad_log_marginal_gaussian, log_marginal_gaussian
from lgp.model import bind
from lgp.priors import PriorSpec
from tests.conftest import small_columns


def _z(v):
    v = np.asarray(v, dtype=float)
    return (v - v.mean()) / v.std()


def _eq(x, ell):
    return np.exp(-((x[:, None] - x[None, :]) ** 2) / (2 * ell**2))


def _zs(z):
    M = len(np.unique(z))
    return np.where(z[:, None] == z[None, :], 1.0, 1.0 / (1 - M))


def _dense_components(cols, alpha, ell):
    """Component covariances of ``gp(age) + zs(id)*gp(age) + zs(sex)`` built from scratch."""
    t = _z(cols["age"])
    ids = np.asarray(cols["id"])
    sex = np.asarray(cols["sex"])
    return [
        alpha[0] ** 2 * _eq(t, ell[0]),
        alpha[1] ** 2 * _zs(ids) * _eq(t, ell[1]),
        alpha[2] ** 2 * _zs(sex),
    ]


FORMULA = "y ~ gp(age) + zs(id)*gp(age) + zs(sex)"


def _instance(seed, n_ind=2, T=4):
    rng = np.random.default_rng(seed)
    cols = small_columns(seed, n_ind=n_ind, T=T)
    ds = make_dataset(cols, categorical=["id", "sex"], maskable=["diseaseAge"])
    alpha = rng.uniform(0.3, 2, 3)
    ell = rng.uniform(0.5, 2, 2)
    sigma = rng.uniform(0.2, 1)
    params = {"alpha[1]": alpha[0], "alpha[2]": alpha[1], "alpha[3]": alpha[2],
              "lengthscale[1]": ell[0], "lengthscale[2]": ell[1], "sigma": sigma}
    return cols, ds, alpha, ell, sigma, params


@pytest.mark.parametrize("seed", range(5))
def test_log_marginal_matches_dense_density(seed):
    cols, ds, alpha, ell, sigma, params = _instance(seed)
    assert ds.num_rows == 8
    K = sum(_dense_components(cols, alpha, ell)) + sigma**2 * np.eye(8)
    oracle = stats.multivariate_normal(np.zeros(8), K).logpdf(cols["y"])
    assert log_marginal_gaussian(ds, parse_formula(FORMULA), params) == pytest.approx(oracle, abs=1e-8)


def test_iid_reduction():
    cols, ds, alpha, ell, sigma, params = _instance(0)
    params.update({"alpha[1]": 0.0, "alpha[2]": 0.0, "alpha[3]": 0.0})
    oracle = np.sum(stats.norm(0, sigma).logpdf(cols["y"]))
    assert log_marginal_gaussian(ds, parse_formula(FORMULA), params) == pytest.approx(oracle, abs=1e-10)


def _one_row(y):
    ids = CovariateColumn("id", "categorical", np.array([1]), np.array([False]), 2, ("a", "b"))
    age = CovariateColumn("age", "continuous", np.array([3.0]), np.array([False]))
    return LongitudinalDataset((ids, age), np.array([y]))


def test_single_point_closed_form():
    ds = _one_row(0.8)
    spec = parse_formula("y ~ gp(age)")
    val = log_marginal_gaussian(ds, spec, {"alpha[1]": 0.6, "lengthscale[1]": 1.3, "sigma": 0.5})
    assert val == pytest.approx(stats.norm(0, math.sqrt(0.36 + 0.25)).logpdf(0.8), abs=1e-12)


def test_sigma_gradient_vanishes_at_the_optimum():
    y = 1.7
    ds = _one_row(y)
    spec = parse_formula("y ~ gp(age)")
    priors = PriorSpec.from_dict({"alpha": {"family": "fixed", "value": 0.5},
                                  "lengthscale": {"family": "fixed", "value": 1.0}})
    model = bind(spec, ds, priors, standardize_response=False)
    assert model.names == ["sigma"]

    def neg(log_sigma):
        return -model.log_marginal_gaussian(model.constrain([log_sigma]))

    res = optimize.minimize_scalar(neg, bracket=(-2.0, 2.0), tol=1e-12)
    g = grad_log_marginal_gaussian(model, params=[math.exp(res.x)])
    assert abs(g[0]) < 1e-6
    assert math.exp(res.x) == pytest.approx(math.sqrt(y**2 - 0.25), rel=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_finite_differences(seed):
    formula = "y ~ gp(age) + zs(id)*gp(age) + zs(sex)*gp(age) + het(id)*gp_vm(diseaseAge)"
    cols = small_columns(seed)
    ds = make_dataset(cols, categorical=["id", "sex"], maskable=["diseaseAge"])
    model = bind(parse_formula(formula), ds, standardize_response=False)
    u = np.random.default_rng(seed).uniform(-1, 1, model.num_params)
    g = grad_log_marginal_gaussian(model, params=model.constrain(u))
    h = 1e-5
    for i in range(len(u)):
        e = np.zeros_like(u)
        e[i] = h
        num = (model.log_marginal_gaussian(model.constrain(u + e))
               - model.log_marginal_gaussian(model.constrain(u - e))) / (2 * h)
        assert abs(num - g[i]) / (abs(num) + 1e-8) < 1e-5 or abs(num - g[i]) < 1e-8


def test_gradient_zero_for_unused_parameter():
    cols, ds, alpha, ell, sigma, params = _instance(1)
    params["alpha[2]"] = 0.0
    model = bind(parse_formula(FORMULA), ds, standardize_response=False)
    g = grad_log_marginal_gaussian(model, params=params)
    assert g[model.names.index("lengthscale[2]")] == 0.0


def _dense_posterior(Ks, sigma, y):
    K = sum(Ks) + sigma**2 * np.eye(len(y))
    Kinv = np.linalg.inv(K)
    mean = np.stack([k @ Kinv @ y for k in Ks])
    var = np.stack([np.diag(k - k @ Kinv @ k) for k in Ks])
    return mean, var


@pytest.mark.parametrize("seed", range(3))
def test_component_posterior_matches_dense_blocks(seed):
    cols, ds, alpha, ell, sigma, params = _instance(seed, n_ind=2, T=3)
    assert ds.num_rows == 6
    post = component_posterior_gaussian(ds, parse_formula(FORMULA), params)
    mean, var = _dense_posterior(_dense_components(cols, alpha, ell), sigma, np.asarray(cols["y"]))
    assert np.max(np.abs(post.mean - mean)) < 1e-8
    assert np.max(np.abs(post.cov_diag - var)) < 1e-8


def test_component_means_add_up_to_total_mean():
    cols, ds, alpha, ell, sigma, params = _instance(4, n_ind=4, T=5)
    post = component_posterior_gaussian(ds, parse_formula(FORMULA), params)
    K = sum(_dense_components(cols, alpha, ell))
    total = K @ np.linalg.solve(K + sigma**2 * np.eye(ds.num_rows), cols["y"])
    assert np.max(np.abs(post.total_mean - total)) < 1e-8


def test_noiseless_interpolation():
    cols, ds, alpha, ell, sigma, params = _instance(2)
    params = {"alpha[1]": 1.0, "lengthscale[1]": 0.7, "sigma": 1e-5}
    post = component_posterior_gaussian(ds, parse_formula("y ~ gp(age)"), params)
    np.testing.assert_allclose(post.mean[0], cols["y"], atol=1e-3)


def test_posterior_at_new_rows():
    cols, ds, alpha, ell, sigma, params = _instance(3)
    spec = parse_formula(FORMULA)
    post = component_posterior_gaussian(ds, spec, params, at=ds)
    same = component_posterior_gaussian(ds, spec, params)
    np.testing.assert_allclose(post.mean, same.mean, atol=1e-10)
    np.testing.assert_allclose(post.cov_diag, same.cov_diag, atol=1e-10)
