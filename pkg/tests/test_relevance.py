import warnings

import numpy as np
import pytest

from lgp.dataset import make_dataset
from lgp.formula import parse_formula
from lgp.inference import ConvergenceWarning, SamplerConfig, sample_posterior
from lgp.relevance import (
    RelevanceReport,
    component_relevances,
    covariate_map,
    covariate_report,
    draw_relevances,
    noise_proportion,
    relevances_from_draws,
    select,
    select_exhaustive,
)
from tests.conftest import small_columns, small_dataset


def test_noise_proportion_limits():
    y = np.array([0.0, 1.0, 2.0])
    assert noise_proportion(y, y) == 0.0
    assert noise_proportion(y, np.full(3, 5.0)) == 1.0
    assert noise_proportion(y, [0.0, 1.0, 1.0]) == pytest.approx(0.6)
    assert noise_proportion(np.ones(3), np.ones(3)) == 0.0
    with pytest.raises(ValueError):
        noise_proportion(y, [1.0, 2.0])


def test_two_component_hand_example():
    # SS = (3, 1): components with spreads sqrt(3/2) and sqrt(1/2) on two points
    comps = np.array([[np.sqrt(1.5), -np.sqrt(1.5)], [np.sqrt(0.5), -np.sqrt(0.5)]])
    y = np.array([1.0, -1.0])
    # predictions scaled so that RSS / (RSS + ESS) = 0.2
    ypred = y * 2 / 3
    rel, pn = draw_relevances(y, comps, ypred)
    assert pn == pytest.approx(0.2)
    np.testing.assert_allclose(rel, [0.6, 0.2])


def test_single_component_gets_all_signal():
    rng = np.random.default_rng(0)
    y = rng.normal(size=10)
    f = rng.normal(size=(1, 10))
    rel, pn = draw_relevances(y, f, f[0])
    assert rel[0] == pytest.approx(1 - pn)


def test_all_zero_components():
    rel, pn = draw_relevances([0.0, 1.0], np.zeros((2, 2)), [0.5, 0.5])
    np.testing.assert_array_equal(rel, 0.0)
    assert pn == 1.0


def test_identity_and_permutation():
    rng = np.random.default_rng(1)
    S, J, N = 7, 4, 12
    comps = rng.normal(size=(S, J, N))
    preds = comps.sum(axis=1) + rng.normal(scale=0.1, size=(S, N))
    y = rng.normal(size=N)
    rep = relevances_from_draws(y, comps, preds)
    np.testing.assert_allclose(rep.per_draw.sum(axis=1), 1.0, atol=1e-12)
    assert rep.rel.sum() + rep.p_noise == pytest.approx(1.0, abs=1e-12)
    perm = [2, 0, 3, 1]
    rep2 = relevances_from_draws(y, comps[:, perm], preds)
    np.testing.assert_allclose(rep2.rel, rep.rel[perm], atol=1e-14)
    assert rep2.p_noise == pytest.approx(rep.p_noise, abs=1e-14)


def test_subset_relevance_additive_and_monotone():
    rep = RelevanceReport(np.array([0.4, 0.3, 0.1]), 0.2, np.zeros((0, 4)))
    assert rep.subset_relevance([1, 3]) == pytest.approx(0.5)
    assert rep.subset_relevance([1, 2, 3]) >= rep.subset_relevance([1, 2])


def test_select_examples():
    assert select([0.01, 0.02, 0.01], 95, p_noise=0.96) == []
    assert select([0.5, 0.3, 0.1], 95, p_noise=0.1) == [1, 2, 3]
    assert select([0.5, 0.4, 0.05], 80, p_noise=0.05) == [1, 2]
    # ties go to the lower index
    assert select([0.3, 0.3, 0.3], 50, p_noise=0.1) == [1, 2]
    with pytest.raises(ValueError):
        select([0.5], 0, p_noise=0.5)
    with pytest.raises(ValueError):
        select([0.5])


def test_greedy_matches_exhaustive_small():
    rng = np.random.default_rng(2)
    for _ in range(200):
        J = rng.integers(1, 7)
        w = rng.dirichlet(np.ones(J + 1))
        T = rng.uniform(1, 100)
        assert len(select(w[:J], T, p_noise=w[J])) == len(select_exhaustive(w[:J], w[J], T))


FIVE = "y ~ gp(age) + zs(id)*gp(age) + zs(sex)*gp(age) + gp_vm(diseaseAge) + zs(group)"


def test_covariate_map_five_components():
    m = covariate_map(parse_formula(FIVE))
    assert list(m) == ["age", "id", "sex", "diseaseAge", "group"]
    assert m == {"age": [1], "id": [2], "sex": [3], "diseaseAge": [4], "group": [5]}


def test_covariate_map_disease_and_single_component():
    m = covariate_map(parse_formula("y ~ zs(id)*gp(age) + het(id)*gp_vm(dis) + gp_ns(t)"))
    assert m["id"] == [1] and m["dis"] == [2] and m["t"] == [3]
    assert m["age"] == [1]
    spec = parse_formula("y ~ gp(age)")
    rep = RelevanceReport(np.array([0.7]), 0.3, np.zeros((0, 2)))
    rows = covariate_report(rep, spec)
    assert rows == [{"covariate": "age", "components": [1], "relevance": 0.7}]


def test_report_json_round_trip():
    rep = RelevanceReport(np.array([0.5, 0.2]), 0.3, np.array([[0.5, 0.2, 0.3]]), 95, [1, 2],
                          ["gp(age)", "zs(sex)"], {"age": [1], "sex": [2]})
    again = RelevanceReport.from_dict(rep.to_dict())
    np.testing.assert_array_equal(again.rel, rep.rel)
    assert again.p_noise == rep.p_noise and again.terms == rep.terms
    assert again.covariate_map == rep.covariate_map


def _quiet_fit(ds, formula, family="gaussian", **cfg):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        return sample_posterior(ds, parse_formula(formula, family),
                                config=SamplerConfig(**{"chains": 2, "warmup": 40, "iters": 20, "seed": 1, **cfg}))


def test_relevances_of_a_gaussian_fit():
    fit = _quiet_fit(small_dataset(), "y ~ gp(age) + zs(id)*gp(age) + zs(sex)")
    rep = component_relevances(fit)
    assert rep.per_draw.shape == (40, 4)
    np.testing.assert_allclose(rep.per_draw.sum(axis=1), 1.0, atol=1e-10)
    assert np.all((rep.rel >= 0) & (rep.rel <= 1))
    assert rep.terms == ["gp(age)", "zs(id)*gp(age)", "zs(sex)"]


def test_binomial_relevance_uses_proportions():
    rng = np.random.default_rng(3)
    cols = small_columns()
    n = len(cols["y"])
    cols["n"] = rng.integers(5, 15, n)
    cols["y"] = rng.binomial(cols["n"], 0.4)
    ds = make_dataset(cols, categorical=["id", "sex"], maskable=["diseaseAge"], trials="n")
    fit = _quiet_fit(ds, "y ~ gp(age) + zs(sex)", "binomial")
    model = fit.model()
    np.testing.assert_allclose(model.relevance_response(), cols["y"] / cols["n"])
    comps = fit.latent_draws()
    preds = 1 / (1 + np.exp(-comps.sum(axis=1)))
    rep = component_relevances(fit)
    expected = np.mean([noise_proportion(cols["y"] / cols["n"], p) for p in preds])
    assert rep.p_noise == pytest.approx(expected, abs=1e-12)
