import math

import numpy as np
import pytest

from lgp.inference import ess, ess_bulk, ess_tail, mcse_mean, rhat, summarize


def test_iid_chains_rhat_near_one():
    x = np.random.default_rng(0).standard_normal((4, 1000))
    assert 0.99 <= rhat(x) <= 1.01


def test_iid_chains_ess_near_draws():
    x = np.random.default_rng(1).standard_normal((4, 1000))
    assert 3000 < ess_bulk(x) < 5000
    assert ess_tail(x) > 2000


def test_constant_distinct_chains_flag_infinite():
    x = np.vstack([np.zeros(100), np.ones(100)])
    assert rhat(x) == math.inf


def test_single_chain_has_no_rhat():
    assert math.isnan(rhat(np.random.default_rng(2).standard_normal((1, 200))))


def test_shifted_chains_rhat_large():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((2, 500))
    x[1] += 3
    assert rhat(x) > 1.5


def test_duplicated_chain_ess_not_inflated():
    rng = np.random.default_rng(4)
    # AR(1) chain with known autocorrelation
    n, phi = 2000, 0.7
    c = np.empty(n)
    c[0] = rng.standard_normal()
    for t in range(1, n):
        c[t] = phi * c[t - 1] + math.sqrt(1 - phi**2) * rng.standard_normal()
    x = np.vstack([c, c])
    assert ess(x) <= 2 * n
    # theoretical ESS of one AR(1) chain: n (1 - phi) / (1 + phi)
    single = n * (1 - phi) / (1 + phi)
    assert ess(c[None, :]) == pytest.approx(single, rel=0.3)


def test_mcse_of_iid_mean():
    x = np.random.default_rng(5).standard_normal((4, 2500))
    assert mcse_mean(x) == pytest.approx(1 / 100, rel=0.15)


def test_summary_verdicts():
    rng = np.random.default_rng(6)
    good = {"a": rng.standard_normal((4, 500)), "b": rng.standard_normal((4, 500))}
    rep = summarize(good, np.zeros((4, 500), bool))
    assert rep.converged and rep.passed
    stuck = {"a": np.vstack([np.zeros(500), np.ones(500)] * 2)}
    rep = summarize(stuck, np.zeros((4, 500), bool))
    assert not rep.converged
    div = np.zeros((4, 500), bool)
    div[:, :100] = True
    rep = summarize(good, div)
    assert rep.divergence_rate == pytest.approx(0.2)
    assert not rep.converged


def test_single_chain_notice():
    rep = summarize({"a": np.random.default_rng(7).standard_normal((1, 300))}, np.zeros((1, 300), bool))
    assert rep.notices
    assert rep.worst_rhat is None
