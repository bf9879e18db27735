import math

import numpy as np
import pytest

from lgp.formula import parse_formula
from lgp.kernels import (
    KernelParams,
    component_matrix,
    component_matrix_grad,
    k_eq,
    k_heter,
    k_missing_mask,
    k_ns,
    k_vm,
    k_zerosum,
    vm_mask,
    vm_midpoint,
    warp,
)


def test_k_eq_values():
    assert k_eq(3.0, 3.0, 0.7) == 1.0
    assert k_eq(1.0, 2.0, 1.0) == pytest.approx(math.exp(-0.5), abs=1e-12)
    assert k_eq(0.0, math.sqrt(2), 1.0) == pytest.approx(0.36788, abs=1e-5)
    with pytest.raises(ValueError):
        k_eq(0.0, 1.0, 0.0)


def test_k_zerosum_values():
    assert k_zerosum(1, 1, 2) == 1
    assert k_zerosum(1, 2, 2) == -1
    assert k_zerosum(2, 3, 4) == pytest.approx(-1 / 3)
    with pytest.raises(ValueError):
        k_zerosum(1, 1, 1)


@pytest.mark.parametrize("M", [2, 3, 5, 8])
def test_zerosum_rows_sum_to_zero(M):
    z = np.arange(1, M + 1)
    K = k_zerosum(z[:, None], z[None, :], M)
    np.testing.assert_allclose(K.sum(axis=1), 0.0, atol=1e-12)


def test_warp_properties():
    assert warp(0.0, 2.0) == 0.0
    assert warp(1e3, 0.5) == pytest.approx(1.0)
    h, a = 0.025, 1.3
    r = math.log(h / (1 - h)) / a
    assert warp(r, a) == pytest.approx(2 * h - 1, abs=1e-12)
    x = np.linspace(-5, 5, 101)
    assert np.all(np.diff(warp(x, 0.7)) > 0)


def test_k_ns_values():
    assert k_ns(1.5, 1.5, 0.3, 2.0) == 1.0
    w5 = 2 / (1 + math.exp(-5)) - 1
    w6 = 2 / (1 + math.exp(-6)) - 1
    expected = math.exp(-((w5 - w6) ** 2) / 2)
    assert k_ns(5.0, 6.0, 1.0, 1.0) == pytest.approx(expected, abs=1e-12)
    assert k_ns(5.0, 6.0, 1.0, 1.0) == pytest.approx(0.99996, abs=1e-5)
    assert k_ns(-100.0, -50.0, 1.0, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_vm_mask_values():
    a = 1.7
    assert vm_mask(vm_midpoint(a), a) == pytest.approx(0.5)
    assert vm_mask(-1e4, a) == pytest.approx(0.0, abs=1e-300)
    assert vm_mask(0.0, 1.0, 0.025) == pytest.approx(0.975, abs=1e-5)
    assert vm_mask(0.0, 1.0, 0.025) == pytest.approx(0.97501, abs=1e-5)
    with pytest.raises(ValueError):
        vm_mask(0.0, 1.0, 0.5)


def test_k_vm_values():
    x = 0.4
    assert k_vm(x, x, 1.0, 1.0) == pytest.approx(vm_mask(x, 1.0) ** 2)
    assert k_vm(0.3, -1e4, 1.0, 1.0) == pytest.approx(0.0, abs=1e-300)
    assert k_vm(0.0, 0.0, 1.0, 1.0, 0.025) == pytest.approx(0.975**2, abs=1e-5)


def test_k_heter_values():
    beta = np.array([1.0, 0.0, 0.25])
    assert k_heter(0, 0, beta) == 1.0
    assert k_heter(1, 0, beta) == 0.0
    assert k_heter(2, 0, beta) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        k_heter(0, 0, np.array([1.2]))


def test_missing_mask():
    assert k_missing_mask(np.nan, 3.0) == 0
    assert k_missing_mask(1.0, 3.0) == 1
    assert k_missing_mask(np.nan, np.nan) == 0


def _params(spec, rng, ncase=3):
    J = spec.num_components
    return KernelParams(
        alpha=rng.uniform(0.5, 2.0, J),
        lengthscale=rng.uniform(0.5, 2.0, J),
        warp_steepness=rng.uniform(0.5, 3.0),
        beta=rng.uniform(0.1, 0.9, ncase),
        effect_times=rng.uniform(35, 45, ncase),
    )


FORMULA = ("y ~ gp(age) + zs(id)*gp(age) + zs(sex) + gp_ns(diseaseAge) + "
           "unc(het(id)*gp_vm(diseaseAge))")


def test_component_matrix_compositions(ds, rng):
    spec = parse_formula(FORMULA)
    p = _params(spec, rng)
    for comp in spec.components:
        K = component_matrix(comp, ds, p)
        assert K.shape == (ds.num_rows, ds.num_rows)
        np.testing.assert_array_equal(K, K.T)
        assert np.linalg.eigvalsh(K).min() >= -1e-8 * p.alpha[comp.index - 1] ** 2
    shared = component_matrix(spec.components[0], ds, p)
    np.testing.assert_allclose(np.diag(shared), p.alpha[0] ** 2)


def test_masked_component_zero_without_observations(ds, rng):
    from lgp.dataset import make_dataset
    from tests.conftest import small_columns

    cols = small_columns()
    cols["diseaseAge"] = np.full(len(cols["y"]), np.nan)
    cols["diseaseAge"][:2] = [1.0, 2.0]  # two observed rows keep the column valid
    d = make_dataset(cols, categorical=["id", "sex"], maskable=["diseaseAge"])
    spec = parse_formula("y ~ gp_vm(diseaseAge)")
    p = _params(spec, rng)
    K = component_matrix(spec.components[0], d, p)
    K[:2, :2] = 0.0
    np.testing.assert_array_equal(K, 0.0)


def test_grad_alpha_and_lengthscale_diagonal(ds, rng):
    spec = parse_formula("y ~ gp(age)")
    p = _params(spec, rng)
    comp = spec.components[0]
    K = component_matrix(comp, ds, p)
    np.testing.assert_allclose(component_matrix_grad(comp, ds, p, "alpha"), 2 * K / p.alpha[0])
    np.testing.assert_allclose(np.diag(component_matrix_grad(comp, ds, p, "lengthscale")), 0.0)
    with pytest.raises(ValueError):
        component_matrix_grad(comp, ds, p, "warp_steepness")


def _set(p, name, value):
    p = p.copy()
    if name in ("alpha", "lengthscale"):
        raise AssertionError
    if name == "warp_steepness":
        p.warp_steepness = value
    else:
        group, q = name.split("[")
        arr = p.beta if group == "beta" else p.effect_times
        arr[int(q[:-1])] = value
    return p


def test_component_grad_matches_finite_differences(ds, rng):
    spec = parse_formula(FORMULA)
    p = _params(spec, rng)
    h = 1e-5
    for comp in spec.components:
        j = comp.index - 1
        names = ["alpha", "lengthscale", "warp_steepness", "beta[1]", "effect_time[2]"]
        for name in names:
            try:
                analytic = component_matrix_grad(comp, ds, p, name)
            except ValueError:
                continue
            # central differences on the log (or logit) scale, chained back
            if name in ("alpha", "lengthscale"):
                arr = getattr(p, name)
                hi, lo = p.copy(), p.copy()
                getattr(hi, name)[j] = arr[j] * math.exp(h)
                getattr(lo, name)[j] = arr[j] * math.exp(-h)
                scale = arr[j]
            elif name.startswith("effect_time"):
                v = p.effect_times[2]
                hi, lo, scale = _set(p, name, v + h), _set(p, name, v - h), 1.0
            elif name.startswith("beta"):
                v = p.beta[1]
                hi, lo, scale = _set(p, name, v * math.exp(h)), _set(p, name, v * math.exp(-h)), v
            else:
                v = p.warp_steepness
                hi, lo, scale = _set(p, name, v * math.exp(h)), _set(p, name, v * math.exp(-h)), v
            num = (component_matrix(comp, ds, hi) - component_matrix(comp, ds, lo)) / (2 * h)
            err = np.max(np.abs(num - analytic * scale)) / (1 + np.max(np.abs(num)))
            assert err < 1e-5, (comp.term(), name, err)
