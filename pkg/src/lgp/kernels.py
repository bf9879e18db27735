"""Kernel functions, component covariance matrices and their gradients.

Every component covariance factorizes as::

    K = alpha**2 * zerosum(z, z') * cont(x, x') * sqrt(beta_q beta_q') * mask(x) mask(x')

where unused factors are 1.  ``cont`` is the exponentiated quadratic kernel,
its input-warped (nonstationary) variant, or the variance-masked variant.
Gradients are analytic and taken with respect to constrained parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .dataset import DataError, LongitudinalDataset, standardize
from .formula import (
    CATEGORICAL_INTERACTION,
    CATEGORICAL_OFFSET,
    HETEROGENEOUS_VM,
    NONSTATIONARY,
    SHARED_EQ,
    VARIANCE_MASKED,
    ComponentSpec,
)

VM_H = 0.025


# ---------------------------------------------------------------------------
# base kernels (vectorized, broadcasting over their arguments)


def _check_positive(value, what):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{what} must be positive")


def k_eq(x, x2, lengthscale):
    """Exponentiated quadratic kernel ``exp(-(x - x2)**2 / (2 l**2))``."""
    _check_positive(lengthscale, "lengthscale")
    d = np.asarray(x, dtype=float) - np.asarray(x2, dtype=float)
    return np.exp(-0.5 * d * d / np.square(lengthscale))


def k_zerosum(z, z2, M):
    """1 when the categories agree and ``1 / (1 - M)`` otherwise."""
    if M < 2:
        raise ValueError("zero-sum kernel needs M >= 2 categories")
    return np.where(np.asarray(z) == np.asarray(z2), 1.0, 1.0 / (1.0 - M))


def warp(x, a):
    """Sigmoidal input warp onto (-1, 1); equal to ``tanh(a x / 2)``."""
    _check_positive(a, "warp steepness")
    return np.tanh(0.5 * a * np.asarray(x, dtype=float))


def k_ns(x, x2, a, lengthscale):
    return k_eq(warp(x, a), warp(x2, a), lengthscale)


def _logit_h(h):
    if not 0.0 < h < 0.5:
        raise ValueError("variance-mask parameter h must lie in (0, 0.5)")
    return np.log((1.0 - h) / h)


def vm_midpoint(a, h=VM_H):
    """Midpoint ``r`` of the variance mask; ``warp(r, a) == 2h - 1``."""
    return np.log(h / (1.0 - h)) / a


def vm_mask(x, a, h=VM_H):
    """Variance mask ``1 / (1 + exp(-a (x - r)))``; tends to 0 as x -> -inf."""
    _check_positive(a, "warp steepness")
    return expit(a * np.asarray(x, dtype=float) + _logit_h(h))


def k_vm(x, x2, a, lengthscale, h=VM_H):
    return vm_mask(x, a, h) * vm_mask(x2, a, h) * k_ns(x, x2, a, lengthscale)


def k_heter(q, q2, beta):
    """Heterogeneity multiplier ``sqrt(beta[q] * beta[q2])`` (0-based indices)."""
    beta = np.asarray(beta, dtype=float)
    if np.any((beta < 0) | (beta > 1)):
        raise ValueError("heterogeneity parameters must lie in [0, 1]")
    return np.sqrt(beta[np.asarray(q)] * beta[np.asarray(q2)])


def k_missing_mask(x, x2):
    """0 when either argument is missing (``None`` or nan), else 1."""

    def present(v):
        if v is None:
            return np.asarray(False)
        return ~np.isnan(np.asarray(v, dtype=float))

    return (present(x) & present(x2)).astype(float)


# ---------------------------------------------------------------------------
# parameters and per-row component inputs


@dataclass
class KernelParams:
    """Kernel hyperparameters of a whole model (constrained scale).

    ``alpha`` and ``lengthscale`` have one entry per component; the
    lengthscale of a component without a continuous covariate is nan.
    ``beta`` and ``effect_times`` have one entry per case individual.
    """

    alpha: np.ndarray
    lengthscale: np.ndarray
    warp_steepness: float | None = None
    beta: np.ndarray | None = None
    effect_times: np.ndarray | None = None
    vm_h: float = VM_H

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        self.lengthscale = np.atleast_1d(np.asarray(self.lengthscale, dtype=float))
        if self.beta is not None:
            self.beta = np.atleast_1d(np.asarray(self.beta, dtype=float))
        if self.effect_times is not None:
            self.effect_times = np.atleast_1d(np.asarray(self.effect_times, dtype=float))

    def validate(self):
        if np.any(self.alpha < 0):
            raise ValueError("marginal standard deviations must be non-negative")
        ell = self.lengthscale[~np.isnan(self.lengthscale)]
        if np.any(ell <= 0):
            raise ValueError("lengthscales must be positive")
        if self.warp_steepness is not None and not self.warp_steepness > 0:
            raise ValueError("warp steepness must be positive")
        if self.beta is not None and np.any((self.beta < 0) | (self.beta > 1)):
            raise ValueError("heterogeneity parameters must lie in [0, 1]")
        _logit_h(self.vm_h)
        return self

    def copy(self) -> "KernelParams":
        return replace(
            self,
            alpha=self.alpha.copy(),
            lengthscale=self.lengthscale.copy(),
            beta=None if self.beta is None else self.beta.copy(),
            effect_times=None if self.effect_times is None else self.effect_times.copy(),
        )


@dataclass
class ComponentInputs:
    """Row-wise kernel inputs of one component.

    ``x`` is the continuous input on the kernel scale (0 where missing).  For
    components with an uncertain effect time the input is instead rebuilt
    from ``time`` as ``(time - effect_times[case]) / x_scale``.
    """

    spec: ComponentSpec
    n: int
    x: np.ndarray | None = None
    observed: np.ndarray | None = None
    z: np.ndarray | None = None
    num_categories: int = 0
    case: np.ndarray | None = None
    time: np.ndarray | None = None
    x_scale: float = 1.0
    zerosum: np.ndarray | None = field(default=None, repr=False)
    sqdist: np.ndarray | None = field(default=None, repr=False)

    def continuous(self, params: KernelParams) -> np.ndarray | None:
        if self.spec.uncertain_effect_time:
            if params.effect_times is None:
                raise ValueError("component has an uncertain effect time but no effect_times given")
            t = np.where(self.case >= 0, params.effect_times[np.maximum(self.case, 0)], 0.0)
            return np.where(self.case >= 0, (self.time - t) / self.x_scale, 0.0)
        return self.x

    def subset(self, rows) -> "ComponentInputs":
        rows = np.asarray(rows)
        pick = lambda v: None if v is None else v[rows]
        return replace(
            self,
            n=len(rows),
            x=pick(self.x),
            observed=pick(self.observed),
            z=pick(self.z),
            case=pick(self.case),
            time=pick(self.time),
            zerosum=None,
            sqdist=None,
        )


def case_individuals(ds: LongitudinalDataset, covariates) -> np.ndarray:
    """0-based id codes of individuals with an observed value of any of ``covariates``."""
    ids = ds.ids - 1
    has = np.zeros(ds.num_individuals, dtype=bool)
    for name in covariates:
        col = ds.column(name)
        has[np.unique(ids[~col.missing_mask])] = True
    return np.flatnonzero(has)


def observed_onsets(ds: LongitudinalDataset, disease: str, time: str, cases) -> np.ndarray:
    """Observed effect time ``time - disease_age`` of every case individual (raw units)."""
    dcol, tcol = ds.column(disease), ds.column(time)
    ids = ds.ids - 1
    dis = dcol.inverse(dcol.values)
    t = tcol.inverse(tcol.values)
    out = np.empty(len(cases))
    for k, q in enumerate(cases):
        rows = (ids == q) & ~dcol.missing_mask
        out[k] = np.mean(t[rows] - dis[rows])
    return out


def _input_transform(raw, missing, center):
    """Standardizing transform; a constant input keeps unit scale."""
    obs = raw[~missing]
    if obs.size and np.ptp(obs) == 0:
        return (float(obs[0]) if center else 0.0), 1.0
    return standardize(raw, missing, center=center)


def inputs_from_dataset(
    comp: ComponentSpec,
    ds: LongitudinalDataset,
    transforms: dict | None = None,
    cases=None,
    time_column: str = "age",
) -> ComponentInputs:
    """Build the kernel inputs of ``comp`` over the rows of ``ds``.

    Parameters
    ----------
    transforms : dict, optional
        Covariate name -> ``(loc, scale)`` mapping raw values onto the kernel
        scale.  Missing entries are computed from ``ds``: standardization for
        stationary inputs, division by the standard deviation for warped
        inputs (keeps the event at zero).
    cases : array of int, optional
        0-based id codes of the case individuals, fixing the order of
        heterogeneity parameters and effect times.
    """
    transforms = {} if transforms is None else transforms
    n = ds.num_rows
    inp = ComponentInputs(comp, n, observed=np.ones(n, dtype=bool))
    if comp.categorical_covariate is not None and comp.kind != HETEROGENEOUS_VM:
        col = ds.column(comp.categorical_covariate)
        if col.is_continuous:
            raise DataError(f"'{col.name}' is used as categorical but is continuous")
        inp.z = col.values - 1
        inp.num_categories = col.num_categories
    if comp.continuous_covariate is not None:
        col = ds.column(comp.continuous_covariate)
        if not col.is_continuous:
            raise DataError(f"'{col.name}' is used as continuous but is categorical")
        raw = col.inverse(col.values)
        if col.name not in transforms:
            transforms[col.name] = _input_transform(raw, col.missing_mask, center=not comp.is_warped)
        loc, scale = transforms[col.name]
        inp.observed = ~col.missing_mask
        inp.x = np.where(inp.observed, (raw - loc) / scale, 0.0)
        inp.x_scale = scale
    if comp.is_heterogeneous or comp.uncertain_effect_time:
        if comp.is_heterogeneous and comp.categorical_covariate != ds.id_column:
            raise DataError(f"het() must reference the id column '{ds.id_column}'")
        if cases is None:
            cases = case_individuals(ds, [comp.continuous_covariate])
        cases = np.asarray(cases)
        lookup = np.full(ds.num_individuals, -1)
        lookup[cases] = np.arange(len(cases))
        inp.case = lookup[ds.ids - 1]
    if comp.uncertain_effect_time:
        tcol = ds.column(time_column)
        inp.time = tcol.inverse(tcol.values)
        inp.observed = inp.case >= 0
        if transforms[comp.continuous_covariate][0] != 0.0:
            raise DataError("uncertain effect times require an uncentered disease-age transform")
    return inp


# ---------------------------------------------------------------------------
# component matrices


def _zerosum_matrix(inp: ComponentInputs, inp2: ComponentInputs | None):
    if inp2 is None:
        if inp.zerosum is None:
            inp.zerosum = k_zerosum(inp.z[:, None], inp.z[None, :], inp.num_categories)
        return inp.zerosum
    return k_zerosum(inp.z[:, None], inp2.z[None, :], inp.num_categories)


def _static_factor(inp, params, inp2=None):
    """Product of the factors that do not involve lengthscale, warp or input."""
    other = inp if inp2 is None else inp2
    c = None
    if inp.z is not None:
        c = _zerosum_matrix(inp, inp2)
    if inp.spec.is_heterogeneous:
        b = np.sqrt(np.where(inp.case >= 0, params.beta[np.maximum(inp.case, 0)], 0.0))
        b2 = b if inp2 is None else np.sqrt(
            np.where(other.case >= 0, params.beta[np.maximum(other.case, 0)], 0.0)
        )
        h = b[:, None] * b2[None, :]
        c = h if c is None else c * h
    if inp.spec.continuous_covariate is not None and not (np.all(inp.observed) and np.all(other.observed)):
        m = inp.observed[:, None] & other.observed[None, :]
        c = m.astype(float) if c is None else c * m
    return c


def _continuous_factor(kind, x1, x2, ell, a, h, grad, d2=None, need_dx=True):
    """Continuous kernel factor and its partial derivatives.

    Returns ``(value, d/dl, d/da, d/dx1)``; the last is the derivative with
    respect to the row input only (``None`` for stationary kinds, whose
    inputs are fixed).  ``d2`` optionally supplies the squared distances of
    stationary inputs.
    """
    if kind in (SHARED_EQ, CATEGORICAL_INTERACTION):
        if d2 is None:
            d = x1[:, None] - x2[None, :]
            d2 = d * d
        e = np.exp(d2 * (-0.5 / ell**2))
        if not grad:
            return e, None, None, None
        return e, e * d2 * (1.0 / ell**3), None, None
    w1, w2 = np.tanh(0.5 * a * x1), np.tanh(0.5 * a * x2)
    d = w1[:, None] - w2[None, :]
    e = np.exp(-0.5 * d * d / ell**2)
    if kind == NONSTATIONARY:
        if not grad:
            return e, None, None, None
        w1_a, w2_a = 0.5 * x1 * (1 - w1**2), 0.5 * x2 * (1 - w2**2)
        de_dw1 = -e * d / ell**2
        return (
            e,
            e * d * d / ell**3,
            de_dw1 * (w1_a[:, None] - w2_a[None, :]),
            de_dw1 * (0.5 * a * (1 - w1**2))[:, None] if need_dx else None,
        )
    lh = _logit_h(h)
    v1, v2 = expit(a * x1 + lh), expit(a * x2 + lh)
    vv = v1[:, None] * v2[None, :]
    val = vv * e
    if not grad:
        return val, None, None, None
    w1_a, w2_a = 0.5 * x1 * (1 - w1**2), 0.5 * x2 * (1 - w2**2)
    v1_a, v2_a = x1 * v1 * (1 - v1), x2 * v2 * (1 - v2)
    de_dw1 = -e * d / ell**2
    dval_da = (v1_a[:, None] * v2[None, :] + v1[:, None] * v2_a[None, :]) * e + vv * de_dw1 * (
        w1_a[:, None] - w2_a[None, :]
    )
    dval_dx1 = None
    if need_dx:
        dval_dx1 = (a * v1 * (1 - v1))[:, None] * v2[None, :] * e + vv * de_dw1 * (0.5 * a * (1 - w1**2))[:, None]
    return val, vv * e * d * d / ell**3, dval_da, dval_dx1


def _sqdist(inp: ComponentInputs):
    """Cached squared distances of a stationary component's fixed inputs."""
    if inp.spec.kind not in (SHARED_EQ, CATEGORICAL_INTERACTION):
        return None
    if inp.sqdist is None:
        d = inp.x[:, None] - inp.x[None, :]
        inp.sqdist = d * d
    return inp.sqdist


def base_matrix(inp: ComponentInputs, params: KernelParams, inp2: ComponentInputs | None = None):
    """Component kernel without the ``alpha**2`` factor."""
    comp = inp.spec
    j = comp.index - 1
    static = _static_factor(inp, params, inp2)
    if comp.kind == CATEGORICAL_OFFSET:
        return np.array(static, dtype=float, copy=True)
    x1 = inp.continuous(params)
    x2 = x1 if inp2 is None else inp2.continuous(params)
    cont, *_ = _continuous_factor(comp.kind, x1, x2, params.lengthscale[j], params.warp_steepness,
                                  params.vm_h, grad=False, d2=None if inp2 is not None else _sqdist(inp))
    return cont if static is None else static * cont


def component_matrix(comp, data, params: KernelParams, data2=None) -> np.ndarray:
    """Covariance matrix ``alpha_j**2 * k_j(x_i, x_k)`` of one component.

    ``comp`` may be a :class:`ComponentInputs` (fast path) or a
    :class:`ComponentSpec`, in which case ``data`` is a dataset and the inputs
    are built with :func:`inputs_from_dataset`.  With ``data2`` the
    cross-covariance between the two row sets is returned.
    """
    inp, inp2 = _as_inputs(comp, data, data2)
    alpha = params.alpha[inp.spec.index - 1]
    return alpha**2 * base_matrix(inp, params, inp2)


def _as_inputs(comp, data, data2=None):
    if isinstance(comp, ComponentInputs):
        return comp, data2
    if isinstance(data, ComponentInputs):
        return data, data2
    transforms = {}
    inp = inputs_from_dataset(comp, data, transforms)
    inp2 = None
    if data2 is not None:
        cases = case_individuals(data, [comp.continuous_covariate]) if (
            comp.is_heterogeneous or comp.uncertain_effect_time) else None
        inp2 = inputs_from_dataset(comp, data2, transforms, cases=cases)
    return inp, inp2


def base_matrix_and_partials(inp: ComponentInputs, params: KernelParams):
    """Base matrix plus ``d/dl``, ``d/da`` and the row-input derivative ``G``."""
    comp = inp.spec
    static = _static_factor(inp, params)
    if comp.kind == CATEGORICAL_OFFSET:
        return np.array(static, dtype=float, copy=True), None, None, None
    x = inp.continuous(params)
    cont, d_ell, d_a, d_x = _continuous_factor(comp.kind, x, x, params.lengthscale[comp.index - 1],
                                               params.warp_steepness, params.vm_h, grad=True, d2=_sqdist(inp),
                                               need_dx=comp.uncertain_effect_time)
    if static is None:
        return cont, d_ell, d_a, d_x
    return (
        static * cont,
        static * d_ell,
        None if d_a is None else static * d_a,
        None if d_x is None else static * d_x,
    )


def parameter_names(inp: ComponentInputs, params: KernelParams) -> list:
    """Constrained parameters the component matrix depends on."""
    comp = inp.spec
    names = ["alpha"]
    if comp.has_lengthscale:
        names.append("lengthscale")
    if comp.is_warped:
        names.append("warp_steepness")
    if comp.is_heterogeneous:
        names += [f"beta[{q}]" for q in range(len(params.beta))]
    if comp.uncertain_effect_time:
        names += [f"effect_time[{q}]" for q in range(len(params.effect_times))]
    return names


def component_matrix_grad(comp, data, params: KernelParams, wrt: str) -> np.ndarray:
    """Elementwise derivative of the component matrix w.r.t. one parameter.

    ``wrt`` is ``"alpha"``, ``"lengthscale"``, ``"warp_steepness"``,
    ``"beta[q]"`` or ``"effect_time[q]"`` (0-based case index ``q``).
    """
    inp, _ = _as_inputs(comp, data)
    names = parameter_names(inp, params)
    if wrt not in names:
        raise ValueError(f"component {inp.spec.index} does not depend on '{wrt}'")
    alpha = params.alpha[inp.spec.index - 1]
    b, d_ell, d_a, g = base_matrix_and_partials(inp, params)
    if wrt == "alpha":
        return 2 * alpha * b
    if wrt == "lengthscale":
        return alpha**2 * d_ell
    if wrt == "warp_steepness":
        return alpha**2 * d_a
    q = int(wrt[wrt.index("[") + 1 : -1])
    sel = (inp.case == q).astype(float)
    if wrt.startswith("beta"):
        return alpha**2 * b * (sel[:, None] + sel[None, :]) / (2 * params.beta[q])
    s = -sel / inp.x_scale
    gs = g * s[:, None]
    return alpha**2 * (gs + gs.T)


def contract_gradient(inp: ComponentInputs, params: KernelParams, W: np.ndarray, partials=None) -> dict:
    """Gradient of ``sum(W * B)`` w.r.t. the base-kernel parameters.

    ``W`` must be symmetric; ``B`` is the component matrix without the
    ``alpha**2`` factor.  Returns a dict with keys among ``lengthscale``,
    ``warp_steepness``, ``beta`` (vector) and ``effect_times`` (vector).
    """
    comp = inp.spec
    b, d_ell, d_a, g = base_matrix_and_partials(inp, params) if partials is None else partials
    out = {}
    if d_ell is not None:
        out["lengthscale"] = float(np.vdot(W, d_ell))
    if d_a is not None:
        out["warp_steepness"] = float(np.vdot(W, d_a))
    ncase = None if inp.case is None else int(inp.case.max(initial=-1)) + 1
    if comp.is_heterogeneous:
        ncase = len(params.beta)
        rows = np.sum(b * W, axis=1)
        on = inp.case >= 0
        out["beta"] = np.bincount(inp.case[on], rows[on], minlength=ncase) / params.beta
    if comp.uncertain_effect_time:
        ncase = len(params.effect_times)
        rows = np.sum(g * W, axis=1)
        on = inp.case >= 0
        out["effect_times"] = -2.0 / inp.x_scale * np.bincount(inp.case[on], rows[on], minlength=ncase)
    return out
