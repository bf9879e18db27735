"""Binding of a model specification to data and priors.

:class:`BoundModel` owns the parameter layout, the constraint transforms and
the unnormalized log posterior (with gradient) consumed by the sampler.  Two
evaluation paths exist:

* Gaussian likelihood: components are marginalized analytically and the
  log density is the GP marginal likelihood of the hyperparameters.
* Otherwise (or on request): components are sampled jointly with the
  hyperparameters in whitened form ``f_j = alpha_j L_j eta_j`` where
  ``L_j L_j^T`` is the base kernel of component ``j``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.special import expit, log_expit

from .dataset import DataError, LongitudinalDataset, standardize
from .formula import CATEGORICAL_OFFSET, SHARED_EQ, CATEGORICAL_INTERACTION, ModelSpec
from .kernels import (
    VM_H,
    ComponentInputs,
    KernelParams,
    _sqdist,
    base_matrix,
    base_matrix_and_partials,
    case_individuals,
    contract_gradient,
    inputs_from_dataset,
    observed_onsets,
)
from .likelihoods import (
    TRIAL_FAMILIES,
    ObservationParams,
    inverse_link,
    log_likelihood,
    log_likelihood_grad,
    obs_param_name,
)
from .priors import Prior, PriorSpec, transform_for

LATENT_JITTER = 1e-8
JITTER_LADDER = (1e-8, 1e-6, 1e-4)


class FactorizationError(np.linalg.LinAlgError):
    """Covariance matrix could not be factorized even after adding jitter."""


def cholesky(K: np.ndarray, base: float = 0.0, ladder=JITTER_LADDER, relative: bool = True):
    """Lower Cholesky factor of ``K + base*I``, escalating jitter on failure.

    Returns ``(L, jitter)``.  With ``relative`` the ladder entries are scaled
    by the mean diagonal of ``K``.
    """
    n = K.shape[0]
    scale = float(np.mean(np.diag(K))) if relative else 1.0
    scale = scale if scale > 0 else 1.0
    for eps in (0.0,) + tuple(ladder):
        jit = base + eps * scale
        try:
            if jit:
                return np.linalg.cholesky(K + jit * np.eye(n)), jit
            return np.linalg.cholesky(K), 0.0
        except np.linalg.LinAlgError:
            continue
    raise FactorizationError("covariance matrix is not positive definite even with jitter")


def _cho_inverse(L):
    # L comes from numpy, so its strict upper triangle (kept by dpotri) is zero
    inv, info = dpotri(L, lower=1)
    if info != 0:
        raise FactorizationError("inverse from Cholesky factor failed")
    inv += inv.T
    inv[np.diag_indices_from(inv)] *= 0.5
    return inv


@dataclass
class ParamVector:
    """Constrained parameter values of one posterior draw."""

    kernel: KernelParams
    obs: ObservationParams
    delta_t: np.ndarray | None = None

    @property
    def effect_times(self):
        return self.kernel.effect_times


@dataclass
class ComponentPosterior:
    """Posterior means and pointwise variances, one row per component."""

    mean: np.ndarray
    cov_diag: np.ndarray

    @property
    def total_mean(self) -> np.ndarray:
        return self.mean.sum(axis=0)


class BoundModel:
    """A model specification bound to a dataset and priors.

    Use :func:`bind` to construct.
    """

    def __init__(
        self,
        spec: ModelSpec,
        ds: LongitudinalDataset,
        priors: PriorSpec | None = None,
        *,
        time_column: str | None = None,
        standardize_response: bool | None = None,
        latent: bool | None = None,
        vm_h: float = VM_H,
    ):
        self.spec = spec
        self.dataset = ds
        self.priors = priors if priors is not None else PriorSpec()
        self.family = spec.likelihood
        self.vm_h = vm_h
        if spec.response != ds.response_name:
            raise DataError(f"formula response '{spec.response}' does not match data response '{ds.response_name}'")
        if self.family in TRIAL_FAMILIES and ds.trials is None:
            raise DataError(f"likelihood '{self.family}' requires trials")
        if self.family not in TRIAL_FAMILIES and ds.trials is not None:
            raise DataError(f"likelihood '{self.family}' does not use trials")
        self.latent = (self.family != "gaussian") if latent is None else bool(latent)
        if self.family != "gaussian" and not self.latent:
            raise ValueError("non-Gaussian likelihoods require latent sampling")

        y = ds.response.astype(float)
        if self.family in ("poisson", "nb", "binomial", "betabinomial") and (
                np.any(y < 0) or np.any(y != np.round(y))):
            raise DataError(f"likelihood '{self.family}' needs non-negative integer responses")
        if standardize_response is None:
            standardize_response = self.family == "gaussian"
        if standardize_response and self.family != "gaussian":
            raise ValueError("only a Gaussian response can be standardized")
        loc, scale = standardize(y) if (standardize_response and len(y) > 1 and np.ptp(y) > 0) else (0.0, 1.0)
        self.response_transform = (loc, scale)
        self.y = (y - loc) / scale
        self.offsets = ds.scaling_factors / scale
        self.trials = None if ds.trials is None else ds.trials.astype(float)

        comps = spec.components
        disease = sorted({c.continuous_covariate for c in comps if c.is_warped})
        need_cases = any(c.is_heterogeneous or c.uncertain_effect_time for c in comps)
        self.cases = case_individuals(ds, disease) if disease else np.array([], dtype=int)
        for c in comps:
            if c.is_warped and not np.any(~ds.column(c.continuous_covariate).missing_mask):
                raise DataError(f"covariate '{c.continuous_covariate}' is missing for every individual")
        if need_cases and len(self.cases) == 0:
            raise DataError("disease component without any case individual")
        id_levels = ds.column(ds.id_column).levels
        self.case_labels = [id_levels[q] for q in self.cases]

        self.uncertain = any(c.uncertain_effect_time for c in comps)
        if time_column is None and self.uncertain:
            if "age" in ds:
                time_column = "age"
            else:
                shared = [c.continuous_covariate for c in comps if c.kind in (SHARED_EQ, CATEGORICAL_INTERACTION)]
                if not shared:
                    raise DataError("uncertain effect times need a time covariate (time_column)")
                time_column = shared[0]
        self.time_column = time_column

        self.transforms: dict = {}
        self.inputs: list[ComponentInputs] = [
            inputs_from_dataset(c, ds, self.transforms, cases=self.cases, time_column=time_column or "age")
            for c in comps
        ]
        self.t_obs = None
        if self.uncertain:
            dis = next(c.continuous_covariate for c in comps if c.uncertain_effect_time)
            self.t_obs = observed_onsets(ds, dis, time_column, self.cases)
        warp_cov = next((c.continuous_covariate for c in comps if c.is_warped), None)
        self.warp_scale = self.transforms[warp_cov][1] if warp_cov else 1.0

        self._build_layout()
        self._static_cache: dict = {}

    # ------------------------------------------------------------------
    # layout

    def _build_layout(self):
        comps = self.spec.components
        J = len(comps)
        names = [f"alpha[{c.index}]" for c in comps]
        self._ell_comps = np.array([c.index - 1 for c in comps if c.has_lengthscale], dtype=int)
        names += [f"lengthscale[{j + 1}]" for j in self._ell_comps]
        self.has_warp = any(c.is_warped for c in comps)
        if self.has_warp:
            names.append("warp_steepness")
        self.obs_name = obs_param_name(self.family)
        if self.obs_name:
            names.append(self.obs_name)
        self.has_beta = any(c.is_heterogeneous for c in comps)
        Q = len(self.cases)
        if self.has_beta:
            names += [f"beta[{q + 1}]" for q in range(Q)]
        self.time_mode = self.priors.effect_time_mode
        self.time_group = "delta_t" if self.time_mode == "delta_t" else "effect_time"
        if self.uncertain:
            names += [f"{self.time_group}[{q + 1}]" for q in range(Q)]

        self.all_names = names
        pos = {n: i for i, n in enumerate(names)}
        self._sl_alpha = slice(0, J)
        k = J + len(self._ell_comps)
        self._sl_ell = slice(J, k)
        self._i_warp = pos.get("warp_steepness")
        self._i_obs = pos.get(self.obs_name) if self.obs_name else None
        self._sl_beta = slice(pos["beta[1]"], pos["beta[1]"] + Q) if self.has_beta else None
        self._sl_time = slice(pos[f"{self.time_group}[1]"], pos[f"{self.time_group}[1]"] + Q) if self.uncertain else None

        self._priors = [self.priors.prior_for(n, self.warp_scale) for n in names]
        unknown = set(self.priors.overrides) - set(names)
        if unknown:
            raise ValueError(f"prior overrides for unknown parameters: {sorted(unknown)}")
        fixed = [i for i, p in enumerate(self._priors) if p.is_fixed]
        self._free = np.array([i for i in range(len(names)) if i not in fixed], dtype=int)
        self._full_template = np.zeros(len(names))
        for i in fixed:
            self._full_template[i] = self._priors[i].params[0]
        self.names = [names[i] for i in self._free]
        self.fixed = {names[i]: self._full_template[i] for i in fixed}
        free_priors = [self._priors[i] for i in self._free]
        self._transforms = [transform_for(n, self.priors, p) for n, p in zip(self.names, free_priors)]
        kinds = np.array([t.kind for t in self._transforms])
        self._t_log = np.flatnonzero(kinds == "log")
        self._t_logit = np.flatnonzero(kinds == "logit")
        self._t_interval = np.flatnonzero(kinds == "interval")
        self._t_lo = np.array([self._transforms[i].lower for i in self._t_interval])
        self._t_w = np.array([self._transforms[i].upper - self._transforms[i].lower for i in self._t_interval])
        self._free_priors = free_priors
        self.num_params = len(self.names)
        self.num_latent = J * self.num_rows if self.latent else 0
        self.dim = self.num_params + self.num_latent
        # components whose base kernel never changes during sampling
        self._stationary = [inp.spec.kind in (SHARED_EQ, CATEGORICAL_INTERACTION) for inp in self.inputs]
        self._static = []
        for inp in self.inputs:
            c = inp.spec
            deps = []
            if c.has_lengthscale:
                deps.append(f"lengthscale[{c.index}]")
            if c.is_warped:
                deps.append("warp_steepness")
            if c.is_heterogeneous:
                deps.append("beta")
            if c.uncertain_effect_time:
                deps.append(self.time_group)
            free = any(n == d or n.startswith(d + "[") for d in deps for n in self.names)
            self._static.append(not free)

    @property
    def num_rows(self) -> int:
        return self.dataset.num_rows

    @property
    def num_components(self) -> int:
        return self.spec.num_components

    def layout(self) -> dict:
        """Parameter name -> index range in the unconstrained vector."""
        out = {n: slice(i, i + 1) for i, n in enumerate(self.names)}
        N = self.num_rows
        if self.latent:
            for j in range(self.num_components):
                start = self.num_params + j * N
                out[f"eta[{j + 1}]"] = slice(start, start + N)
        return out

    def prior(self, name: str) -> Prior:
        return self._priors[self.all_names.index(name)]

    # ------------------------------------------------------------------
    # constraint transforms

    def _forward(self, uh):
        """Constrained values, dx/du, log-Jacobian and its gradient."""
        x = uh.astype(float).copy()
        dx = np.ones_like(x)
        dlogj = np.zeros_like(x)
        logj = 0.0
        i = self._t_log
        if len(i):
            x[i] = np.exp(uh[i])
            dx[i] = x[i]
            logj += float(np.sum(uh[i]))
            dlogj[i] = 1.0
        for idx, lo, w in ((self._t_logit, 0.0, 1.0), (self._t_interval, self._t_lo, self._t_w)):
            if len(idx):
                s = expit(uh[idx])
                x[idx] = lo + w * s
                dx[idx] = w * s * (1 - s)
                logj += float(np.sum(np.log(w) + log_expit(uh[idx]) + log_expit(-uh[idx])))
                dlogj[idx] = 1 - 2 * s
        return x, dx, logj, dlogj

    def _dx(self, theta):
        """``dx/du`` written in terms of the constrained values (valid on boundaries)."""
        dx = np.ones_like(theta)
        dx[self._t_log] = theta[self._t_log]
        x = theta[self._t_logit]
        dx[self._t_logit] = x * (1 - x)
        x = theta[self._t_interval]
        dx[self._t_interval] = (x - self._t_lo) * (self._t_lo + self._t_w - x) / self._t_w
        return dx

    def constrain(self, u) -> ParamVector:
        u = np.asarray(u, dtype=float)
        if u.shape[-1] not in (self.num_params, self.dim):
            raise ValueError(f"expected {self.num_params} or {self.dim} unconstrained values, got {u.shape[-1]}")
        return self.param_vector(self._forward(u[: self.num_params])[0])

    def constrained_values(self, u) -> np.ndarray:
        return self._forward(np.asarray(u, dtype=float)[: self.num_params])[0]

    def unconstrain(self, params) -> np.ndarray:
        """Unconstrained hyperparameter vector of a ParamVector or value vector."""
        theta = self.values(params) if isinstance(params, ParamVector) else np.asarray(params, dtype=float)
        if theta.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} constrained values, got {theta.shape}")
        return np.array([t.inverse(v) for t, v in zip(self._transforms, theta)])

    def _full(self, theta):
        full = self._full_template.copy()
        full[self._free] = theta
        return full

    def param_vector(self, theta) -> ParamVector:
        """ParamVector from the free constrained values (layout order)."""
        full = self._full(np.asarray(theta, dtype=float))
        J = self.num_components
        ell = np.full(J, np.nan)
        ell[self._ell_comps] = full[self._sl_ell]
        kp = KernelParams(
            alpha=full[self._sl_alpha],
            lengthscale=ell,
            warp_steepness=None if self._i_warp is None else float(full[self._i_warp]),
            beta=None if self._sl_beta is None else full[self._sl_beta],
            vm_h=self.vm_h,
        )
        delta = None
        if self.uncertain:
            v = full[self._sl_time]
            if self.time_mode == "delta_t":
                delta = v
                kp.effect_times = self.t_obs - v
            else:
                kp.effect_times = v
        obs = ObservationParams()
        if self.obs_name == "sigma":
            obs.sigma = float(full[self._i_obs])
        elif self.obs_name:
            obs.dispersion = float(full[self._i_obs])
        return ParamVector(kp, obs, delta)

    def values(self, pv: ParamVector, include_fixed: bool = False) -> np.ndarray:
        """Inverse of :meth:`param_vector`."""
        full = np.zeros(len(self.all_names))
        full[self._sl_alpha] = pv.kernel.alpha
        full[self._sl_ell] = pv.kernel.lengthscale[self._ell_comps]
        if self._i_warp is not None:
            full[self._i_warp] = pv.kernel.warp_steepness
        if self._i_obs is not None:
            full[self._i_obs] = pv.obs.sigma if self.obs_name == "sigma" else pv.obs.dispersion
        if self._sl_beta is not None:
            full[self._sl_beta] = pv.kernel.beta
        if self._sl_time is not None:
            full[self._sl_time] = (self.t_obs - pv.kernel.effect_times) if self.time_mode == "delta_t" \
                else pv.kernel.effect_times
        return full if include_fixed else full[self._free]

    # ------------------------------------------------------------------
    # log densities

    def log_prior(self, theta) -> float:
        """Log prior of the free constrained values (no Jacobian)."""
        return float(sum(p.logpdf(v) for p, v in zip(self._free_priors, theta)))

    def log_prob(self, u, prior_only: bool = False) -> float:
        return self.log_prob_grad(u, prior_only, grad=False)[0]

    def log_prob_grad(self, u, prior_only: bool = False, grad: bool = True):
        """Unnormalized log posterior of the unconstrained vector and its gradient.

        Points where the density cannot be evaluated (overflowing transforms,
        failed factorizations) get ``-inf``.
        """
        u = np.asarray(u, dtype=float)
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                return self._log_prob_grad(u, prior_only, grad)
        except (OverflowError, FactorizationError):
            return -np.inf, (np.zeros_like(u) if grad else None)

    def _log_prob_grad(self, u, prior_only, grad):
        P = self.num_params
        theta, dx, logj, dlogj = self._forward(u[:P])
        lp = logj
        g_theta = np.zeros(P)
        for i, (prior, v) in enumerate(zip(self._free_priors, theta)):
            l, d = prior.logpdf_grad(v)
            lp += l
            g_theta[i] = d
        if not np.isfinite(lp):
            return -np.inf, np.zeros_like(u)
        g_eta = None
        if self.latent:
            eta = u[P:].reshape(self.num_components, self.num_rows)
            if prior_only:
                lp += -0.5 * float(np.sum(eta * eta))
                g_eta = -eta
            else:
                pv = self.param_vector(theta)
                try:
                    ll, g_full, g_eta = self._latent_terms(pv, eta, grad)
                except FactorizationError:
                    return -np.inf, np.zeros_like(u)
                lp += ll
                if grad:
                    g_theta += g_full[self._free]
        elif not prior_only:
            pv = self.param_vector(theta)
            try:
                ll, g_full = self._marginal_terms(pv, grad)
            except FactorizationError:
                return -np.inf, np.zeros_like(u)
            lp += ll
            if grad:
                g_theta += g_full[self._free]
        if not np.isfinite(lp):
            return -np.inf, np.zeros_like(u)
        if not grad:
            return float(lp), None
        g_u = g_theta * dx + dlogj
        if g_eta is not None:
            g_u = np.concatenate([g_u, g_eta.ravel()])
        return float(lp), g_u

    def _time_sign(self):
        return -1.0 if self.time_mode == "delta_t" else 1.0

    def _accumulate(self, g_full, j, contrib, scale):
        if "lengthscale" in contrib:
            k = int(np.searchsorted(self._ell_comps, j))
            g_full[self._sl_ell.start + k] += scale * contrib["lengthscale"]
        if "warp_steepness" in contrib:
            g_full[self._i_warp] += scale * contrib["warp_steepness"]
        if "beta" in contrib:
            g_full[self._sl_beta] += scale * contrib["beta"]
        if "effect_times" in contrib:
            g_full[self._sl_time] += self._time_sign() * scale * contrib["effect_times"]

    def _base(self, j, pv, partials):
        if self._static[j]:
            key = ("base", j)
            if key not in self._static_cache:
                self._static_cache[key] = base_matrix(self.inputs[j], pv.kernel)
            return self._static_cache[key], None, None, None
        if partials and not self._stationary[j]:
            return base_matrix_and_partials(self.inputs[j], pv.kernel)
        # stationary kernels: the lengthscale gradient is formed from cached distances
        return base_matrix(self.inputs[j], pv.kernel), None, None, None

    def total_covariance(self, pv: ParamVector) -> np.ndarray:
        """Prior covariance ``sum_j K_j`` of the latent signal."""
        return sum(pv.kernel.alpha[j] ** 2 * base_matrix(inp, pv.kernel) for j, inp in enumerate(self.inputs))

    def _marginal_terms(self, pv, grad):
        N = self.num_rows
        alpha = pv.kernel.alpha
        parts = [self._base(j, pv, grad) for j in range(self.num_components)]
        K = np.zeros((N, N))
        for j, p in enumerate(parts):
            K += alpha[j] ** 2 * p[0]
        sigma = pv.obs.sigma
        K[np.diag_indices(N)] += sigma**2
        L, _ = cholesky(K)
        r = self.y - self.offsets
        a = solve_triangular(L, r, lower=True, check_finite=False)
        ll = -0.5 * float(a @ a) - float(np.sum(np.log(np.diag(L)))) - 0.5 * N * np.log(2 * np.pi)
        if not grad:
            return ll, None
        a = solve_triangular(L, a, lower=True, trans="T", check_finite=False)
        W = 0.5 * (np.outer(a, a) - _cho_inverse(L))
        g_full = np.zeros(len(self.all_names))
        for j, (b, d_ell, d_a, g) in enumerate(parts):
            if self._stationary[j] and not self._static[j]:
                wb = W * b
                g_full[self._sl_alpha.start + j] = 2 * alpha[j] * float(wb.sum())
                ell = pv.kernel.lengthscale[j]
                contrib = {"lengthscale": float(np.vdot(wb, _sqdist(self.inputs[j]))) / ell**3}
                self._accumulate(g_full, j, contrib, alpha[j] ** 2)
                continue
            g_full[self._sl_alpha.start + j] = 2 * alpha[j] * float(np.vdot(W, b))
            if d_ell is not None or (d_a is not None) or g is not None:
                contrib = contract_gradient(self.inputs[j], pv.kernel, W, (b, d_ell, d_a, g))
                self._accumulate(g_full, j, contrib, alpha[j] ** 2)
        g_full[self._i_obs] = 2 * sigma * float(np.trace(W))
        return ll, g_full

    def _factor(self, j, pv, partials):
        """Base matrix pieces and the jittered Cholesky factor of component j."""
        if self._static[j] and j in self._static_cache:
            return self._static_cache[j]
        b, d_ell, d_a, g = self._base(j, pv, partials)
        L, _ = cholesky(b, base=LATENT_JITTER, ladder=JITTER_LADDER[1:], relative=False)
        out = (b, d_ell, d_a, g, L)
        if self._static[j]:
            self._static_cache[j] = out
        return out

    def latent_components(self, u) -> np.ndarray:
        """Component values ``f_j = alpha_j L_j eta_j`` (shape J x N) of a latent draw."""
        u = np.asarray(u, dtype=float)
        pv = self.constrain(u)
        eta = u[self.num_params:].reshape(self.num_components, self.num_rows)
        f = np.empty_like(eta)
        for j in range(self.num_components):
            f[j] = pv.kernel.alpha[j] * (self._factor(j, pv, False)[4] @ eta[j])
        return f

    def _latent_terms(self, pv, eta, grad):
        J, N = eta.shape
        alpha = pv.kernel.alpha
        facs = [self._factor(j, pv, grad) for j in range(J)]
        v = np.stack([facs[j][4] @ eta[j] for j in range(J)])
        h = self.offsets + alpha @ v
        ll = log_likelihood(self.y, h, self.family, pv.obs, self.trials) - 0.5 * float(np.sum(eta * eta))
        if not grad:
            return ll, None, None
        dh, dobs = log_likelihood_grad(self.y, h, self.family, pv.obs, self.trials)
        g_full = np.zeros(len(self.all_names))
        g_eta = np.empty_like(eta)
        tril = np.tril_indices(N)
        for j, (b, d_ell, d_a, g, L) in enumerate(facs):
            ut = L.T @ dh
            g_eta[j] = alpha[j] * ut - eta[j]
            g_full[self._sl_alpha.start + j] = float(dh @ v[j])
            if self._static[j]:
                continue
            M = np.zeros((N, N))
            M[tril] = np.outer(ut, eta[j])[tril]
            M[np.diag_indices(N)] *= 0.5
            X = solve_triangular(L, M, lower=True, trans="T", check_finite=False)
            W = solve_triangular(L, X.T, lower=True, trans="T", check_finite=False).T
            W = 0.5 * (W + W.T)
            if self._stationary[j]:
                ell = pv.kernel.lengthscale[j]
                contrib = {"lengthscale": float(np.vdot(W * b, _sqdist(self.inputs[j]))) / ell**3}
            else:
                contrib = contract_gradient(self.inputs[j], pv.kernel, W, (b, d_ell, d_a, g))
            self._accumulate(g_full, j, contrib, alpha[j])
        if dobs is not None:
            g_full[self._i_obs] = dobs
        return ll, g_full, g_eta

    # ------------------------------------------------------------------
    # posterior quantities

    def log_marginal_gaussian(self, pv: ParamVector) -> float:
        if self.family != "gaussian":
            raise ValueError("analytic marginal likelihood needs a Gaussian likelihood")
        return self._marginal_terms(pv, False)[0]

    def grad_log_marginal_gaussian(self, pv: ParamVector) -> np.ndarray:
        """Gradient of the log marginal likelihood w.r.t. the unconstrained free parameters."""
        if self.family != "gaussian":
            raise ValueError("analytic marginal likelihood needs a Gaussian likelihood")
        _, g_full = self._marginal_terms(pv, True)
        return g_full[self._free] * self._dx(self.values(pv))

    def component_inputs_for(self, ds: LongitudinalDataset) -> list[ComponentInputs]:
        return [
            inputs_from_dataset(c, ds, self.transforms, cases=self.cases, time_column=self.time_column or "age")
            for c in self.spec.components
        ]

    def component_posterior(self, pv: ParamVector, at: LongitudinalDataset | None = None,
                            variances: bool = True) -> ComponentPosterior:
        """Analytic posterior of every component (Gaussian likelihood).

        Means and variances are on the model's (standardized) response scale,
        at the observed rows or at the rows of ``at``.
        """
        if self.family != "gaussian":
            raise ValueError("analytic component posteriors need a Gaussian likelihood")
        N = self.num_rows
        alpha = pv.kernel.alpha
        Ks = [alpha[j] ** 2 * base_matrix(inp, pv.kernel) for j, inp in enumerate(self.inputs)]
        K = np.sum(Ks, axis=0)
        K[np.diag_indices(N)] += pv.obs.sigma ** 2
        L, _ = cholesky(K)
        a = solve_triangular(L, self.y - self.offsets, lower=True, check_finite=False)
        a = solve_triangular(L, a, lower=True, trans="T", check_finite=False)
        if at is None:
            cross, prior_diag = Ks, [np.diag(k) for k in Ks]
        else:
            new = self.component_inputs_for(at)
            cross = [alpha[j] ** 2 * base_matrix(new[j], pv.kernel, self.inputs[j]) for j in range(len(new))]
            prior_diag = [alpha[j] ** 2 * np.diag(base_matrix(new[j], pv.kernel)) for j in range(len(new))]
        mean = np.stack([kc @ a for kc in cross])
        var = np.zeros_like(mean)
        if variances:
            for j, kc in enumerate(cross):
                v = solve_triangular(L, kc.T, lower=True, check_finite=False)
                var[j] = np.maximum(prior_diag[j] - np.sum(v * v, axis=0), 0.0)
        return ComponentPosterior(mean, var)

    def sample_components(self, pv: ParamVector, rng: np.random.Generator) -> np.ndarray:
        """One draw of every component from its GP prior (J x N)."""
        out = np.empty((self.num_components, self.num_rows))
        for j, inp in enumerate(self.inputs):
            b = base_matrix(inp, pv.kernel)
            L, _ = cholesky(b, base=LATENT_JITTER, ladder=JITTER_LADDER[1:], relative=False)
            out[j] = pv.kernel.alpha[j] * (L @ rng.standard_normal(self.num_rows))
        return out

    def predictions(self, h) -> np.ndarray:
        """Response-scale predictions ``g^-1(h)``."""
        return inverse_link(h, self.family)

    def relevance_response(self) -> np.ndarray:
        """Response used for variance decomposition (``y / trials`` for binomial types)."""
        if self.family in TRIAL_FAMILIES:
            return self.y / self.trials
        return self.y

    def response_to_raw(self, y):
        loc, scale = self.response_transform
        return np.asarray(y) * scale + loc

    def initial_point(self, rng: np.random.Generator, radius: float = 2.0) -> np.ndarray:
        return rng.uniform(-radius, radius, self.dim)

    def describe(self) -> dict:
        return {
            "formula": self.spec.formula(),
            "likelihood": self.family,
            "parameters": list(self.names),
            "fixed": dict(self.fixed),
            "cases": list(self.case_labels),
            "time_column": self.time_column,
            "latent": self.latent,
            "response_transform": list(self.response_transform),
        }


def bind(spec: ModelSpec, ds: LongitudinalDataset, priors: PriorSpec | None = None, **options) -> BoundModel:
    """Validate ``spec`` against ``ds`` and build the parameter layout.

    Options: ``time_column`` (raw time covariate for uncertain effect times,
    default ``"age"``), ``standardize_response`` (default: Gaussian only),
    ``latent`` (sample components explicitly even for Gaussian data) and
    ``vm_h`` (variance-mask constant, default 0.025).
    """
    return BoundModel(spec, ds, priors, **options)
