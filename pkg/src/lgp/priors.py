"""Prior distributions, constraint transforms and prior-predictive sampling.

Default families (all overridable, see ``PriorSpec.from_dict``):

==================  ==========================================================
parameter           default prior
==================  ==========================================================
alpha               half-Student-t(nu=20, scale=1)
lengthscale         log-normal(0, 1) on the normalized covariate scale
warp steepness      log-normal(log(2 log(39) / window) + log(s), 0.3), with
                    ``window`` = 36 (months) and ``s`` the disease-age scale
sigma               half-Student-t(nu=4, scale=1)
phi / gamma         log-normal(1, 1)
beta                Beta(0.2, 0.2)
effect time         Exp(0.05) on ``delta_t = t_obs - t_eff >= 0``
==================  ==========================================================
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import stats
from scipy.special import betaln, expit, gammaln, log_expit

LOG_2PI = math.log(2 * math.pi)

# number of parameters each family takes, in order
_FAMILY_PARAMS = {
    "half_student_t": ("nu", "scale"),
    "half_normal": ("scale",),
    "normal": ("mu", "sigma"),
    "student_t": ("nu", "mu", "scale"),
    "log_normal": ("mu", "sigma"),
    "gamma": ("shape", "rate"),
    "inv_gamma": ("shape", "scale"),
    "exponential": ("rate",),
    "beta": ("a", "b"),
    "uniform": ("lower", "upper"),
    "fixed": ("value",),
}


@dataclass(frozen=True)
class Prior:
    """A univariate prior.

    With ``square=True`` the density is placed on the squared parameter,
    e.g. an inverse-gamma prior on ``sigma**2``.
    """

    family: str
    params: tuple = ()
    square: bool = False

    def __post_init__(self):
        if self.family not in _FAMILY_PARAMS:
            raise ValueError(f"unknown prior family '{self.family}'")
        names = _FAMILY_PARAMS[self.family]
        if len(self.params) != len(names):
            raise ValueError(f"prior '{self.family}' takes parameters {names}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        p = dict(zip(names, self.params))
        for key in ("nu", "scale", "sigma", "shape", "rate", "a", "b"):
            if key in p and not p[key] > 0:
                raise ValueError(f"prior '{self.family}': {key} must be positive")
        if self.family == "uniform" and not p["upper"] > p["lower"]:
            raise ValueError("uniform prior needs lower < upper")

    @property
    def is_fixed(self) -> bool:
        return self.family == "fixed"

    @property
    def kw(self) -> dict:
        return dict(zip(_FAMILY_PARAMS[self.family], self.params))

    def _base(self, x):
        """log density and derivative of the base family at x."""
        f, p = self.family, self.params
        if f == "half_student_t":
            nu, s = p
            if x < 0:
                return -np.inf, 0.0
            lp = (math.log(2) + gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
                  - math.log(s) - (nu + 1) / 2 * math.log1p((x / s) ** 2 / nu))
            return lp, -(nu + 1) * x / (nu * s * s + x * x)
        if f == "student_t":
            nu, mu, s = p
            d = x - mu
            lp = (gammaln((nu + 1) / 2) - gammaln(nu / 2) - 0.5 * math.log(nu * math.pi)
                  - math.log(s) - (nu + 1) / 2 * math.log1p((d / s) ** 2 / nu))
            return lp, -(nu + 1) * d / (nu * s * s + d * d)
        if f == "half_normal":
            (s,) = p
            if x < 0:
                return -np.inf, 0.0
            return math.log(2) - 0.5 * LOG_2PI - math.log(s) - 0.5 * (x / s) ** 2, -x / s**2
        if f == "normal":
            mu, s = p
            return -0.5 * LOG_2PI - math.log(s) - 0.5 * ((x - mu) / s) ** 2, -(x - mu) / s**2
        if f == "log_normal":
            mu, s = p
            if x <= 0:
                return -np.inf, 0.0
            lx = math.log(x)
            return (-lx - math.log(s) - 0.5 * LOG_2PI - 0.5 * ((lx - mu) / s) ** 2,
                    -1.0 / x - (lx - mu) / (s * s * x))
        if f == "gamma":
            a, b = p
            if x <= 0:
                return -np.inf, 0.0
            return a * math.log(b) - gammaln(a) + (a - 1) * math.log(x) - b * x, (a - 1) / x - b
        if f == "inv_gamma":
            a, b = p
            if x <= 0:
                return -np.inf, 0.0
            return a * math.log(b) - gammaln(a) - (a + 1) * math.log(x) - b / x, -(a + 1) / x + b / (x * x)
        if f == "exponential":
            (lam,) = p
            if x < 0:
                return -np.inf, 0.0
            return math.log(lam) - lam * x, -lam
        if f == "beta":
            a, b = p
            if not 0 < x < 1:
                return -np.inf, 0.0
            return ((a - 1) * math.log(x) + (b - 1) * math.log1p(-x) - betaln(a, b),
                    (a - 1) / x - (b - 1) / (1 - x))
        if f == "uniform":
            lo, hi = p
            if not lo <= x <= hi:
                return -np.inf, 0.0
            return -math.log(hi - lo), 0.0
        raise ValueError("a fixed prior has no density")

    def logpdf(self, x) -> float:
        return self.logpdf_grad(x)[0]

    def logpdf_grad(self, x):
        """Log density at ``x`` and its derivative with respect to ``x``."""
        x = float(x)
        if not self.square:
            return self._base(x)
        if x <= 0:
            return -np.inf, 0.0
        lp, d = self._base(x * x)
        return lp + math.log(2 * x), 2 * x * d + 1.0 / x

    def sample(self, rng: np.random.Generator, size=None):
        f, p = self.family, self.params
        if f == "half_student_t":
            v = np.abs(p[1] * rng.standard_t(p[0], size))
        elif f == "student_t":
            v = p[1] + p[2] * rng.standard_t(p[0], size)
        elif f == "half_normal":
            v = np.abs(p[0] * rng.standard_normal(size))
        elif f == "normal":
            v = rng.normal(p[0], p[1], size)
        elif f == "log_normal":
            v = rng.lognormal(p[0], p[1], size)
        elif f == "gamma":
            v = rng.gamma(p[0], 1.0 / p[1], size)
        elif f == "inv_gamma":
            v = p[1] / rng.gamma(p[0], 1.0, size)
        elif f == "exponential":
            v = rng.exponential(1.0 / p[0], size)
        elif f == "beta":
            v = rng.beta(p[0], p[1], size)
        elif f == "uniform":
            v = rng.uniform(p[0], p[1], size)
        else:
            v = np.full(size if size is not None else (), p[0])
        return np.sqrt(v) if self.square else v

    def to_dict(self) -> dict:
        d = {"family": self.family, **self.kw}
        if self.square:
            d["square"] = True
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Prior":
        d = dict(d)
        family = d.pop("family")
        square = bool(d.pop("square", False))
        names = _FAMILY_PARAMS.get(family)
        if names is None:
            raise ValueError(f"unknown prior family '{family}'")
        missing = [n for n in names if n not in d]
        extra = [k for k in d if k not in names]
        if missing or extra:
            raise ValueError(f"prior '{family}': expected parameters {names}, got {sorted(d)}")
        return cls(family, tuple(d[n] for n in names), square)


def half_student_t(nu, scale=1.0):
    return Prior("half_student_t", (nu, scale))


def log_normal(mu, sigma):
    return Prior("log_normal", (mu, sigma))


def beta_prior(a, b):
    return Prior("beta", (a, b))


def exponential(rate):
    return Prior("exponential", (rate,))


def fixed(value):
    return Prior("fixed", (value,))


def default_warp_mu(window: float = 36.0, h: float = 0.025) -> float:
    """Log-steepness whose 2h..(1-2h) warp window spans ``window`` raw units."""
    return math.log(2 * math.log((1 - h) / h) / window)


# ---------------------------------------------------------------------------
# transforms from the unconstrained real line


@dataclass(frozen=True)
class Transform:
    """Bijection ``x = T(u)`` with log-Jacobian ``log |dx/du|``."""

    kind: str
    lower: float = 0.0
    upper: float = 1.0

    def forward(self, u):
        """Return ``(x, dx/du, log|dx/du|, d log|dx/du| / du)``."""
        if self.kind == "identity":
            return u, 1.0, 0.0, 0.0
        if self.kind == "log":
            x = math.exp(u)
            return x, x, u, 1.0
        s = float(expit(u))
        width = self.upper - self.lower
        logj = math.log(width) + float(log_expit(u) + log_expit(-u))
        return self.lower + width * s, width * s * (1 - s), logj, 1.0 - 2.0 * s

    def inverse(self, x):
        if self.kind == "identity":
            return float(x)
        if self.kind == "log":
            return math.log(x)
        s = (x - self.lower) / (self.upper - self.lower)
        return math.log(s) - math.log1p(-s)


IDENTITY = Transform("identity")
LOG = Transform("log")
LOGIT = Transform("logit")


# ---------------------------------------------------------------------------
# prior specification


@dataclass
class PriorSpec:
    """Prior families for every parameter group plus per-parameter overrides.

    ``overrides`` maps an individual parameter name such as ``"alpha[2]"``
    to a :class:`Prior`; a ``fixed`` prior removes the parameter from
    sampling.  ``effect_time_mode`` is ``"delta_t"`` (prior on
    ``t_obs - t_eff``) or ``"direct"`` (prior on ``t_eff`` itself).
    """

    alpha: Prior = field(default_factory=lambda: half_student_t(20, 1))
    lengthscale: Prior = field(default_factory=lambda: log_normal(0, 1))
    warp: Prior | None = None
    warp_window: float = 36.0
    sigma: Prior = field(default_factory=lambda: half_student_t(4, 1))
    dispersion: Prior = field(default_factory=lambda: log_normal(1, 1))
    beta: Prior = field(default_factory=lambda: beta_prior(0.2, 0.2))
    effect_time: Prior = field(default_factory=lambda: exponential(0.05))
    effect_time_mode: str = "delta_t"
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.effect_time_mode not in ("delta_t", "direct"):
            raise ValueError("effect_time_mode must be 'delta_t' or 'direct'")
        if self.effect_time_mode == "delta_t" and self.effect_time.family not in (
                "exponential", "half_normal", "half_student_t", "gamma", "log_normal", "inv_gamma", "fixed"):
            raise ValueError("a delta_t prior must have non-negative support")
        if self.effect_time_mode == "direct" and self.effect_time.family not in (
                "uniform", "normal", "student_t", "fixed"):
            raise ValueError("a direct effect-time prior must be uniform, normal or student_t")
        if self.beta.family not in ("beta", "uniform", "fixed"):
            raise ValueError("heterogeneity prior must be a beta distribution")

    def group_prior(self, group: str, warp_scale: float = 1.0) -> Prior:
        if group == "warp_steepness":
            if self.warp is not None:
                return self.warp
            return log_normal(default_warp_mu(self.warp_window) + math.log(warp_scale), 0.3)
        if group in ("phi", "gamma"):
            return self.dispersion
        if group in ("delta_t", "effect_time"):
            return self.effect_time
        return getattr(self, group)

    def prior_for(self, name: str, warp_scale: float = 1.0) -> Prior:
        if name in self.overrides:
            return self.overrides[name]
        return self.group_prior(name.split("[")[0], warp_scale)

    def to_dict(self) -> dict:
        d = {
            "alpha": self.alpha.to_dict(),
            "lengthscale": self.lengthscale.to_dict(),
            "warp": None if self.warp is None else self.warp.to_dict(),
            "warp_window": self.warp_window,
            "sigma": self.sigma.to_dict(),
            "dispersion": self.dispersion.to_dict(),
            "beta": self.beta.to_dict(),
            "effect_time": {**self.effect_time.to_dict(), "mode": self.effect_time_mode},
        }
        d.update({k: v.to_dict() for k, v in self.overrides.items()})
        return d

    @classmethod
    def from_dict(cls, d: Mapping | None) -> "PriorSpec":
        """Build from a JSON-style mapping; unspecified groups keep defaults."""
        if d is None:
            return cls()
        kw = {}
        overrides = {}
        for key, val in d.items():
            if key == "warp_window":
                kw["warp_window"] = float(val)
            elif key == "effect_time":
                val = dict(val)
                kw["effect_time_mode"] = val.pop("mode", "delta_t")
                kw["effect_time"] = Prior.from_dict(val)
            elif key in ("alpha", "lengthscale", "warp", "sigma", "dispersion", "beta"):
                kw[key] = None if val is None else Prior.from_dict(val)
            elif key in ("phi", "gamma"):
                kw["dispersion"] = Prior.from_dict(val)
            elif "[" in key or key in ("warp_steepness",):
                overrides[key] = Prior.from_dict(val)
            else:
                raise ValueError(f"unknown prior key '{key}'")
        return cls(overrides=overrides, **kw)

    @classmethod
    def load(cls, source) -> "PriorSpec":
        """From a dict, JSON text or a JSON file path."""
        if source is None or isinstance(source, Mapping):
            return cls.from_dict(source)
        text = str(source)
        if not text.lstrip().startswith("{"):
            text = Path(source).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))


def transform_for(name: str, spec: PriorSpec, prior: Prior | None = None) -> Transform:
    """Unconstraining transform of a named parameter."""
    group = name.split("[")[0]
    if group == "beta":
        return LOGIT
    if group == "effect_time":
        prior = prior or spec.prior_for(name)
        if prior.family == "uniform":
            lo, hi = prior.params
            return Transform("interval", lo, hi)
        return IDENTITY
    return LOG


def log_prior(values: Mapping[str, float], spec: PriorSpec, jacobian: bool = True,
              warp_scale: float = 1.0) -> float:
    """Joint log prior density of named constrained parameter values.

    With ``jacobian=True`` the log-Jacobian of the unconstraining transforms
    is added, giving the density of the unconstrained parameters.
    """
    total = 0.0
    for name, x in values.items():
        prior = spec.prior_for(name, warp_scale)
        if prior.is_fixed:
            continue
        total += prior.logpdf(x)
        if jacobian:
            t = transform_for(name, spec, prior)
            total += t.forward(t.inverse(x))[2]
    return float(total)


def sample_prior_predictive(model, draws: int, seed: int, include_latent: bool = False):
    """Response draws from the prior predictive distribution of a bound model.

    Each draw samples the free parameters from their priors, every component
    from its GP prior and finally the response from the likelihood.  Draws
    use independent random streams spawned from ``seed``.

    Returns an array of shape ``(draws, N)`` on the raw response scale (and
    the latent component draws of shape ``(draws, J, N)`` when
    ``include_latent``).
    """
    from .likelihoods import sample_response

    if draws < 1:
        raise ValueError("draws must be >= 1")
    streams = np.random.SeedSequence(seed).spawn(draws)
    out = np.empty((draws, model.num_rows))
    latent = np.empty((draws, model.num_components, model.num_rows))
    for s, ss in enumerate(streams):
        rng = np.random.default_rng(ss)
        theta = np.array([model.prior(name).sample(rng) for name in model.names], dtype=float)
        pv = model.param_vector(theta)
        f = model.sample_components(pv, rng)
        latent[s] = f
        h = model.offsets + f.sum(axis=0)
        y = sample_response(h, model.family, pv.obs, model.trials, rng)
        out[s] = model.response_to_raw(y)
    return (out, latent) if include_latent else out
