"""Observation models linking the latent signal ``h = f + c`` to the response.

Links: identity (gaussian), log (poisson, nb), logit (binomial, betabinomial).
The negative binomial has mean ``mu`` and variance ``mu + mu**2 / phi``; the
beta-binomial mixes success probabilities from ``Beta(p gamma, (1 - p) gamma)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import digamma, expit, gammaln

FAMILIES = ("gaussian", "poisson", "nb", "binomial", "betabinomial")
COUNT_FAMILIES = ("poisson", "nb")
TRIAL_FAMILIES = ("binomial", "betabinomial")
LOG_SQRT_2PI = 0.5 * np.log(2 * np.pi)


@dataclass
class ObservationParams:
    sigma: float | None = None
    dispersion: float | None = None

    def validate(self, family: str) -> "ObservationParams":
        if family == "gaussian" and not (self.sigma is not None and self.sigma > 0):
            raise ValueError("gaussian likelihood needs sigma > 0")
        if family in ("nb", "betabinomial") and not (self.dispersion is not None and self.dispersion > 0):
            raise ValueError(f"{family} likelihood needs a positive dispersion")
        return self


def obs_param_name(family: str) -> str | None:
    """Name of the sampled observation parameter of ``family``, if any."""
    return {"gaussian": "sigma", "nb": "phi", "betabinomial": "gamma"}.get(family)


def _check(y, h, family, trials):
    if family not in FAMILIES:
        raise ValueError(f"unknown likelihood family '{family}'")
    y = np.asarray(y, dtype=float)
    h = np.asarray(h, dtype=float)
    if y.shape != h.shape:
        raise ValueError("response and latent vectors differ in length")
    if family in TRIAL_FAMILIES:
        if trials is None:
            raise ValueError(f"{family} likelihood requires trials")
        trials = np.asarray(trials, dtype=float)
        if trials.shape != y.shape:
            raise ValueError("trials length does not match the response")
        if np.any(y > trials):
            raise ValueError("response exceeds the number of trials")
    elif trials is not None:
        raise ValueError(f"{family} likelihood does not take trials")
    if family != "gaussian" and np.any(y < 0):
        raise ValueError(f"{family} likelihood needs a non-negative response")
    return y, h, trials


def inverse_link(h, family: str):
    h = np.asarray(h, dtype=float)
    if family == "gaussian":
        return h
    if family in COUNT_FAMILIES:
        return np.exp(h)
    if family in TRIAL_FAMILIES:
        return expit(h)
    raise ValueError(f"unknown likelihood family '{family}'")


def pointwise_log_likelihood(y, h, family, obs: ObservationParams | None = None, trials=None):
    y, h, trials = _check(y, h, family, trials)
    obs = obs or ObservationParams()
    if family == "gaussian":
        s = obs.sigma
        return -LOG_SQRT_2PI - np.log(s) - 0.5 * ((y - h) / s) ** 2
    if family == "poisson":
        return y * h - np.exp(h) - gammaln(y + 1)
    if family == "nb":
        phi = obs.dispersion
        log_denom = np.logaddexp(np.log(phi), h)
        return (
            gammaln(y + phi) - gammaln(phi) - gammaln(y + 1)
            + phi * (np.log(phi) - log_denom) + y * (h - log_denom)
        )
    log_choose = gammaln(trials + 1) - gammaln(y + 1) - gammaln(trials - y + 1)
    if family == "binomial":
        return log_choose + y * h - trials * np.logaddexp(0.0, h)
    g = obs.dispersion
    p = expit(h)
    a, b = p * g, (1 - p) * g
    return (
        log_choose + gammaln(y + a) + gammaln(trials - y + b) - gammaln(trials + g)
        - gammaln(a) - gammaln(b) + gammaln(g)
    )


def log_likelihood(y, h, family, obs: ObservationParams | None = None, trials=None) -> float:
    """Sum of pointwise log-likelihoods ``log p(y_i | g^-1(h_i))``."""
    return float(np.sum(pointwise_log_likelihood(y, h, family, obs, trials)))


def log_likelihood_grad(y, h, family, obs: ObservationParams | None = None, trials=None):
    """Gradient of :func:`log_likelihood` w.r.t. ``h`` and the observation parameter.

    Returns ``(dh, dobs)`` where ``dobs`` is the derivative w.r.t. sigma,
    phi or gamma (``None`` for families without one).
    """
    y, h, trials = _check(y, h, family, trials)
    obs = obs or ObservationParams()
    if family == "gaussian":
        s = obs.sigma
        r = y - h
        return r / s**2, float(np.sum(-1.0 / s + r * r / s**3))
    if family == "poisson":
        return y - np.exp(h), None
    if family == "nb":
        phi = obs.dispersion
        q = expit(h - np.log(phi))  # mu / (phi + mu)
        dh = y - (y + phi) * q
        dphi = np.sum(
            digamma(y + phi) - digamma(phi) + np.log1p(-q) + 1.0 - (y + phi) / phi * (1.0 - q)
        )
        return dh, float(dphi)
    if family == "binomial":
        return y - trials * expit(h), None
    g = obs.dispersion
    p = expit(h)
    a, b = p * g, (1 - p) * g
    da = digamma(y + a) - digamma(a)
    db = digamma(trials - y + b) - digamma(b)
    dh = g * p * (1 - p) * (da - db)
    dg = np.sum(p * da + (1 - p) * db - digamma(trials + g) + digamma(g))
    return dh, float(dg)


def sample_response(h, family, obs: ObservationParams | None, trials, rng: np.random.Generator):
    """Draw one response vector given the latent signal ``h``."""
    h = np.asarray(h, dtype=float)
    obs = obs or ObservationParams()
    if family == "gaussian":
        return h + obs.sigma * rng.standard_normal(h.shape)
    if family == "poisson":
        return rng.poisson(np.exp(h)).astype(float)
    if family == "nb":
        phi = obs.dispersion
        return rng.negative_binomial(phi, phi / (phi + np.exp(h))).astype(float)
    p = expit(h)
    if family == "betabinomial":
        g = obs.dispersion
        p = rng.beta(np.maximum(p * g, 1e-300), np.maximum((1 - p) * g, 1e-300))
    return rng.binomial(np.asarray(trials, dtype=int), p).astype(float)


def transform_log1p(y):
    """Elementwise ``log(1 + y)`` of a non-negative count vector."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("log(1 + y) transform needs non-negative counts")
    return np.log1p(y)
