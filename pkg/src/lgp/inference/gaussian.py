"""Closed-form quantities of Gaussian-likelihood models.

These functions accept either a :class:`~lgp.model.BoundModel` or a
``(dataset, spec)`` pair.  When binding here the response is used as is
(no standardization) so results are on the raw response scale.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from ..model import BoundModel, ComponentPosterior, ParamVector, bind


def _bound(ds, spec, options) -> BoundModel:
    if isinstance(ds, BoundModel):
        return ds
    options.setdefault("standardize_response", False)
    priors = options.pop("priors", None)
    return bind(spec, ds, priors, **options)


def _params(model: BoundModel, params) -> ParamVector:
    if isinstance(params, ParamVector):
        return params
    if isinstance(params, Mapping):
        missing = [n for n in model.names if n not in params]
        if missing:
            raise ValueError(f"missing parameter values: {missing}")
        return model.param_vector(np.array([params[n] for n in model.names], dtype=float))
    return model.param_vector(np.asarray(params, dtype=float))


def log_marginal_gaussian(ds, spec=None, params=None, **options) -> float:
    """``log N(y | c, sum_j K_j + sigma^2 I)``.

    ``params`` is a ParamVector, a name -> value mapping or a vector of the
    free constrained values in layout order.
    """
    model = _bound(ds, spec, options)
    return model.log_marginal_gaussian(_params(model, params))


def grad_log_marginal_gaussian(ds, spec=None, params=None, **options) -> np.ndarray:
    """Gradient of :func:`log_marginal_gaussian` over the unconstrained free parameters."""
    model = _bound(ds, spec, options)
    return model.grad_log_marginal_gaussian(_params(model, params))


def component_posterior_gaussian(ds, spec=None, params=None, at=None, **options) -> ComponentPosterior:
    """Posterior mean and pointwise variance of every component.

    With ``at`` (a dataset sharing the covariate columns and id levels)
    the posterior is evaluated at those rows instead of the observed ones.
    """
    model = _bound(ds, spec, options)
    return model.component_posterior(_params(model, params), at=at)
