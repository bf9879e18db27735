"""Posterior computation: closed-form Gaussian quantities, NUTS sampling and diagnostics."""

from .diagnostics import DiagnosticsReport, ess, ess_bulk, ess_tail, mcse_mean, rhat, summarize
from .gaussian import component_posterior_gaussian, grad_log_marginal_gaussian, log_marginal_gaussian
from .nuts import NutsChain, NutsSettings, SamplerError
from .sampling import ConvergenceWarning, PosteriorFit, SamplerConfig, sample_model, sample_posterior


def diagnostics(fit: PosteriorFit, **thresholds) -> DiagnosticsReport:
    """Recompute the diagnostics report of a fit, optionally with other thresholds."""
    kw = {
        "rhat_max": fit.config.rhat_max,
        "min_ess_per_chain": fit.config.min_ess_per_chain,
        "max_divergence_rate": fit.config.max_divergence_rate,
    }
    kw.update(thresholds)
    draws = {n: fit.draws[..., i] for i, n in enumerate(fit.names)}
    return summarize(draws, fit.sampler["divergent"], **kw)


__all__ = [
    "ConvergenceWarning", "DiagnosticsReport", "NutsChain", "NutsSettings", "PosteriorFit",
    "SamplerConfig", "SamplerError", "component_posterior_gaussian", "diagnostics", "ess",
    "ess_bulk", "ess_tail", "grad_log_marginal_gaussian", "log_marginal_gaussian", "mcse_mean",
    "rhat", "sample_model", "sample_posterior", "summarize",
]
