"""Additive Gaussian process models for longitudinal data.

Typical use::

    from lgp import load_csv, parse_formula, sample_posterior, component_relevances

    ds = load_csv("data.csv", "schema.json")
    spec = parse_formula("y ~ gp(age) + zs(id)*gp(age) + zs(sex)*gp(age)")
    fit = sample_posterior(ds, spec)
    report = component_relevances(fit)
"""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.0.0"

from .dataset import DataError, LongitudinalDataset, load_csv, make_dataset, write_csv
from .formula import FormulaError, ModelSpec, parse_formula
from .inference import PosteriorFit, SamplerConfig, component_posterior_gaussian, diagnostics, sample_posterior
from .model import BoundModel, bind
from .priors import Prior, PriorSpec
from .relevance import RelevanceReport, component_relevances, covariate_report, noise_proportion, select
from .simulate import SimConfig, generate, roc_auc

__all__ = [
    "BoundModel", "DataError", "FormulaError", "LongitudinalDataset", "ModelSpec", "PosteriorFit",
    "Prior", "PriorSpec", "RelevanceReport", "SamplerConfig", "SimConfig", "bind",
    "component_posterior_gaussian", "component_relevances", "covariate_report", "diagnostics",
    "generate", "load_csv", "make_dataset", "noise_proportion", "parse_formula", "roc_auc",
    "sample_posterior", "select", "write_csv",
]
