"""Posterior sampling driver and the serializable :class:`PosteriorFit`."""

from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..dataset import LongitudinalDataset, dataset_from_dict
from ..formula import ModelSpec, parse_formula
from ..model import BoundModel, bind
from ..priors import PriorSpec
from .diagnostics import DiagnosticsReport, summarize
from .nuts import ChainResult, NutsSettings, run_chain

log = logging.getLogger(__name__)

FIT_FORMAT = "lgp-fit/1"


class ConvergenceWarning(UserWarning):
    """The sampler did not pass the convergence checks."""


@dataclass
class SamplerConfig:
    chains: int = 4
    warmup: int = 1000
    iters: int = 1000
    seed: int = 1
    threads: int = 1
    prior_only: bool = False
    max_depth: int = 10
    target_accept: float = 0.8
    rhat_max: float = 1.05
    max_divergence_rate: float = 0.10
    min_ess_per_chain: float = 100

    def validate(self) -> "SamplerConfig":
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.iters < 1:
            raise ValueError("iters must be >= 1")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")
        if not 0 < self.target_accept < 1:
            raise ValueError("target_accept must lie in (0, 1)")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        return self

    def settings(self) -> NutsSettings:
        return NutsSettings(max_depth=self.max_depth, target_accept=self.target_accept)


class _Objective:
    """Picklable log-density callable handed to the chains."""

    def __init__(self, model: BoundModel, prior_only: bool):
        self.model = model
        self.prior_only = prior_only

    def __call__(self, u):
        return self.model.log_prob_grad(u, self.prior_only)


def _run(model, prior_only, seed_seq, warmup, iters, settings) -> ChainResult:
    return run_chain(_Objective(model, prior_only), model.dim, seed_seq, warmup, iters, settings)


@dataclass
class PosteriorFit:
    """Posterior draws of a bound model.

    ``draws`` holds the free parameters on the constrained scale, shape
    ``(chains, iters, P)`` with columns in ``names`` order.  ``latent`` holds
    the component values ``f_j`` of latent-path fits, shape
    ``(chains, iters, J, N)``.
    """

    names: list
    draws: np.ndarray
    latent: np.ndarray | None
    lp: np.ndarray
    sampler: dict
    diagnostics: DiagnosticsReport
    config: SamplerConfig
    model_info: dict
    dataset: LongitudinalDataset
    _model: BoundModel | None = field(default=None, repr=False, compare=False)

    @property
    def chains(self) -> int:
        return self.draws.shape[0]

    @property
    def num_draws(self) -> int:
        return self.draws.shape[0] * self.draws.shape[1]

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def converged(self) -> bool:
        return self.diagnostics.converged

    @property
    def status(self) -> str:
        return "ok" if self.converged else "non-converged"

    @property
    def family(self) -> str:
        return self.model_info["likelihood"]

    def flat(self) -> np.ndarray:
        """Draws as an ``(S, P)`` matrix (chain-major)."""
        return self.draws.reshape(-1, self.draws.shape[-1])

    def latent_draws(self) -> np.ndarray | None:
        """Latent component draws as ``(S, J, N)``."""
        if self.latent is None:
            return None
        return self.latent.reshape((-1,) + self.latent.shape[2:])

    def param(self, name: str) -> np.ndarray:
        """Draws of one parameter, shape ``(chains, iters)``."""
        return self.draws[..., self.names.index(name)]

    def model(self) -> BoundModel:
        """Rebuild (once) the bound model the fit was drawn from."""
        if self._model is None:
            info = self.model_info
            spec = parse_formula(info["formula"], info["likelihood"])
            self._model = bind(spec, self.dataset, PriorSpec.from_dict(info["priors"]), **info["bind_options"])
        return self._model

    def param_vectors(self):
        m = self.model()
        for theta in self.flat():
            yield m.param_vector(theta)

    # -- serialization ---------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "format": FIT_FORMAT,
            "status": self.status,
            "seed": self.config.seed,
            "config": asdict(self.config),
            "model": self.model_info,
            "names": list(self.names),
            "draws": {n: self.draws[..., i].tolist() for i, n in enumerate(self.names)},
            "lp": self.lp.tolist(),
            "sampler": self.sampler,
            "diagnostics": self.diagnostics.to_dict(),
            "dataset": self.dataset.to_dict(),
        }
        if self.latent is not None:
            d["latent_draws"] = self.latent.tolist()
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=False)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict) -> "PosteriorFit":
        if d.get("format") != FIT_FORMAT:
            raise ValueError("not a fit file (missing or unknown format tag)")
        names = list(d["names"])
        draws = np.stack([np.asarray(d["draws"][n], dtype=float) for n in names], axis=-1)
        latent = np.asarray(d["latent_draws"], dtype=float) if "latent_draws" in d else None
        config = SamplerConfig(**d["config"])
        sampler = d["sampler"]
        diag = summarize(
            {n: draws[..., i] for i, n in enumerate(names)},
            np.asarray(sampler["divergent"], dtype=bool),
            config.rhat_max, config.min_ess_per_chain, config.max_divergence_rate,
        )
        return cls(names, draws, latent, np.asarray(d["lp"], dtype=float), sampler, diag, config,
                   d["model"], dataset_from_dict(d["dataset"]))

    @classmethod
    def load(cls, path) -> "PosteriorFit":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def sample_model(model: BoundModel, config: SamplerConfig | None = None, bind_options: dict | None = None) -> PosteriorFit:
    """Run NUTS on a bound model and collect a :class:`PosteriorFit`."""
    config = (config or SamplerConfig()).validate()
    streams = np.random.SeedSequence(config.seed).spawn(config.chains)
    settings = config.settings()
    args = [(model, config.prior_only, ss, config.warmup, config.iters, settings) for ss in streams]
    if config.threads > 1 and config.chains > 1:
        with ProcessPoolExecutor(max_workers=min(config.threads, config.chains)) as pool:
            results = list(pool.map(_run, *zip(*args)))
    else:
        results = [_run(*a) for a in args]

    P = model.num_params
    draws = np.stack([np.array([model.constrained_values(u) for u in r.draws]).reshape(len(r.draws), P)
                      for r in results])
    latent = None
    if model.latent:
        latent = np.stack([np.array([model.latent_components(u) for u in r.draws]) for r in results])
    divergent = np.stack([r.divergent for r in results])
    sampler = {
        "stepsize": [r.stepsize for r in results],
        "inv_metric": [r.inv_metric.tolist() for r in results],
        "divergent": divergent.astype(int).tolist(),
        "treedepth": [r.treedepth.tolist() for r in results],
        "accept_stat": [r.accept_stat.tolist() for r in results],
        "n_leapfrog": [r.n_leapfrog.tolist() for r in results],
        "warmup_divergences": [r.warmup_divergences for r in results],
    }
    diag = summarize({n: draws[..., i] for i, n in enumerate(model.names)}, divergent,
                     config.rhat_max, config.min_ess_per_chain, config.max_divergence_rate)
    opts = {
        "time_column": model.time_column,
        "standardize_response": model.response_transform != (0.0, 1.0),
        "latent": model.latent,
        "vm_h": model.vm_h,
    }
    if bind_options:
        opts.update(bind_options)
    info = {
        "formula": model.spec.formula(),
        "likelihood": model.family,
        "priors": model.priors.to_dict(),
        "bind_options": opts,
        "parameters": list(model.names),
        "fixed": {k: float(v) for k, v in model.fixed.items()},
        "cases": [str(c) for c in model.case_labels],
        "response_transform": [float(v) for v in model.response_transform],
        "prior_only": config.prior_only,
    }
    fit = PosteriorFit(list(model.names), draws, latent, np.stack([r.lp for r in results]), sampler, diag,
                       config, info, model.dataset, model)
    if not diag.converged:
        msg = (f"fit did not converge: worst R-hat {diag.worst_rhat}, "
               f"divergence rate {diag.divergence_rate:.3f}")
        log.warning(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return fit


def sample_posterior(ds: LongitudinalDataset, spec: ModelSpec, priors: PriorSpec | None = None,
                     config: SamplerConfig | None = None, **bind_options) -> PosteriorFit:
    """Bind ``spec`` to ``ds`` and sample the posterior.

    Gaussian models sample the hyperparameters with the components
    marginalized; other likelihoods sample components jointly in whitened
    form.  A fit failing the R-hat or divergence checks is returned with
    status ``non-converged`` and a :class:`ConvergenceWarning`.
    """
    model = bind(spec, ds, priors, **bind_options)
    return sample_model(model, config)
