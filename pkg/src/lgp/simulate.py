"""Synthetic longitudinal data with known relevant covariates.

Every individual is observed on a common age grid (months).  Each covariate
in the roster contributes one GP component drawn from the library's kernels
with its configured magnitude (zero when irrelevant):

* the time covariate ``age``: a shared squared-exponential effect;
* other continuous covariates (per-row values): a shared effect;
* categorical covariates (constant per individual): a zero-sum interaction
  with age, or a zero-sum offset;
* the disease effect of case individuals: a variance-masked GP of the true
  disease age (or a parametric bump), applied to ``num_affected`` cases.

The observed onset of a case lags the true effect time by a random shift,
and the ``diseaseAge`` column is computed from the observed onset.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .dataset import LongitudinalDataset, make_dataset
from .kernels import VM_H, k_eq, k_vm, k_zerosum, vm_mask
from .likelihoods import sample_response, ObservationParams
from .priors import default_warp_mu


@dataclass
class CovariateSpec:
    """One roster entry.  ``kind`` is ``continuous``, ``categorical`` or ``disease``."""

    name: str
    kind: str
    relevant: bool = True
    magnitude: float = 1.0
    num_categories: int = 2
    interaction: bool = True
    lengthscale: float = 1.0

    @property
    def alpha(self) -> float:
        return self.magnitude if self.relevant else 0.0


def default_roster() -> list:
    """Six covariates, three relevant (id, age, sex)."""
    return [
        CovariateSpec("id", "categorical", True, 1.0),
        CovariateSpec("age", "continuous", True, 1.0),
        CovariateSpec("sex", "categorical", True, 1.0, 2),
        CovariateSpec("loc", "categorical", False, 1.0, 3),
        CovariateSpec("x1", "continuous", False),
        CovariateSpec("x2", "continuous", False),
    ]


@dataclass
class SimConfig:
    num_individuals: int = 16
    num_timepoints: int = 8
    age_range: tuple = (12.0, 96.0)
    jitter: bool = False
    case_fraction: float = 0.5
    roster: list = field(default_factory=default_roster)
    noise: float | None = None
    p_noise: float = 0.5
    disease_shape: str = "gp"
    disease_lengthscale: float = 1.0
    bump_width: float = 12.0
    warp_window: float = 36.0
    num_affected: int | None = None
    shift: float = 0.0
    shift_distribution: str = "fixed"
    onset_range: tuple | None = None
    family: str = "gaussian"
    nb_dispersion: float = 1.0
    nb_log_mean: float = 1.0
    seed: int = 0

    def __post_init__(self):
        self.roster = [c if isinstance(c, CovariateSpec) else CovariateSpec(**c) for c in self.roster]
        self.age_range = tuple(self.age_range)
        if self.onset_range is not None:
            self.onset_range = tuple(self.onset_range)

    @property
    def num_cases(self) -> int:
        return int(round(self.case_fraction * self.num_individuals))

    def validate(self) -> "SimConfig":
        if self.num_individuals < 1 or self.num_timepoints < 1:
            raise ValueError("need at least one individual and one time point")
        if not 0 <= self.case_fraction <= 1:
            raise ValueError("case_fraction must lie in [0, 1]")
        names = [c.name for c in self.roster]
        if len(set(names)) != len(names):
            raise ValueError("duplicate covariate names in roster")
        for c in self.roster:
            if c.kind not in ("continuous", "categorical", "disease"):
                raise ValueError(f"unknown covariate kind '{c.kind}'")
            if c.magnitude < 0:
                raise ValueError("magnitudes must be non-negative")
        has_disease = any(c.kind == "disease" and c.alpha > 0 for c in self.roster)
        if has_disease and self.num_cases == 0:
            raise ValueError("a disease effect needs at least one case individual")
        if self.num_affected is not None and not 0 <= self.num_affected <= self.num_cases:
            raise ValueError("num_affected must lie between 0 and the number of cases")
        if self.family not in ("gaussian", "nb"):
            raise ValueError("family must be 'gaussian' or 'nb'")
        if self.disease_shape not in ("gp", "bump"):
            raise ValueError("disease_shape must be 'gp' or 'bump'")
        if self.shift_distribution not in ("fixed", "exponential", "uniform"):
            raise ValueError("shift_distribution must be fixed, exponential or uniform")
        if self.p_noise is not None and not 0 <= self.p_noise < 1:
            raise ValueError("p_noise must lie in [0, 1)")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "SimConfig":
        return cls(**dict(d))

    @classmethod
    def load(cls, path) -> "SimConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class SimResult:
    dataset: LongitudinalDataset
    truth: dict

    def save_truth(self, path) -> None:
        Path(path).write_text(json.dumps(self.truth, sort_keys=True, indent=1), encoding="utf-8")


def _draw_gp(K, alpha, rng):
    n = K.shape[0]
    L = np.linalg.cholesky(K + 1e-8 * np.eye(n))
    return alpha * (L @ rng.standard_normal(n))


def _zscore(v):
    sd = v.std()
    return (v - v.mean()) / sd if sd > 0 else v - v.mean()


def generate(config: SimConfig) -> SimResult:
    """Draw one synthetic dataset; identical configs give identical data."""
    cfg = config.validate()
    rng = np.random.default_rng(cfg.seed)
    n, T = cfg.num_individuals, cfg.num_timepoints
    lo, hi = cfg.age_range
    grid = np.linspace(lo, hi, T)
    ids = np.repeat(np.arange(1, n + 1), T)
    if cfg.jitter and T > 1:
        step = (hi - lo) / (T - 1)
        age = np.tile(grid, n) + rng.uniform(-0.25 * step, 0.25 * step, n * T)
    else:
        age = np.tile(grid, n)
    N = n * T
    age_z = _zscore(age)

    # cases, affected subset and onsets
    case_idx = np.sort(rng.choice(n, cfg.num_cases, replace=False))
    num_affected = cfg.num_cases if cfg.num_affected is None else cfg.num_affected
    affected_idx = np.sort(rng.choice(case_idx, num_affected, replace=False)) if num_affected else np.array([], int)
    o_lo, o_hi = cfg.onset_range or (lo + 0.3 * (hi - lo), lo + 0.7 * (hi - lo))
    t_obs = rng.uniform(o_lo, o_hi, len(case_idx))
    if cfg.shift_distribution == "fixed":
        shifts = np.full(len(case_idx), float(cfg.shift))
    elif cfg.shift_distribution == "exponential":
        shifts = rng.exponential(cfg.shift, len(case_idx)) if cfg.shift > 0 else np.zeros(len(case_idx))
    else:
        shifts = rng.uniform(0, cfg.shift, len(case_idx))
    t_eff = t_obs - shifts
    onset_obs = np.full(n, np.nan)
    onset_true = np.full(n, np.nan)
    onset_obs[case_idx] = t_obs
    onset_true[case_idx] = t_eff
    is_affected = np.zeros(n, bool)
    is_affected[affected_idx] = True

    columns = {"id": ids, "age": age}
    categorical = ["id"]
    maskable = []
    components = {}
    relevant = {}
    f = np.zeros(N)
    for cov in cfg.roster:
        relevant[cov.name] = bool(cov.relevant and cov.alpha > 0)
        if cov.kind == "continuous":
            if cov.name == "age":
                x = age_z
            else:
                raw = rng.normal(0.0, 1.0, N)
                columns[cov.name] = raw
                x = raw
            comp = _draw_gp(k_eq(x[:, None], x[None, :], cov.lengthscale), cov.alpha, rng) if cov.alpha else np.zeros(N)
        elif cov.kind == "categorical":
            if cov.name == "id":
                codes = ids - 1
                M = n
            else:
                M = cov.num_categories
                per_ind = np.arange(n) % M
                rng.shuffle(per_ind)
                codes = per_ind[ids - 1]
                columns[cov.name] = np.array([f"{cov.name}{c + 1}" for c in codes])
                categorical.append(cov.name)
            K = k_zerosum(codes[:, None], codes[None, :], M)
            if cov.interaction:
                K = K * k_eq(age_z[:, None], age_z[None, :], cov.lengthscale)
            comp = _draw_gp(K, cov.alpha, rng) if cov.alpha else np.zeros(N)
        else:
            dis_obs = age - onset_obs[ids - 1]
            columns[cov.name] = dis_obs
            maskable.append(cov.name)
            x_true = age - onset_true[ids - 1]
            on = is_affected[ids - 1]
            comp = np.zeros(N)
            if cov.alpha and on.any():
                a = np.exp(default_warp_mu(cfg.warp_window, VM_H))
                xs = x_true[on]
                if cfg.disease_shape == "gp":
                    K = k_vm(xs[:, None], xs[None, :], a, cfg.disease_lengthscale, VM_H)
                    comp[on] = _draw_gp(K, cov.alpha, rng)
                else:
                    comp[on] = cov.alpha * np.exp(-(xs / cfg.bump_width) ** 2) * vm_mask(xs, a, VM_H)
        components[cov.name] = comp
        f += comp

    obs = ObservationParams()
    if cfg.family == "gaussian":
        if cfg.noise is not None:
            sigma = float(cfg.noise)
        else:
            ss = float(np.sum((f - f.mean()) ** 2))
            sigma = float(np.sqrt(cfg.p_noise / (1 - cfg.p_noise) * ss / N)) if ss > 0 else 1.0
            sigma = sigma if sigma > 0 else 1.0
        obs.sigma = sigma
        y = sample_response(f, "gaussian", obs, None, rng)
        h = f
    else:
        obs.dispersion = cfg.nb_dispersion
        h = cfg.nb_log_mean + f
        y = sample_response(h, "nb", obs, None, rng)
        sigma = None
    columns["y"] = y
    ds = make_dataset(columns, categorical=categorical, response="y", maskable=maskable)

    id_levels = ds.column("id").levels
    truth = {
        "relevant": relevant,
        "cases": [str(id_levels[q]) for q in case_idx],
        "affected": {str(id_levels[q]): bool(is_affected[q]) for q in case_idx},
        "observed_onset": {str(id_levels[q]): float(onset_obs[q]) for q in case_idx},
        "effect_time": {str(id_levels[q]): float(onset_true[q]) for q in case_idx},
        "sigma": sigma,
        "family": cfg.family,
        "latent": h.tolist(),
        "components": {k: v.tolist() for k, v in components.items()},
        "config": cfg.to_dict(),
    }
    return SimResult(ds, truth)


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve: P(score of a positive > score of a negative), ties 1/2."""
    scores = np.asarray(scores, dtype=float).ravel()
    labels = np.asarray(labels).astype(bool).ravel()
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n1 = int(labels.sum())
    n0 = len(labels) - n1
    if n1 == 0 or n0 == 0:
        raise ValueError("ROC AUC needs both positive and negative labels")
    ranks = stats.rankdata(scores)
    return float((ranks[labels].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))
