"""Convergence diagnostics for multi-chain MCMC output.

Implements rank-normalized split potential scale reduction (the maximum of
the bulk and folded versions), bulk and tail effective sample sizes from
Geyer's initial monotone sequence estimator, and Monte Carlo standard
errors.  Inputs are arrays of shape ``(chains, draws)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

log = logging.getLogger(__name__)

DEFAULT_RHAT_MAX = 1.05
DEFAULT_MIN_ESS_PER_CHAIN = 100
DEFAULT_MAX_DIVERGENT = 0.10


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected an array of shape (chains, draws)")
    return x


def split_chains(x) -> np.ndarray:
    """Split every chain into two halves (dropping the middle draw if odd)."""
    x = _as_chains(x)
    n = x.shape[1]
    half = n // 2
    return np.concatenate([x[:, :half], x[:, n - half:]], axis=0)


def rank_normalize(x) -> np.ndarray:
    """Normal scores of the pooled average ranks, ``Phi^-1((r - 3/8) / (S + 1/4))``."""
    x = _as_chains(x)
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((r - 0.375) / (x.size + 0.25))


def _rhat_basic(x) -> float:
    m, n = x.shape
    if n < 2:
        return math.nan
    w = np.mean(np.var(x, axis=1, ddof=1))
    b = n * np.var(np.mean(x, axis=1), ddof=1)
    if w == 0:
        return math.inf if b > 0 else math.nan
    var_plus = (n - 1) / n * w + b / n
    return float(math.sqrt(var_plus / w))


def rhat(x) -> float:
    """Rank-normalized split R-hat (max of bulk and tail versions).

    Needs at least two chains; returns nan for a single chain.  Chains that
    are each constant but differ from one another give ``inf``.
    """
    x = _as_chains(x)
    if x.shape[0] < 2:
        return math.nan
    if np.all(x == x.flat[0]):
        return math.nan
    s = split_chains(x)
    if np.all(np.ptp(s, axis=1) == 0):
        # no within-chain variation at all: non-mixing
        return math.inf
    bulk = _rhat_basic(rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat_basic(rank_normalize(folded))
    vals = [v for v in (bulk, tail) if not math.isnan(v)]
    return max(vals) if vals else math.nan


def _autocov(x) -> np.ndarray:
    """Biased autocovariance of every row, computed by FFT."""
    n = x.shape[1]
    size = 2 ** int(math.ceil(math.log2(2 * n)))
    c = x - x.mean(axis=1, keepdims=True)
    f = np.fft.rfft(c, size, axis=1)
    return np.fft.irfft(f * np.conj(f), size, axis=1)[:, :n] / n


def ess(x) -> float:
    """Effective sample size of the pooled chains (Geyer initial monotone sequence)."""
    x = _as_chains(x)
    m, n = x.shape
    if n < 4:
        return math.nan
    if np.all(x == x.flat[0]):
        return math.nan
    acov = _autocov(x)
    mean_var = np.mean(acov[:, 0]) * n / (n - 1)
    var_plus = mean_var * (n - 1) / n
    if m > 1:
        var_plus += np.var(np.mean(x, axis=1), ddof=1)
    if var_plus <= 0:
        return math.nan
    rho = np.zeros(n)
    rho[0] = 1.0
    even = 1.0
    odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[1] = odd
    t = 1
    while t < n - 3 and even + odd > 0:
        even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if even + odd >= 0:
            rho[t + 1] = even
            rho[t + 2] = odd
        t += 2
    max_t = t - 2
    if even > 0:
        rho[max_t + 1] = even
    # enforce monotonically decreasing pair sums
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = rho[t + 2] = (rho[t - 1] + rho[t]) / 2
        t += 2
    total = m * n
    tau = -1.0 + 2.0 * np.sum(rho[: max_t + 1]) + rho[max_t + 1]
    tau = max(tau, 1.0 / math.log10(total))
    return float(total / tau)


def ess_bulk(x) -> float:
    return ess(rank_normalize(split_chains(x)))


def ess_tail(x) -> float:
    """Minimum of the ESS of the 5% and 95% quantile indicators."""
    s = split_chains(x)
    q05, q95 = np.quantile(s, [0.05, 0.95])
    vals = [ess(rank_normalize((s <= q).astype(float))) for q in (q05, q95)]
    vals = [v for v in vals if not math.isnan(v)]
    return min(vals) if vals else math.nan


def ess_mean(x) -> float:
    return ess(split_chains(x))


def mcse_mean(x) -> float:
    x = _as_chains(x)
    e = ess_mean(x)
    if not e or math.isnan(e):
        return math.nan
    return float(np.std(x, ddof=1) / math.sqrt(e))


@dataclass
class ParameterSummary:
    name: str
    mean: float
    sd: float
    q5: float
    q50: float
    q95: float
    mcse_mean: float
    ess_bulk: float
    ess_tail: float
    rhat: float | None

    def to_dict(self) -> dict:
        return {k: _json_float(v) for k, v in self.__dict__.items()}


def _json_float(v):
    if isinstance(v, str) or v is None:
        return v
    v = float(v)
    if math.isnan(v):
        return None
    if math.isinf(v):
        return "inf"
    return v


@dataclass
class DiagnosticsReport:
    """Per-parameter summaries and the overall convergence verdict."""

    parameters: list
    chains: int
    draws_per_chain: int
    divergences: int
    divergence_rate: float
    rhat_max: float = DEFAULT_RHAT_MAX
    min_ess_per_chain: float = DEFAULT_MIN_ESS_PER_CHAIN
    max_divergence_rate: float = DEFAULT_MAX_DIVERGENT
    notices: list = field(default_factory=list)

    @property
    def worst_rhat(self) -> float | None:
        vals = [p.rhat for p in self.parameters if p.rhat is not None and not math.isnan(p.rhat)]
        return max(vals) if vals else None

    @property
    def min_ess(self) -> float | None:
        vals = [min(p.ess_bulk, p.ess_tail) for p in self.parameters
                if not (math.isnan(p.ess_bulk) or math.isnan(p.ess_tail))]
        return min(vals) if vals else None

    @property
    def rhat_ok(self) -> bool:
        w = self.worst_rhat
        return w is None or w <= self.rhat_max

    @property
    def ess_ok(self) -> bool:
        e = self.min_ess
        return e is None or e >= self.min_ess_per_chain * self.chains

    @property
    def divergences_ok(self) -> bool:
        return self.divergence_rate <= self.max_divergence_rate

    @property
    def converged(self) -> bool:
        """Sampler health: R-hat and divergence thresholds both satisfied."""
        return self.rhat_ok and self.divergences_ok

    @property
    def passed(self) -> bool:
        """Full gate: convergence plus the effective-sample-size floor."""
        return self.converged and self.ess_ok

    def to_dict(self) -> dict:
        return {
            "chains": self.chains,
            "draws_per_chain": self.draws_per_chain,
            "divergences": self.divergences,
            "divergence_rate": self.divergence_rate,
            "thresholds": {
                "rhat_max": self.rhat_max,
                "min_ess_per_chain": self.min_ess_per_chain,
                "max_divergence_rate": self.max_divergence_rate,
            },
            "worst_rhat": _json_float(self.worst_rhat),
            "min_ess": _json_float(self.min_ess),
            "converged": self.converged,
            "passed": self.passed,
            "notices": list(self.notices),
            "parameters": [p.to_dict() for p in self.parameters],
        }


def summarize(draws: dict, divergent=None, rhat_max: float = DEFAULT_RHAT_MAX,
              min_ess_per_chain: float = DEFAULT_MIN_ESS_PER_CHAIN,
              max_divergence_rate: float = DEFAULT_MAX_DIVERGENT) -> DiagnosticsReport:
    """Diagnose named draws.

    Parameters
    ----------
    draws : dict
        Name -> array of shape ``(chains, draws)``.
    divergent : array, optional
        Boolean divergence flags of shape ``(chains, draws)``.
    """
    notices = []
    chains = n = 0
    out = []
    for name, x in draws.items():
        x = _as_chains(x)
        chains, n = x.shape
        r = rhat(x) if chains >= 2 else None
        flat = x.ravel()
        q5, q50, q95 = np.quantile(flat, [0.05, 0.5, 0.95])
        out.append(ParameterSummary(
            name, float(flat.mean()), float(flat.std(ddof=1)) if flat.size > 1 else math.nan,
            float(q5), float(q50), float(q95), mcse_mean(x), ess_bulk(x), ess_tail(x), r,
        ))
    if chains == 1:
        notices.append("single chain: R-hat omitted")
        log.warning("single chain: R-hat omitted")
    ndiv = 0
    rate = 0.0
    if divergent is not None:
        d = np.asarray(divergent, dtype=bool)
        ndiv = int(d.sum())
        rate = ndiv / d.size if d.size else 0.0
    return DiagnosticsReport(out, chains, n, ndiv, rate, rhat_max, min_ess_per_chain,
                             max_divergence_rate, notices)
