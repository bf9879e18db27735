"""No-U-turn Hamiltonian Monte Carlo with multinomial trajectory sampling.

Trajectories are doubled in random directions until a generalized U-turn
criterion fires (also checked across the joins of sub-trees) or the maximum
tree depth is reached.  States are drawn from each trajectory with weights
proportional to ``exp(-H)``; the top level uses the biased progressive
scheme that favours the newest sub-tree.

Warmup adapts the step size by dual averaging and a diagonal inverse mass
matrix in doubling windows (fast / slow / fast).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    """Sampling could not start or continue."""


@dataclass
class NutsSettings:
    max_depth: int = 10
    max_delta_h: float = 1000.0
    target_accept: float = 0.8
    init_radius: float = 2.0
    init_stepsize: float = 1.0
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75
    init_buffer: int = 75
    term_buffer: int = 50
    base_window: int = 25


@dataclass
class ChainResult:
    """Unconstrained draws and per-iteration sampler statistics of one chain."""

    draws: np.ndarray
    lp: np.ndarray
    accept_stat: np.ndarray
    treedepth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    energy: np.ndarray
    stepsize: float
    inv_metric: np.ndarray
    warmup_divergences: int = 0
    stats: dict = field(default_factory=dict)


class _State:
    __slots__ = ("q", "p", "lp", "grad")

    def __init__(self, q, p, lp, grad):
        self.q, self.p, self.lp, self.grad = q, p, lp, grad


class _DualAveraging:
    def __init__(self, s: NutsSettings):
        self.s = s
        self.mu = 0.0
        self.restart()

    def restart(self):
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def learn(self, accept: float) -> float:
        s = self.s
        self.counter += 1
        accept = min(1.0, accept)
        eta = 1.0 / (self.counter + s.t0)
        self.s_bar = (1 - eta) * self.s_bar + eta * (s.target_accept - accept)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / s.gamma
        w = self.counter ** (-s.kappa)
        self.x_bar = (1 - w) * self.x_bar + w * x
        return math.exp(x)

    def final(self) -> float:
        return math.exp(self.x_bar)


class _Windows:
    """Schedule of the slow (metric) adaptation windows."""

    def __init__(self, num_warmup: int, s: NutsSettings):
        self.num_warmup = num_warmup
        init, term, base = s.init_buffer, s.term_buffer, s.base_window
        if num_warmup < 20:
            self.active = False
            init, term, base = num_warmup, 0, 0
        else:
            self.active = True
            if init + base + term > num_warmup:
                init = int(0.15 * num_warmup)
                term = int(0.1 * num_warmup)
                # keep doubling windows rather than one long window, so the
                # metric adapts early even in short warmups
                base = min(base, num_warmup - (init + term))
        self.init, self.term = init, term
        self.size = base
        self.counter = 0
        self.next = init + base - 1
        self.samples: list = []

    def _in_window(self):
        return self.init <= self.counter < self.num_warmup - self.term

    def update(self, q):
        """Record ``q``; return a new inverse metric at the end of a window."""
        if not self.active:
            self.counter += 1
            return None
        if self._in_window():
            self.samples.append(q)
        out = None
        if self.counter == self.next and self.counter != self.num_warmup:
            end = self.num_warmup - self.term - 1
            if self.next != end:
                self.size *= 2
                self.next = self.counter + self.size
                if self.next != end and self.next + 2 * self.size >= self.num_warmup - self.term:
                    self.next = end
            x = np.asarray(self.samples)
            n = len(x)
            var = x.var(axis=0, ddof=1) if n > 1 else np.ones(x.shape[1])
            out = (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            self.samples = []
        self.counter += 1
        return out


class NutsChain:
    """One NUTS chain over a differentiable log density.

    Parameters
    ----------
    logp_grad : callable
        ``u -> (log density, gradient)``; must return ``-inf`` for invalid points.
    dim : int
        Dimension of the unconstrained space.
    rng : numpy Generator
        Private random stream of the chain.
    """

    def __init__(self, logp_grad, dim: int, rng: np.random.Generator, settings: NutsSettings | None = None):
        self.f = logp_grad
        self.dim = dim
        self.rng = rng
        self.s = settings or NutsSettings()
        self.inv_metric = np.ones(dim)
        self.eps = self.s.init_stepsize
        self.n_grad = 0

    # -- primitives ----------------------------------------------------

    def _eval(self, q):
        self.n_grad += 1
        lp, g = self.f(q)
        if not np.isfinite(lp) or g is None or not np.all(np.isfinite(g)):
            return -np.inf, np.zeros(self.dim)
        return float(lp), g

    def _momentum(self):
        return self.rng.standard_normal(self.dim) / np.sqrt(self.inv_metric)

    def _h(self, z: _State) -> float:
        with np.errstate(over="ignore", invalid="ignore"):
            h = -z.lp + 0.5 * float(np.sum(self.inv_metric * z.p * z.p))
        return math.inf if math.isnan(h) else h

    def _leapfrog(self, z: _State, eps: float) -> _State:
        p = z.p + 0.5 * eps * z.grad
        q = z.q + eps * self.inv_metric * p
        lp, g = self._eval(q)
        return _State(q, p + 0.5 * eps * g, lp, g)

    @staticmethod
    def _criterion(ps_minus, ps_plus, rho):
        return float(ps_plus @ rho) > 0 and float(ps_minus @ rho) > 0

    # -- initialization ------------------------------------------------

    def initialize(self, u0=None, tries: int = 100) -> _State:
        for _ in range(tries):
            q = np.asarray(u0, dtype=float).copy() if u0 is not None else \
                self.rng.uniform(-self.s.init_radius, self.s.init_radius, self.dim)
            lp, g = self._eval(q)
            if np.isfinite(lp):
                return _State(q, np.zeros(self.dim), lp, g)
            if u0 is not None:
                break
        raise SamplerError("could not find an initial point with finite log density and gradient")

    def find_stepsize(self, z: _State):
        """Heuristic: double or halve the step until one leapfrog step crosses acceptance 0.8."""
        if not (0 < self.eps < 1e7):
            return
        target = math.log(0.8)

        def delta():
            z0 = _State(z.q, self._momentum(), z.lp, z.grad)
            h0 = self._h(z0)
            return h0 - self._h(self._leapfrog(z0, self.eps))

        direction = 1 if delta() > target else -1
        while True:
            d = delta()
            if direction == 1 and not d > target:
                break
            if direction == -1 and not d < target:
                break
            self.eps = self.eps * 2 if direction == 1 else self.eps * 0.5
            if self.eps > 1e7:
                raise SamplerError("step size search diverged; posterior may be improper")
            if self.eps == 0:
                raise SamplerError("step size collapsed to zero; no acceptable move found")

    # -- one transition -----------------------------------------------

    def _build(self, z, depth, sign, h0, acc):
        """Recursive tree build.  Returns (ok, z_end, proposal, logw, rho, p_beg, ps_beg, p_end, ps_end)."""
        if depth == 0:
            z = self._leapfrog(z, sign * self.eps)
            acc["n"] += 1
            h = self._h(z)
            if h - h0 > self.s.max_delta_h:
                acc["divergent"] = True
            w = h0 - h
            acc["metro"] += 1.0 if w > 0 else math.exp(w)
            ps = self.inv_metric * z.p
            return not acc["divergent"], z, z, w, z.p.copy(), z.p, ps, z.p, ps

        ok, z, prop, lw_i, rho_i, p_beg, ps_beg, p_iend, ps_iend = self._build(z, depth - 1, sign, h0, acc)
        if not ok:
            return False, z, prop, -math.inf, None, None, None, None, None
        ok, z, prop_f, lw_f, rho_f, p_fbeg, ps_fbeg, p_end, ps_end = self._build(z, depth - 1, sign, h0, acc)
        if not ok:
            return False, z, prop, -math.inf, None, None, None, None, None
        lw = np.logaddexp(lw_i, lw_f)
        if lw_f > lw or self.rng.uniform() < math.exp(lw_f - lw):
            prop = prop_f
        rho = rho_i + rho_f
        keep = (self._criterion(ps_beg, ps_end, rho)
                and self._criterion(ps_beg, ps_fbeg, rho_i + p_fbeg)
                and self._criterion(ps_iend, ps_end, rho_f + p_iend))
        return keep, z, prop, lw, rho, p_beg, ps_beg, p_end, ps_end

    def transition(self, z: _State):
        """One NUTS transition from ``z``; returns the new state and statistics."""
        z = _State(z.q, self._momentum(), z.lp, z.grad)
        h0 = self._h(z)
        z_fwd = z_bck = z
        p_ff = p_fb = p_bf = p_bb = z.p
        ps_ff = ps_fb = ps_bf = ps_bb = self.inv_metric * z.p
        rho = z.p.copy()
        log_w = 0.0
        sample = z
        acc = {"n": 0, "metro": 0.0, "divergent": False}
        depth = 0
        while depth < self.s.max_depth:
            if self.rng.uniform() > 0.5:
                rho_bck = rho
                p_bf, ps_bf = p_fb, ps_fb
                ok, z_fwd, prop, lw_sub, rho_fwd, p_fb, ps_fb, p_ff, ps_ff = self._build(z_fwd, depth, 1, h0, acc)
            else:
                rho_fwd = rho
                p_fb, ps_fb = p_bf, ps_bf
                ok, z_bck, prop, lw_sub, rho_bck, p_bf, ps_bf, p_bb, ps_bb = self._build(z_bck, depth, -1, h0, acc)
            if not ok:
                break
            depth += 1
            if lw_sub > log_w or self.rng.uniform() < math.exp(lw_sub - log_w):
                sample = prop
            log_w = np.logaddexp(log_w, lw_sub)
            rho = rho_bck + rho_fwd
            if not (self._criterion(ps_bb, ps_ff, rho)
                    and self._criterion(ps_bb, ps_fb, rho_bck + p_fb)
                    and self._criterion(ps_bf, ps_ff, rho_fwd + p_bf)):
                break
        n = max(acc["n"], 1)
        stats = {
            "accept_stat": acc["metro"] / n,
            "treedepth": depth,
            "n_leapfrog": acc["n"],
            "divergent": acc["divergent"],
            "energy": self._h(sample),
        }
        return _State(sample.q, sample.p, sample.lp, sample.grad), stats

    # -- full run --------------------------------------------------------

    def run(self, num_warmup: int, num_samples: int, u0=None, thin: int = 1) -> ChainResult:
        z = self.initialize(u0)
        self.find_stepsize(z)
        da = _DualAveraging(self.s)
        da.mu = math.log(10 * self.eps)
        windows = _Windows(num_warmup, self.s)
        warm_div = 0
        for _ in range(num_warmup):
            z, st = self.transition(z)
            warm_div += st["divergent"]
            self.eps = da.learn(st["accept_stat"])
            new_metric = windows.update(z.q)
            if new_metric is not None:
                self.inv_metric = new_metric
                self.find_stepsize(z)
                da.mu = math.log(10 * self.eps)
                da.restart()
        if num_warmup > 0:
            self.eps = da.final()
        keep = num_samples // thin
        draws = np.empty((keep, self.dim))
        cols = {k: np.empty(keep) for k in ("lp", "accept_stat", "treedepth", "n_leapfrog", "divergent", "energy")}
        k = 0
        for i in range(num_samples):
            z, st = self.transition(z)
            if (i + 1) % thin:
                continue
            if k >= keep:
                break
            draws[k] = z.q
            cols["lp"][k] = z.lp
            for name in ("accept_stat", "treedepth", "n_leapfrog", "divergent", "energy"):
                cols[name][k] = st[name]
            k += 1
        log.debug("chain done: stepsize %.3g, %d gradient evaluations", self.eps, self.n_grad)
        return ChainResult(
            draws=draws,
            lp=cols["lp"],
            accept_stat=cols["accept_stat"],
            treedepth=cols["treedepth"].astype(int),
            n_leapfrog=cols["n_leapfrog"].astype(int),
            divergent=cols["divergent"].astype(bool),
            energy=cols["energy"],
            stepsize=self.eps,
            inv_metric=self.inv_metric.copy(),
            warmup_divergences=int(warm_div),
            stats={"gradient_evaluations": self.n_grad},
        )


def run_chain(logp_grad, dim, seed_seq, num_warmup, num_samples, settings=None, u0=None) -> ChainResult:
    """Run one chain with a generator derived from ``seed_seq``."""
    rng = np.random.default_rng(seed_seq)
    return NutsChain(logp_grad, dim, rng, settings).run(num_warmup, num_samples, u0)


__all__ = ["NutsChain", "NutsSettings", "ChainResult", "SamplerError", "run_chain"]
