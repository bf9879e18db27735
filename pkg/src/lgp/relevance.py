"""Variance-decomposition relevance of additive components and threshold selection.

For each posterior draw the explained-variance split is

    p_noise = RSS / (ESS + RSS),   rel_j = (1 - p_noise) * SS_j / sum_k SS_k

where ``RSS`` compares predictions with the data, ``ESS`` is the spread of
the predictions and ``SS_j`` the spread of component ``j`` (posterior mean
for Gaussian models, sampled values otherwise).  Reported values are the
averages over draws.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .formula import HETEROGENEOUS_VM, SHARED_EQ, WARPED_KINDS, ModelSpec


def sum_of_squares(v, axis=-1):
    v = np.asarray(v, dtype=float)
    return np.sum((v - v.mean(axis=axis, keepdims=True)) ** 2, axis=axis)


def noise_proportion(y, ypred) -> float:
    """``RSS / (ESS + RSS)`` of one vector of predictions.

    A constant response predicted exactly (``RSS = ESS = 0``) gives 0.
    """
    y = np.asarray(y, dtype=float)
    ypred = np.asarray(ypred, dtype=float)
    if y.shape != ypred.shape:
        raise ValueError("response and predictions differ in length")
    rss = float(np.sum((ypred - y) ** 2))
    ess = float(sum_of_squares(ypred))
    if rss + ess == 0:
        return 0.0
    return rss / (rss + ess)


def draw_relevances(y, components, ypred):
    """Relevances and noise proportion of a single draw.

    Parameters
    ----------
    y : (N,) response (``y / trials`` for binomial models)
    components : (J, N) component values of the draw
    ypred : (N,) predictions on the response scale

    Returns
    -------
    rel : (J,) array
    p_noise : float
    """
    p_noise = noise_proportion(y, ypred)
    ss = sum_of_squares(np.atleast_2d(components))
    total = float(ss.sum())
    if total == 0:
        return np.zeros(len(ss)), p_noise
    return (1.0 - p_noise) * ss / total, p_noise


@dataclass
class RelevanceReport:
    """Averaged relevances, noise proportion and the threshold selection."""

    rel: np.ndarray
    p_noise: float
    per_draw: np.ndarray
    threshold: float = 95.0
    selected: list = field(default_factory=list)
    terms: list = field(default_factory=list)
    covariate_map: dict = field(default_factory=dict)

    @property
    def num_components(self) -> int:
        return len(self.rel)

    def subset_relevance(self, components) -> float:
        """``rel`` of a set of 1-based component indices (additive)."""
        return float(sum(self.rel[j - 1] for j in components))

    def to_dict(self) -> dict:
        return {
            "p_noise": float(self.p_noise),
            "threshold": float(self.threshold),
            "selected": [int(j) for j in self.selected],
            "components": [
                {"index": j + 1, "term": self.terms[j] if j < len(self.terms) else None, "relevance": float(r)}
                for j, r in enumerate(self.rel)
            ],
            "covariates": [
                {"covariate": name, "components": comps, "relevance": float(self.subset_relevance(comps))}
                for name, comps in self.covariate_map.items()
            ],
            "per_draw": self.per_draw.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "RelevanceReport":
        comps = sorted(d["components"], key=lambda c: c["index"])
        return cls(
            rel=np.array([c["relevance"] for c in comps]),
            p_noise=float(d["p_noise"]),
            per_draw=np.asarray(d.get("per_draw", np.zeros((0, len(comps) + 1))), dtype=float),
            threshold=float(d.get("threshold", 95.0)),
            selected=list(d.get("selected", [])),
            terms=[c.get("term") for c in comps],
            covariate_map={c["covariate"]: list(c["components"]) for c in d.get("covariates", [])},
        )


def relevances_from_draws(y, components, predictions, threshold: float = 95.0) -> RelevanceReport:
    """Report from per-draw components ``(S, J, N)`` and predictions ``(S, N)``."""
    components = np.asarray(components, dtype=float)
    predictions = np.asarray(predictions, dtype=float)
    S, J = components.shape[:2]
    per_draw = np.empty((S, J + 1))
    for s in range(S):
        rel, pn = draw_relevances(y, components[s], predictions[s])
        per_draw[s, :J] = rel
        per_draw[s, J] = pn
    avg = per_draw.mean(axis=0)
    report = RelevanceReport(avg[:J], float(avg[J]), per_draw, threshold)
    report.selected = select(report, threshold)
    return report


def posterior_component_draws(fit):
    """Per-draw component values and response-scale predictions of a fit.

    Gaussian fits use the analytic posterior means given each draw's
    hyperparameters; latent fits use the sampled components.  Returns
    ``(components (S, J, N), predictions (S, N))`` on the model scale.
    """
    model = fit.model()
    if fit.latent is not None:
        comps = fit.latent_draws()
    else:
        comps = np.stack([model.component_posterior(pv, variances=False).mean for pv in fit.param_vectors()])
    preds = model.predictions(model.offsets + comps.sum(axis=1))
    return comps, preds


def component_relevances(fit, posteriors=None, threshold: float = 95.0) -> RelevanceReport:
    """Relevance report of a :class:`~lgp.inference.PosteriorFit`.

    ``posteriors`` may supply precomputed ``(components, predictions)``
    as returned by :func:`posterior_component_draws`.
    """
    model = fit.model()
    comps, preds = posteriors if posteriors is not None else posterior_component_draws(fit)
    report = relevances_from_draws(model.relevance_response(), comps, preds, threshold)
    report.terms = [c.term() for c in model.spec.components]
    report.covariate_map = covariate_map(model.spec)
    return report


def select(report, threshold: float = 95.0, p_noise: float | None = None) -> list:
    """Smallest set of components whose relevance plus ``p_noise`` reaches ``threshold`` percent.

    ``report`` is a :class:`RelevanceReport` or a relevance vector (then
    ``p_noise`` is required).  Components are added in order of decreasing
    relevance, ties going to the lower index; returns sorted 1-based indices.
    """
    if not 0 < threshold <= 100:
        raise ValueError("threshold must lie in (0, 100]")
    if isinstance(report, RelevanceReport):
        rel, p_noise = report.rel, report.p_noise
    else:
        if p_noise is None:
            raise ValueError("p_noise is required with a bare relevance vector")
        rel = np.asarray(report, dtype=float)
    target = threshold / 100.0
    order = sorted(range(len(rel)), key=lambda j: (-rel[j], j))
    total = p_noise
    chosen = []
    # small tolerance so that sums equal to the target up to rounding qualify
    for j in order:
        if total >= target - 1e-12:
            break
        chosen.append(j + 1)
        total += rel[j]
    return sorted(chosen)


def select_exhaustive(rel, p_noise: float, threshold: float = 95.0) -> list:
    """Brute-force minimal subset (for checking :func:`select`; exponential in J)."""
    rel = np.asarray(rel, dtype=float)
    target = threshold / 100.0
    for k in range(len(rel) + 1):
        best = None
        for subset in combinations(range(len(rel)), k):
            v = p_noise + rel[list(subset)].sum()
            if v >= target - 1e-12 and (best is None or v > best[0]):
                best = (v, subset)
        if best is not None:
            return [j + 1 for j in best[1]]
    return list(range(1, len(rel) + 1))


def covariate_map(spec: ModelSpec) -> dict:
    """Covariate name -> list of 1-based components carrying its relevance.

    Continuous covariates map to their shared component (or, lacking one,
    their warped disease components, then their interactions); categorical
    covariates map to the single term they appear in.  Rows follow the
    order of first appearance in the formula.
    """
    order = []
    for c in spec.components:
        for name in (c.categorical_covariate, c.continuous_covariate):
            if name is not None and name not in order:
                order.append(name)
    out = {}
    for name in order:
        cat = [c.index for c in spec.components if c.categorical_covariate == name and c.kind != HETEROGENEOUS_VM]
        if cat:
            out[name] = cat[:1]
            continue
        het = [c.index for c in spec.components if c.categorical_covariate == name]
        shared = [c.index for c in spec.components if c.continuous_covariate == name and c.kind == SHARED_EQ]
        warped = [c.index for c in spec.components if c.continuous_covariate == name and c.kind in WARPED_KINDS]
        inter = [c.index for c in spec.components if c.continuous_covariate == name]
        out[name] = shared or warped or het or inter
    return out


def covariate_report(report: RelevanceReport, spec: ModelSpec) -> list:
    """Covariate-level rows ``{covariate, components, relevance}``."""
    return [
        {"covariate": name, "components": comps, "relevance": report.subset_relevance(comps)}
        for name, comps in covariate_map(spec).items()
    ]
