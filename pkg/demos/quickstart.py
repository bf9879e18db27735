"""
Relevance of covariates in simulated longitudinal data
=======================================================

Simulate 12 individuals with six covariates (id, age and sex affect the
response, loc, x1 and x2 do not), fit an additive GP and rank the
covariates by relevance.
"""

import warnings

from lgp import SimConfig, component_relevances, covariate_report, generate, parse_formula, sample_posterior
from lgp.inference import SamplerConfig

warnings.simplefilter("ignore")

sim = generate(SimConfig(num_individuals=12, num_timepoints=12, p_noise=0.4, seed=3))
print(sim.dataset.num_rows, "rows; relevant:", [k for k, v in sim.truth["relevant"].items() if v])

spec = parse_formula("y ~ gp(age) + zs(id)*gp(age) + zs(sex)*gp(age) + zs(loc)*gp(age) + gp(x1) + gp(x2)")
fit = sample_posterior(sim.dataset, spec, config=SamplerConfig(chains=2, warmup=150, iters=100, seed=3))
print("status:", fit.status, "worst R-hat: %.3f" % fit.diagnostics.worst_rhat)

report = component_relevances(fit)
print("noise proportion: %.3f" % report.p_noise)
for row in covariate_report(report, spec):
    print("  %-4s %.3f" % (row["covariate"], row["relevance"]))
print("selected components (T = 95%):", [spec.components[j - 1].term() for j in report.selected])
