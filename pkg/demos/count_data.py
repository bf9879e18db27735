"""
Negative binomial counts
========================

Low counts with strong overdispersion: compare covariate relevances from a
negative binomial model with a Gaussian model of log(1 + y).
"""

import warnings

from lgp import SimConfig, component_relevances, covariate_report, generate, parse_formula, sample_posterior
from lgp.inference import SamplerConfig
from lgp.likelihoods import transform_log1p

warnings.simplefilter("ignore")

sim = generate(SimConfig(num_individuals=10, num_timepoints=8, family="nb", nb_dispersion=1.0,
                         nb_log_mean=1.0, seed=5))
ds = sim.dataset
print("mean count %.2f, max %d" % (ds.response.mean(), ds.response.max()))

formula = "y ~ gp(age) + zs(id)*gp(age) + zs(sex)*gp(age) + zs(loc)*gp(age) + gp(x1) + gp(x2)"
config = SamplerConfig(chains=2, warmup=150, iters=100, seed=5)
for name, family, data in (("nb", "nb", ds), ("log1p", "gaussian", ds.with_response(transform_log1p(ds.response)))):
    spec = parse_formula(formula, family)
    fit = sample_posterior(data, spec, config=config)
    rows = covariate_report(component_relevances(fit), spec)
    print(name, {r["covariate"]: round(r["relevance"], 3) for r in rows})
print("truth:", sim.truth["relevant"])
