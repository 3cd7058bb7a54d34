"""
Estimating contact rates from a fully observed outbreak
=======================================================

With every infection time and period duration known, the likelihood of
the three contact rates is explicit. We find its maximum and then sample
the posterior under exponential(1) priors.
"""

from threelevel import (ChainConfig, CompleteDataLikelihood, EpidemicParams, InitialCondition,
                        build_villages, mle, run_complete_chain, simulate, summarize)

pop = build_villages(4, 500, 2)
truth = EpidemicParams(0.3, (0.6,), 0.6)
log = next(l for r in range(20)
           if len(l := simulate(pop, truth, InitialCondition(initially_infective=[0]), seed=7, replicate=r)) > 200)
print(len(log), "infected")

lik = CompleteDataLikelihood(log, pop)
fit = mle(log, pop, likelihood=lik)
for name, rate, se in zip(fit.names, fit.rates, fit.standard_errors):
    print(f"{name:9s} {rate:.4f} +- {se:.4f}")

# %%
# Random-walk Metropolis, one component at a time, step sizes tuned during burn-in
chain = run_complete_chain(lik, ChainConfig(iterations=20_000, burn_in=2_000, thin=5, seed=1))
post = summarize(chain)
for name in chain.names:
    print(name, {k: round(v, 4) for k, v in post[name].items()})
print("acceptance rates:", chain.acceptance.round(2))
