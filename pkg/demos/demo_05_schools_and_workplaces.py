"""
Schools, workplaces and four-person households
==============================================

500 households of two children and two adults. Children attend one of 10
schools, adults one of 40 workplaces. The final outcome of each household
is recorded as (children, female, male) infected.
"""

from threelevel import (ChainConfig, EpidemicParams, HouseholdTriple, InitialCondition,
                        build_schools_workplaces, final_size, pseudo_mle_ex2, run_finalsize_chain,
                        simulate, summarize)
from threelevel.mcmc import rstar_school_workplace
from threelevel.pseudolik import household_prob_table_ex2

pop = build_schools_workplaces()
params = EpidemicParams(0.3, (1.2, 0.6), 0.05)   # schools, workplaces
log = next(l for r in range(20)
           if len(l := simulate(pop, params, InitialCondition(initially_infective=[0]), seed=3, replicate=r)) > 200)
data = HouseholdTriple.from_final_size(final_size(log, pop))
print(len(log), "infected; children/female/male totals", data.totals())

# %%
# Outcome probabilities of one household, indexed 4 i + 2 j + k
print(household_prob_table_ex2(0.26, 0.7, 0.7, 0.7).round(4))

# %%
fit = pseudo_mle_ex2(data)
print("pseudo-MLE (p_H, pi_G1, pi_G2, pi_C):", fit.params.as_array().round(3))

chain = run_finalsize_chain(data, ChainConfig(iterations=6_000, burn_in=1_000, thin=5, chains=2, seed=0))
s = summarize(chain, rstar=rstar_school_workplace)
print(dict(zip(s.names, s.mean.round(3).tolist())))
