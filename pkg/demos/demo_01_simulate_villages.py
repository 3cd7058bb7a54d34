"""
Simulating an outbreak in four villages
=======================================

Four villages of 500 two-person households. Transmission happens within
households, within villages and, rarely, across the whole population.
"""

import numpy as np

from threelevel import (EpidemicParams, InitialCondition, PeriodDistribution, build_villages,
                        final_size, simulate)
from threelevel.pseudolik import VillageFinalSize

pop = build_villages(m=4, households_per_village=500, household_size=2)
print(pop.N, "individuals in", pop.n_households, "households")

# rates per unit time; latent and infectious periods both last one unit
params = EpidemicParams(lambda_H=0.3, lambda_G=(1.4,), lambda_C=0.001)
init = InitialCondition(initially_infective=[0])

# a few replicates from one seed: minor and major outbreaks both occur
for r in range(5):
    log = simulate(pop, params, init, seed=1, replicate=r)
    print(f"replicate {r}: {len(log)} infected, over after t = {log.t_obs:.1f}")

# %%
# The event log of a major outbreak, and the epidemic curve it implies
log = next(l for l in (simulate(pop, params, init, seed=1, replicate=r) for r in range(50)) if len(l) > 200)
t = np.linspace(0, log.t_obs, 11)
for ti, (S, E, I, R) in zip(t, log.compartment_counts(t, pop.N)):
    print(f"t={ti:5.1f}  S={S:5d} E={E:4d} I={I:4d} R={R:4d}")

# %%
# Final-size summary per village: households with 0, 1 and 2 cases
print(VillageFinalSize.from_final_size(final_size(log, pop)).counts)

# %%
# Exponential infectious periods change the final size law, latent periods do not
params_exp = EpidemicParams(0.3, (1.4,), 0.001, infectious=PeriodDistribution.exponential(1.0))
print(len(simulate(pop, params_exp, init, seed=1, replicate=0)), "infected with exponential periods")
