"""
Inference from final outcomes only
==================================

When only who was ever infected is known, households are treated as
independent given the observed attack rates in their village and in the
whole population (a pseudolikelihood). Parameters are p_H and the escape
probabilities pi_G and pi_C.
"""

from threelevel import ChainConfig, VillageFinalSize, pseudo_mle_ex1, run_finalsize_chain, summarize
from threelevel.datasets import DATASET_1_1, DATASET_1_2
from threelevel.mcmc import rstar_village

for name, counts in [("1.1", DATASET_1_1), ("1.2", DATASET_1_2)]:
    data = VillageFinalSize(counts)
    fit = pseudo_mle_ex1(data)
    print(f"dataset {name}: MLE {fit.params.as_array().round(3)}, boundary {fit.boundary}")

# %%
# Posterior under uniform priors with uniform independence proposals.
# In dataset 1.2 pi_G and pi_C lie on a ridge, so several chains are run
# side by side (each chain is reproducible on its own).
for name, counts, chains in [("1.1", DATASET_1_1, 1), ("1.2", DATASET_1_2, 8)]:
    chain = run_finalsize_chain(VillageFinalSize(counts),
                                ChainConfig(iterations=40_000, burn_in=4_000, chains=chains, seed=2))
    s = summarize(chain, rstar=rstar_village)
    print(f"dataset {name}:")
    for p in s.names:
        print(f"  {p:7s} mean {s[p]['mean']:.3f}  sd {s[p]['sd']:.4f}  ess {s.ess[s.names.index(p)]:.0f}")
    print(f"  corr(p_H, pi_G) {s.correlation('p_H', 'pi_G'):.2f}, "
          f"corr(pi_G, pi_C) {s.correlation('pi_G', 'pi_C'):.2f}")
