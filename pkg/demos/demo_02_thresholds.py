"""
Household final sizes and the threshold parameter R*
====================================================

R* is the mean number of households a typical infected household
infects. An epidemic can take off only when R* > 1.
"""

import math

from threelevel import (household_final_size, mean_final_size, offspring_matrix_example2,
                        rstar_eigen, rstar_example1)

p_H = 1 - math.exp(-0.3)   # infection probability within the household

# final number infected among 3 susceptibles, one initial case
print("P(k more infected):", household_final_size(3, 1, p_H).round(4))
mu3 = mean_final_size(3, 1, p_H)
print(f"mean: {mu3:.5f}")

# %%
# Villages of two-person households: closed form
for lam_C, lam_G in [(0.001, 1.4), (0.6, 0.6)]:
    print(f"lambda_C={lam_C}, lambda_G={lam_G}: R* = {rstar_example1(lam_C, lam_G, 1.0, p_H):.4f}")

# %%
# Schools and workplaces: households are typed by the member who brought
# the infection home (child or adult), giving a 2x2 offspring matrix
for lam_C in (0.05, 0.005):
    M = offspring_matrix_example2(lam_C, 1.2, 0.6, 1.0, mu3)
    print(M.round(4), f"R* = {rstar_eigen(M):.4f}")
