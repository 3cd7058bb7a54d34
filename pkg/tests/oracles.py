"""Independent reference implementations used by the tests.

Nothing here imports the package's numerical code; each oracle is a
separate route to the same quantity:

* exhaustive Reed-Frost chain-binomial enumeration of household final sizes;
* the Sellke threshold construction of the final size (exact in
  distribution when infectious periods are fixed);
* Monte Carlo households with independent external introductions;
* the village pseudolikelihood written out directly, and grid quadrature of
  the corresponding posterior;
* the complete-data log-likelihood summed over infective/susceptible pairs.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np


# ------------------------------------------------------------ Reed-Frost


def reed_frost_distribution(s: int, i: int, p: float) -> np.ndarray:
    """Final number infected among ``s`` susceptibles, ``i`` initial infectives.

    Generation by generation: each susceptible escapes all ``c`` current
    infectives with probability ``(1 - p)^c``; the number newly infected is
    binomial. All branches are enumerated exactly.
    """
    q = 1.0 - p

    @lru_cache(maxsize=None)
    def dist(sus, cur):
        out = np.zeros(s + 1)
        if cur == 0 or sus == 0:
            out[0] = 1.0
            return tuple(out)
        esc = q ** cur
        for k in range(sus + 1):
            pk = comb(sus, k) * (1 - esc) ** k * esc ** (sus - k)
            if pk == 0:
                continue
            rest = dist(sus - k, k)
            for extra, v in enumerate(rest):
                if v and k + extra <= s:
                    out[k + extra] += pk * v
        return tuple(out)

    return np.array(dist(s, i))


# ------------------------------------------------------------ Sellke


def sellke_final_size(household, group, group_rate, lam_H, lam_C, mu, initial, rng):
    """Ever-infected indicator from the Sellke construction.

    Parameters
    ----------
    household, group : int arrays
        Memberships; group 0 carries no group transmission.
    group_rate : float array
        Contact rate of each group id (index 0 must be 0).
    mu : float
        The fixed infectious period.

    Each susceptible gets an Exp(1) threshold; it is infected once the
    accumulated pressure from infectives, ``mu`` times the summed pairwise
    rates, reaches its threshold.
    """
    N = household.size
    n_g = np.bincount(group, minlength=group_rate.size).astype(float)
    per_member = np.divide(group_rate, n_g, out=np.zeros_like(group_rate), where=n_g > 0)
    Q = rng.exponential(size=N)
    infected = np.zeros(N, dtype=bool)
    infected[initial] = True
    Q[initial] = -1.0
    while True:
        h_count = np.bincount(household[infected], minlength=household.max() + 1)
        g_count = np.bincount(group[infected], minlength=group_rate.size)
        pressure = mu * (lam_H * h_count[household] + per_member[group] * g_count[group]
                         + lam_C * infected.sum() / N)
        new = ~infected & (pressure >= Q)
        if not new.any():
            return infected
        infected |= new


# ------------------------------------------------------------ households


def household_monte_carlo(p_H, psi_c, psi_f, psi_m, n, rng):
    """12-cell outcome counts of ``n`` two-child/two-adult households.

    Each member is infected from outside independently (children with
    probability ``1 - psi_c``, adults ``1 - psi_f``/``1 - psi_m``); spread
    within the household then follows Reed-Frost with per-pair probability
    ``p_H``. Cells are indexed ``4 i + 2 j + k``.
    """
    escape = np.array([psi_c, psi_c, psi_f, psi_m])
    infected = rng.random((n, 4)) >= escape
    current = infected.copy()
    while current.any():
        c = current.sum(axis=1, keepdims=True)
        hit = (rng.random((n, 4)) >= (1 - p_H) ** c) & ~infected
        infected |= hit
        current = hit
    cell = 4 * infected[:, :2].sum(axis=1) + 2 * infected[:, 2] + infected[:, 3]
    return np.bincount(cell, minlength=12)


# ------------------------------------------------------------ villages


def village_pseudologlik(counts, p, g, c):
    """Village pseudolikelihood from its definition; broadcasts over p, g, c."""
    counts = np.asarray(counts, dtype=float)
    sizes = 2 * counts.sum(axis=1)
    Z = counts[:, 1] + 2 * counts[:, 2]
    zbar = Z.sum() / sizes.sum()
    total = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for (n0, n1, n2), zj in zip(counts, Z / sizes):
            pij = c ** zbar * g ** zj
            cells = (pij ** 2, 2 * pij * (1 - pij) * (1 - p), 2 * pij * (1 - pij) * p + (1 - pij) ** 2)
            for n_k, prob in zip((n0, n1, n2), cells):
                if n_k:
                    total = total + n_k * np.log(prob)
    return np.where(np.isnan(total), -np.inf, total)


def village_grid_maximum(counts, step=0.005):
    """Maximum of the village pseudolikelihood over the grid ``{0, step, ..., 1}^3``."""
    axis = np.linspace(0, 1, int(round(1 / step)) + 1)
    G, C = np.meshgrid(axis, axis, indexing="ij")
    best, arg = -np.inf, None
    for p in axis:
        ll = village_pseudologlik(counts, p, G, C)
        k = np.argmax(ll)
        if ll.flat[k] > best:
            best, arg = ll.flat[k], (p, G.flat[k], C.flat[k])
    return best, arg


def village_posterior_moments(counts, box, n=121):
    """Posterior mean/sd of ``(p_H, pi_G, pi_C, R*)`` by quadrature on ``box``.

    ``box`` is ``((p_lo, p_hi), (g_lo, g_hi), (c_lo, c_hi))`` and must hold
    essentially all posterior mass under the uniform prior.
    """
    axes = [np.linspace(lo, hi, n) for lo, hi in box]
    P, G, C = np.meshgrid(*axes, indexing="ij")
    ll = village_pseudologlik(counts, P, G, C)
    w = np.exp(ll - ll.max())
    w /= w.sum()
    R = -(np.log(C) + np.log(G)) * (1 + P)
    out = {}
    for name, x in (("p_H", P), ("pi_G", G), ("pi_C", C), ("R_star", R)):
        m = float((w * x).sum())
        out[name] = (m, float(np.sqrt((w * (x - m) ** 2).sum())))
    return out


# ------------------------------------------------------------ complete data


def pairwise_loglik(ids, t_inf, lat, dur, is_initial, household, group, group_class, t_obs, rates):
    """Complete-data log-likelihood (without the susceptible-count constant).

    ``rates = (lambda_H, lambda_G per class..., lambda_C)`` with
    ``group_class[g]`` giving the rate class of group ``g`` (0 for none).
    Built directly from pairs: the hazard on each non-initial case is the
    sum over individuals infectious just before its infection time, and
    the integrated intensity is the overlap of every infectious interval
    with every other individual's susceptible time.
    """
    rates = np.asarray(rates, dtype=float)
    lam_H, lam_C = rates[0], rates[-1]
    class_rate = np.concatenate([[0.0], rates[1:-1]])
    N = household.size
    n_g = np.bincount(group, minlength=len(group_class))
    per_member = np.divide(class_rate[np.asarray(group_class)], n_g,
                           out=np.zeros(len(group_class)), where=n_g > 0)
    susceptible_until = np.full(N, float(t_obs))
    susceptible_until[ids] = np.minimum(t_inf, t_obs)
    onset = t_inf + lat
    removal = onset + dur
    loglik = 0.0
    for v, tv, init in zip(ids, t_inf, is_initial):
        if init or tv > t_obs:
            continue
        live = (onset < tv) & (removal >= tv) & (ids != v)
        u = ids[live]
        r = lam_C / N + lam_H * (household[u] == household[v])
        r = r + (group[u] == group[v]) * per_member[group[v]]
        loglik += np.log(r.sum())
    for u, a, b in zip(ids, onset, removal):
        a, b = min(a, t_obs), min(b, t_obs)
        exposure = np.clip(np.minimum(b, susceptible_until) - a, 0, None)
        exposure[u] = 0.0
        rate = lam_C / N + lam_H * (household == household[u]) + (group == group[u]) * per_member[group[u]]
        loglik -= float(exposure @ rate)
    return loglik
