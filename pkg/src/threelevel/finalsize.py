"""Final size of an isolated household epidemic.

With a fixed infectious period every infective-susceptible pair in a
household has the same chance ``p_H`` of transmission, so the household
final size follows the triangular system

    sum_{k=0}^{l} C(s-k, l-k) P(k) / q^{(k+i)(s-l)} = C(s, l),   l = 0..s,

with ``q = 1 - p_H``, ``s`` initial susceptibles and ``i`` initial
infectives.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb

import numpy as np

__all__ = [
    "household_final_size",
    "mean_final_size",
    "household_severity_mean",
    "HouseholdFinalSizeTable",
    "household_final_size_batch",
    "final_size_polynomials",
]


def _check_p(p_H):
    p_H = float(p_H)
    if not 0.0 <= p_H <= 1.0 or np.isnan(p_H):
        raise ValueError(f"p_H must lie in [0, 1], got {p_H}")
    return p_H


@lru_cache(maxsize=4096)
def _final_size(s: int, i: int, p_H: float) -> tuple:
    if s == 0:
        return (1.0,)
    if p_H == 0.0:
        return (1.0,) + (0.0,) * s
    q = 1.0 - p_H
    if q == 0.0:
        return (0.0,) * s + (1.0,)
    P = np.zeros(s + 1)
    logq = np.log(q)
    for l in range(s + 1):
        acc = float(comb(s, l))
        for k in range(l):
            acc -= comb(s - k, l - k) * P[k] * np.exp(-(k + i) * (s - l) * logq)
        P[l] = acc * np.exp((l + i) * (s - l) * logq)
    P[(P < 0) & (P > -1e-10)] = 0.0
    return tuple(P)


def household_final_size(s: int, i: int, p_H: float) -> np.ndarray:
    """Distribution of the number of the ``s`` susceptibles ever infected.

    Parameters
    ----------
    s : int
        Initially susceptible household members, ``s >= 0``.
    i : int
        Initial infectives, ``i >= 1``.
    p_H : float
        Per-pair transmission probability within the household.

    Returns
    -------
    ndarray, shape (s + 1,)
        ``P[k]`` is the probability that exactly ``k`` susceptibles are
        infected.
    """
    if int(s) != s or s < 0:
        raise ValueError(f"s must be a non-negative integer, got {s}")
    if int(i) != i or i < 1:
        raise ValueError(f"i must be a positive integer, got {i}")
    return np.array(_final_size(int(s), int(i), _check_p(p_H)))


@lru_cache(maxsize=256)
def final_size_polynomials(s: int, i: int) -> np.ndarray:
    """Integer coefficients of ``P[k]`` as polynomials in ``q = 1 - p_H``.

    Multiplying the triangular system through by ``q^{(l+i)(s-l)}`` leaves
    only non-negative powers of ``q``:

        P[l] = C(s, l) q^{(l+i)(s-l)} - sum_{k<l} C(s-k, l-k) P[k] q^{(l-k)(s-l)},

    so every probability is a polynomial in ``q`` with integer
    coefficients. Row ``k`` of the result holds the coefficients of
    ``P[k]`` in increasing powers of ``q``.
    """
    if s < 0 or i < 1:
        raise ValueError("need s >= 0 and i >= 1")
    degree = (s + i) * s
    coef = np.zeros((s + 1, degree + 1), dtype=object)
    for l in range(s + 1):
        row = np.zeros(degree + 1, dtype=object)
        row[(l + i) * (s - l)] += comb(s, l)
        for k in range(l):
            shift = (l - k) * (s - l)
            row[shift:] -= comb(s - k, l - k) * coef[k, :degree + 1 - shift]
        coef[l] = row
    last = max((np.flatnonzero(coef[:, j] != 0).size > 0) * j for j in range(degree + 1))
    out = coef[:, :last + 1].astype(np.int64)
    out.setflags(write=False)
    return out


def household_final_size_batch(s: int, i: int, p_H) -> np.ndarray:
    """:func:`household_final_size` for an array of ``p_H`` values.

    Returns
    -------
    ndarray, shape (len(p_H), s + 1)
    """
    p = np.atleast_1d(np.asarray(p_H, dtype=float))
    if np.any(~((p >= 0) & (p <= 1))):
        raise ValueError("p_H must lie in [0, 1]")
    coef = final_size_polynomials(int(s), int(i))
    P = np.power.outer(1.0 - p, np.arange(coef.shape[1])) @ coef.T.astype(float)
    P[(P < 0) & (P > -1e-10)] = 0.0
    return P


def mean_final_size(s: int, i: int, p_H: float) -> float:
    """Mean number of initial susceptibles ever infected."""
    P = household_final_size(s, i, p_H)
    return float(np.dot(np.arange(P.size), P))


def household_severity_mean(h: int, p_H: float, mu: float) -> float:
    """Expected severity (summed infectious time) of a household outbreak.

    A household of size ``h`` with one initial infective has mean severity
    ``mu * (1 + mean_final_size(h - 1, 1, p_H))``.
    """
    if int(h) != h or h < 1:
        raise ValueError(f"household size must be a positive integer, got {h}")
    return mu * (1.0 + mean_final_size(h - 1, 1, p_H))


class HouseholdFinalSizeTable:
    """Lazily filled table of ``p_s^(i)(k)`` and means for one ``p_H``."""

    def __init__(self, p_H: float):
        self.p_H = _check_p(p_H)
        self._table = {}

    def __call__(self, s: int, i: int) -> np.ndarray:
        key = (s, i)
        if key not in self._table:
            P = household_final_size(s, i, self.p_H)
            P.setflags(write=False)
            self._table[key] = P
        return self._table[key]

    def prob(self, s: int, i: int, k: int) -> float:
        if not 0 <= k <= s:
            return 0.0
        return float(self(s, i)[k])

    def mean(self, s: int, i: int) -> float:
        P = self(s, i)
        return float(np.dot(np.arange(P.size), P))
