"""Threshold parameter R* of the household-level branching process."""

from __future__ import annotations

import numpy as np

__all__ = [
    "rstar_example1",
    "rstar_from_transformed",
    "offspring_matrix_example2",
    "rstar_eigen",
]


def _nonneg(**kw):
    for k, v in kw.items():
        if not v >= 0:
            raise ValueError(f"{k} must be non-negative, got {v}")


def rstar_example1(lambda_C, lambda_G, mu, p_H):
    """R* for households of size two in villages with a common group rate."""
    _nonneg(lambda_C=lambda_C, lambda_G=lambda_G)
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not 0 <= p_H <= 1:
        raise ValueError(f"p_H must lie in [0, 1], got {p_H}")
    return (lambda_C + lambda_G) * mu * (1.0 + p_H)


def rstar_from_transformed(pi_C, pi_G, p_H):
    """R* for the village layout in escape-probability coordinates.

    Works elementwise on arrays, which is how posterior samples are mapped.
    """
    pi_C = np.asarray(pi_C, dtype=float)
    pi_G = np.asarray(pi_G, dtype=float)
    if np.any(pi_C <= 0) or np.any(pi_G <= 0) or np.any(pi_C > 1) or np.any(pi_G > 1):
        raise ValueError("escape probabilities must lie in (0, 1]")
    r = -(np.log(pi_C) + np.log(pi_G)) * (1.0 + np.asarray(p_H, dtype=float))
    return float(r) if r.ndim == 0 else r


def offspring_matrix_example2(lambda_C, lambda_G1, lambda_G2, mu, mu3):
    """Mean offspring matrix for the school/workplace layout.

    Type 1 households were entered through a child, type 2 through an adult.
    ``mu3`` is the mean number of the three remaining members infected
    within the household, see :func:`threelevel.finalsize.mean_final_size`.
    """
    _nonneg(lambda_C=lambda_C, lambda_G1=lambda_G1, lambda_G2=lambda_G2)
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu}")
    if not 0 <= mu3 <= 3:
        raise ValueError(f"mu3 must lie in [0, 3], got {mu3}")
    community = (1 + mu3) * mu * lambda_C / 2
    same = 1 + mu3 / 3
    other = 2 * mu3 / 3
    return np.array([
        [community + same * mu * lambda_G1, community + other * mu * lambda_G2],
        [community + other * mu * lambda_G1, community + same * mu * lambda_G2],
    ])


def rstar_eigen(M, rtol=1e-10, maxiter=100_000):
    """Perron root of a non-negative offspring matrix.

    Uses the closed form for 2x2 matrices and power iteration from the
    all-ones vector otherwise.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"offspring matrix must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)) or np.any(M < 0):
        raise ValueError("offspring matrix entries must be finite and non-negative")
    if M.shape == (1, 1):
        return float(M[0, 0])
    if M.shape == (2, 2):
        a, b, c, d = M.ravel()
        return float((a + d) / 2 + np.sqrt((a - d) ** 2 / 4 + b * c))
    return _power_iteration(M, rtol, maxiter)


def _power_iteration(M, rtol=1e-10, maxiter=100_000):
    # Shifting by the identity removes periodicity without moving the Perron vector.
    A = M + np.eye(M.shape[0])
    v = np.ones(M.shape[0]) / M.shape[0]
    lam = 0.0
    for _ in range(maxiter):
        w = A @ v
        s = w.sum()
        if s == 0:
            return 0.0
        new = s / v.sum()
        w /= s
        if abs(new - lam) <= rtol * abs(new):
            return float(new - 1.0)
        v, lam = w, new
    raise RuntimeError("power iteration did not converge")
