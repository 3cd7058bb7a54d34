"""Final-size pseudolikelihoods that treat households as independent.

Parameters are the escape probabilities ``pi = exp(-lambda * mu)`` for
community and group transmission and the within-household transmission
probability ``p_H = 1 - exp(-lambda_H * mu)``. Group and community attack
proportions are data functionals; they are computed once from the data and
held fixed.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .finalsize import final_size_polynomials, household_final_size
from .population import PopulationStructure, household_roles
from .simulate import FinalSizeData

__all__ = [
    "TransformedParams",
    "VillageFinalSize",
    "HouseholdTriple",
    "VillagePseudoLikelihood",
    "HouseholdPseudoLikelihood",
    "PseudoMLEResult",
    "pseudo_loglik_ex1",
    "pseudo_mle_ex1",
    "household_prob_ex2",
    "household_prob_table_ex2",
    "pseudo_loglik_ex2",
    "pseudo_mle_ex2",
]


@dataclass(frozen=True)
class TransformedParams:
    """``p_H`` plus community and per-class group escape probabilities."""

    p_H: float
    pi_C: float
    pi_G: tuple

    def __post_init__(self):
        pi_G = tuple(float(x) for x in np.atleast_1d(self.pi_G))
        object.__setattr__(self, "pi_G", pi_G)
        if not 0 <= self.p_H <= 1:
            raise ValueError(f"p_H must lie in [0, 1], got {self.p_H}")
        for v in (self.pi_C, *pi_G):
            if not 0 < v <= 1:
                raise ValueError(f"escape probabilities must lie in (0, 1], got {v}")

    @classmethod
    def from_rates(cls, lambda_H, lambda_G, lambda_C, mu=1.0):
        lg = np.atleast_1d(np.asarray(lambda_G, dtype=float))
        return cls(1 - math.exp(-lambda_H * mu), math.exp(-lambda_C * mu),
                   tuple(np.exp(-lg * mu)))

    def to_rates(self, mu=1.0):
        """(lambda_H, lambda_G tuple, lambda_C) for infectious period ``mu``."""
        lam_H = -math.log1p(-self.p_H) / mu if self.p_H < 1 else math.inf
        return lam_H, tuple(-math.log(g) / mu for g in self.pi_G), -math.log(self.pi_C) / mu

    def as_array(self):
        """``(p_H, pi_G..., pi_C)``, the order used by optimisers and samplers."""
        return np.array([self.p_H, *self.pi_G, self.pi_C])

    @classmethod
    def from_array(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), float(x[-1]), tuple(x[1:-1]))


def _param_names(n_classes):
    if n_classes == 1:
        return ["p_H", "pi_G", "pi_C"]
    return ["p_H", *(f"pi_G{c}" for c in range(1, n_classes + 1)), "pi_C"]


@dataclass(frozen=True)
class VillageFinalSize:
    """Household final-size counts ``(n_0, n_1, n_2)`` for each village."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.array(self.counts, dtype=np.int64).reshape(-1, 3)
        if np.any(c < 0):
            raise ValueError("household counts must be non-negative")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def m(self):
        return self.counts.shape[0]

    @property
    def village_sizes(self):
        """Individuals per village (two per household)."""
        return 2 * self.counts.sum(axis=1)

    @property
    def Z(self):
        """Infected individuals per village."""
        return self.counts @ np.array([0, 1, 2])

    @property
    def N(self):
        return int(self.village_sizes.sum())

    @property
    def Z_bar_village(self):
        sizes = self.village_sizes
        return np.divide(self.Z, sizes, out=np.zeros(self.m), where=sizes > 0)

    @property
    def Z_bar(self):
        return float(self.Z.sum() / self.N) if self.N else 0.0

    @classmethod
    def from_final_size(cls, fs: FinalSizeData):
        """Summarise a village layout with households of size two."""
        pop = fs.pop
        if np.any(pop.household_sizes[1:] != 2):
            raise ValueError("the village summary needs households of size two")
        villages = pop.groups_of_kind("village")
        if not villages:
            raise ValueError("population has no village groups")
        hh_group = np.zeros(pop.n_households + 1, dtype=np.int64)
        hh_group[pop.household] = pop.group
        totals = fs.household_totals()
        counts = np.zeros((len(villages), 3), dtype=np.int64)
        index = {g: k for k, g in enumerate(villages)}
        for h in range(1, pop.n_households + 1):
            g = int(hh_group[h])
            if g not in index:
                raise ValueError(f"household {h} is not in a village")
            counts[index[g], totals[h]] += 1
        return cls(counts)


class VillagePseudoLikelihood:
    """Fast scalar evaluation of the village pseudolikelihood."""

    def __init__(self, data: VillageFinalSize):
        self.data = data
        self._rows = [
            (float(zj), int(n0), int(n1), int(n2))
            for zj, (n0, n1, n2) in zip(data.Z_bar_village, data.counts)
        ]
        self._zbar = data.Z_bar
        self._zj = data.Z_bar_village
        self._counts = data.counts.astype(float)
        self._observed = data.counts > 0
        self.names = _param_names(1)

    def __call__(self, p_H, pi_G, pi_C) -> float:
        zbar = self._zbar
        lc = _xlogy(zbar, pi_C)
        lg = math.log(pi_G) if pi_G > 0 else -math.inf
        total = 0.0
        for zj, n0, n1, n2 in self._rows:
            log_pi = lc + (zj * lg if zj > 0 else 0.0)
            pi = math.exp(log_pi)
            one = 1.0 - pi
            if n0:
                total += 2 * n0 * log_pi
            if n1:
                v = 2 * pi * one * (1 - p_H)
                if v <= 0:
                    return -math.inf
                total += n1 * math.log(v)
            if n2:
                v = 2 * pi * one * p_H + one * one
                if v <= 0:
                    return -math.inf
                total += n2 * math.log(v)
            if math.isnan(total):
                return -math.inf
        return total

    def from_array(self, x) -> float:
        return self(x[0], x[1], x[2])

    def batch(self, X) -> np.ndarray:
        """Log-pseudolikelihood of every row ``(p_H, pi_G, pi_C)`` of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        p, g, c = X[:, :1], X[:, 1:2], X[:, 2:3]
        zj = self._zj
        with np.errstate(divide="ignore", invalid="ignore"):
            lc = self._zbar * np.log(c) if self._zbar > 0 else 0.0
            log_pi = lc + np.where(zj > 0, zj * np.log(g), 0.0)
            pi = np.exp(log_pi)
            one = 1.0 - pi
            both = 2 * pi * one
            terms = np.empty(pi.shape + (3,))
            terms[..., 0] = 2 * log_pi
            terms[..., 1] = np.log(both * (1 - p))
            terms[..., 2] = np.log(both * p + one * one)
            terms[:, ~self._observed] = 0.0
        total = terms.reshape(X.shape[0], -1) @ self._counts.ravel()
        return np.where(np.isnan(total), -np.inf, total)


def _xlogy(x, y):
    if x == 0:
        return 0.0
    return x * math.log(y) if y > 0 else -math.inf


def pseudo_loglik_ex1(data: VillageFinalSize, theta: TransformedParams) -> float:
    """Village pseudo-log-likelihood; ``-inf`` if an observed cell is impossible."""
    if len(theta.pi_G) != 1:
        raise ValueError("the village layout has a single group rate")
    return VillagePseudoLikelihood(data)(theta.p_H, theta.pi_G[0], theta.pi_C)


@dataclass
class PseudoMLEResult:
    params: TransformedParams
    loglik: float
    boundary: dict
    starts: int
    grid_loglik: float
    names: list

    def to_dict(self):
        return {
            "params": dict(zip(self.names, map(float, self.params.as_array()))),
            "loglik": float(self.loglik),
            "boundary": self.boundary,
            "grid_loglik": float(self.grid_loglik),
        }


def _box_mle(objective, dim, names, grid_points=11, n_starts=8, seed=0):
    """Maximise ``objective`` over the unit box by multi-start L-BFGS-B.

    Starts are the best points of a coarse grid (which doubles as the
    verification oracle) plus the box centre.
    """
    lo = 1e-9
    bounds = [(0.0, 1.0 - lo)] + [(lo, 1.0)] * (dim - 1)

    def neg(x):
        x = np.clip(x, [b[0] for b in bounds], [b[1] for b in bounds])
        v = objective(x)
        return 1e100 if not np.isfinite(v) else -v

    axis = np.linspace(0.0, 1.0, grid_points)
    axis_p = np.clip(axis, 0.0, 1.0 - lo)
    axis_pi = np.clip(axis, lo, 1.0)
    grid = []
    for pt in itertools.product(axis_p, *([axis_pi] * (dim - 1))):
        grid.append((objective(np.array(pt)), pt))
    grid.sort(key=lambda v: -v[0] if np.isfinite(v[0]) else np.inf)
    grid_best = grid[0][0]
    starts = [np.array(pt) for _, pt in grid[: n_starts - 1]] + [np.full(dim, 0.5)]

    best_x, best_f = None, -np.inf
    for x0 in starts:
        x0 = np.clip(x0, [b[0] for b in bounds], [b[1] for b in bounds])
        res = optimize.minimize(neg, x0, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 2000})
        f = -res.fun
        if f > best_f:
            best_x, best_f = np.clip(res.x, [b[0] for b in bounds], [b[1] for b in bounds]), f
    if best_f < grid_best - 1e-6:
        raise ArithmeticError("pseudo-MLE search did not reach the grid maximum")
    boundary = {}
    for k, name in enumerate(names):
        b = bounds[k]
        boundary[name] = bool(best_x[k] - b[0] < 1e-6 or b[1] - best_x[k] < 1e-6)
    return best_x, best_f, boundary, len(starts), grid_best


def pseudo_mle_ex1(data: VillageFinalSize, grid_points=21) -> PseudoMLEResult:
    """Maximiser of the village pseudolikelihood over ``[0, 1]^3``."""
    if data.N == 0:
        raise ValueError("no households in the data")
    f = VillagePseudoLikelihood(data)
    x, ll, boundary, starts, grid_best = _box_mle(f.from_array, 3, f.names, grid_points)
    return PseudoMLEResult(TransformedParams(x[0], x[2], (x[1],)), ll, boundary, starts,
                           grid_best, f.names)


# -- school / workplace layout -------------------------------------------------

# (children, female, male) outcomes in a fixed order; index = 4 i + 2 j + k
CELLS = [(i, j, k) for i in range(3) for j in range(2) for k in range(2)]


def _conditional_matrix(p_H: float) -> np.ndarray:
    """``P(A = (i,j,k) | a = (r,s,t))`` with rows/columns indexed like ``CELLS``."""
    C = np.zeros((12, 12))
    tables = {a: household_final_size(4 - a, a, p_H) for a in range(1, 5)}
    for row, (r, s, t) in enumerate(CELLS):
        a = r + s + t
        for col, (i, j, k) in enumerate(CELLS):
            if i < r or j < s or k < t:
                continue
            if a == 0:
                C[row, col] = 1.0 if (i, j, k) == (0, 0, 0) else 0.0
                continue
            extra = i + j + k - a
            C[row, col] = (tables[a][extra] * math.comb(2 - r, i - r) * math.comb(1 - s, j - s)
                           * math.comb(1 - t, k - t) / math.comb(4 - a, extra))
    return C


def _conditional_structure():
    # non-zero entries of the conditional matrix: (row, col, a, extra, coefficient)
    out = []
    for row, (r, s, t) in enumerate(CELLS):
        a = r + s + t
        if a == 0:
            continue
        for col, (i, j, k) in enumerate(CELLS):
            if i < r or j < s or k < t:
                continue
            extra = i + j + k - a
            out.append((row, col, a, extra, math.comb(2 - r, i - r) * math.comb(1 - s, j - s)
                        * math.comb(1 - t, k - t) / math.comb(4 - a, extra)))
    return tuple(np.array(c) for c in zip(*out))


def _conditional_polynomial():
    # coefficients M[e] with conditional matrix = sum_e q^e M[e], q = 1 - p_H
    polys = {a: final_size_polynomials(4 - a, a) for a in range(1, 5)}
    degree = max(P.shape[1] for P in polys.values())
    M = np.zeros((degree, 12, 12))
    for row, col, a, extra, coef in zip(*_conditional_structure()):
        P = polys[int(a)][int(extra)]
        M[:P.size, row, col] += coef * P
    M[0, 0, 0] = 1.0
    return M.reshape(degree, 144)


_POLY = _conditional_polynomial()


def _conditional_matrix_batch(p_H) -> np.ndarray:
    """:func:`_conditional_matrix` for an array of ``p_H``, shape (k, 12, 12)."""
    q = 1.0 - np.atleast_1d(np.asarray(p_H, dtype=float))
    return (np.power.outer(q, np.arange(_POLY.shape[0])) @ _POLY).reshape(-1, 12, 12)


def _introduction_probs(psi_c, psi_f, psi_m):
    """``P(a = (r,s,t))`` for arrays of escape probabilities, shape (..., 12)."""
    psi_c, psi_f, psi_m = np.broadcast_arrays(*(np.asarray(p, dtype=float)
                                                for p in (psi_c, psi_f, psi_m)))
    child = np.stack([psi_c ** 2, 2 * psi_c * (1 - psi_c), (1 - psi_c) ** 2], axis=-1)
    fem = np.stack([psi_f, 1 - psi_f], axis=-1)
    mal = np.stack([psi_m, 1 - psi_m], axis=-1)
    out = child[..., :, None, None] * fem[..., None, :, None] * mal[..., None, None, :]
    return out.reshape(out.shape[:-3] + (12,))


def household_prob_table_ex2(p_H, psi_c, psi_f, psi_m) -> np.ndarray:
    """All 12 outcome probabilities; last axis indexed like ``CELLS``."""
    return _introduction_probs(psi_c, psi_f, psi_m) @ _conditional_matrix(p_H)


def household_prob_ex2(counts, p_H, psi_c, psi_f, psi_m) -> float:
    """Probability that a household ends with ``counts = (i, j, k)`` infected.

    ``i`` of the two children, ``j`` of the female and ``k`` of the male
    adult; ``psi_*`` are the probabilities each avoids group and community
    infection.
    """
    i, j, k = counts
    if not (0 <= i <= 2 and 0 <= j <= 1 and 0 <= k <= 1):
        raise ValueError(f"household counts {counts} out of range")
    for v in (psi_c, psi_f, psi_m):
        if not 0 <= v <= 1:
            raise ValueError(f"escape probabilities must lie in [0, 1], got {v}")
    return float(household_prob_table_ex2(p_H, psi_c, psi_f, psi_m)[4 * i + 2 * j + k])


@dataclass(frozen=True, eq=False)
class HouseholdTriple:
    """Per-household (children, female, male) infected counts with group links.

    ``school``, ``work_f`` and ``work_m`` hold the group ids of the
    children's school and the two adults' workplaces; ``group_sizes`` are
    indexed by group id.
    """

    counts: np.ndarray
    school: np.ndarray
    work_f: np.ndarray
    work_m: np.ndarray
    group_sizes: np.ndarray
    N: int

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).reshape(-1, 3)
        if np.any(c < 0) or np.any(c > [2, 1, 1]):
            raise ValueError("household counts out of range")
        object.__setattr__(self, "counts", c)
        for name in ("school", "work_f", "work_m", "group_sizes"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.int64))

    @classmethod
    def from_counts(cls, pop: PopulationStructure, counts):
        roles = household_roles(pop)
        return cls(counts, pop.group[roles["children"][:, 0]], pop.group[roles["female"]],
                   pop.group[roles["male"]], pop.group_sizes, pop.N)

    @classmethod
    def from_final_size(cls, fs: FinalSizeData):
        return cls.from_counts(fs.pop, fs.role_counts())

    def group_infected(self) -> np.ndarray:
        """Infected children per school and adults per workplace, by group id."""
        n = np.zeros(self.group_sizes.size, dtype=np.int64)
        np.add.at(n, self.school, self.counts[:, 0])
        np.add.at(n, self.work_f, self.counts[:, 1])
        np.add.at(n, self.work_m, self.counts[:, 2])
        return n

    @property
    def n_c(self) -> int:
        return int(self.counts.sum())

    def totals(self):
        """Children, female and male totals."""
        return self.counts.sum(axis=0)


class HouseholdPseudoLikelihood:
    """Pseudolikelihood of school/workplace final-size data.

    Households sharing a school and both workplaces share their escape
    probabilities, so the data are compressed to outcome counts per
    distinct (school, workplace, workplace) combination.
    """

    def __init__(self, data: HouseholdTriple):
        self.data = data
        self.names = _param_names(2)
        n_g = data.group_infected()
        frac = np.divide(n_g, data.group_sizes, out=np.zeros(n_g.size, dtype=float),
                         where=data.group_sizes > 0)
        self.community_frac = data.n_c / data.N
        keys = np.column_stack([data.school, data.work_f, data.work_m])
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        self.school_frac = frac[uniq[:, 0]]
        self.f_frac = frac[uniq[:, 1]]
        self.m_frac = frac[uniq[:, 2]]
        cell = data.counts @ np.array([4, 2, 1])
        self.table = np.zeros((uniq.shape[0], 12))
        np.add.at(self.table, (inv, cell), 1)
        self._inv = inv
        self._used = self.table > 0
        self._cache = (None, None)
        self._batch_cache = (None, None)

    def _conditional(self, p_H):
        # the MCMC updates one component at a time, so p_H often repeats
        if self._cache[0] != p_H:
            self._cache = (p_H, _conditional_matrix(p_H))
        return self._cache[1]

    def _conditional_batch(self, p):
        key = p.tobytes()
        if self._batch_cache[0] != key:
            self._batch_cache = (key, _conditional_matrix_batch(p))
        return self._batch_cache[1]

    def psi(self, theta: TransformedParams):
        """Escape probabilities (psi_c, psi_f, psi_m) per household."""
        pc, pf, pm = self._psi(theta.pi_C, *theta.pi_G)
        return pc[self._inv], pf[self._inv], pm[self._inv]

    def _psi(self, pi_C, pi_G1, pi_G2):
        with np.errstate(divide="ignore"):
            lc = self.community_frac * math.log(pi_C) if self.community_frac > 0 else 0.0
            l1, l2 = np.log(pi_G1), np.log(pi_G2)
        pc = np.exp(lc + np.where(self.school_frac > 0, self.school_frac * l1, 0.0))
        pf = np.exp(lc + np.where(self.f_frac > 0, self.f_frac * l2, 0.0))
        pm = np.exp(lc + np.where(self.m_frac > 0, self.m_frac * l2, 0.0))
        return pc, pf, pm

    def __call__(self, p_H, pi_G1, pi_G2, pi_C) -> float:
        probs = _introduction_probs(*self._psi(pi_C, pi_G1, pi_G2)) @ self._conditional(p_H)
        p = probs[self._used]
        if np.any(p <= 0):
            return -math.inf
        return float(self.table[self._used] @ np.log(p))

    def from_array(self, x) -> float:
        return self(x[0], x[1], x[2], x[3])

    def batch(self, X) -> np.ndarray:
        """Log-pseudolikelihood of every row ``(p_H, pi_G1, pi_G2, pi_C)`` of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        C = self._conditional_batch(X[:, 0])
        with np.errstate(divide="ignore", invalid="ignore"):
            lc = self.community_frac * np.log(X[:, 3:4]) if self.community_frac > 0 else 0.0
            l1, l2 = np.log(X[:, 1:2]), np.log(X[:, 2:3])
            pc = np.exp(lc + np.where(self.school_frac > 0, self.school_frac * l1, 0.0))
            pf = np.exp(lc + np.where(self.f_frac > 0, self.f_frac * l2, 0.0))
            pm = np.exp(lc + np.where(self.m_frac > 0, self.m_frac * l2, 0.0))
            probs = _introduction_probs(pc, pf, pm) @ C
            logs = np.where(self._used, np.log(np.where(self._used, probs, 1.0)), 0.0)
        total = np.einsum("kuc,uc->k", logs, self.table)
        return np.where(np.isnan(total), -np.inf, total)


def pseudo_loglik_ex2(data: HouseholdTriple, theta: TransformedParams) -> float:
    """Sum over households of ``log p_h(i_h, j_h, k_h)``."""
    if len(theta.pi_G) != 2:
        raise ValueError("the school/workplace layout has two group rates")
    return HouseholdPseudoLikelihood(data)(theta.p_H, *theta.pi_G, theta.pi_C)


def pseudo_mle_ex2(data: HouseholdTriple, grid_points=7) -> PseudoMLEResult:
    """Maximiser of the school/workplace pseudolikelihood over ``[0, 1]^4``."""
    f = HouseholdPseudoLikelihood(data)
    x, ll, boundary, starts, grid_best = _box_mle(f.from_array, 4, f.names, grid_points)
    return PseudoMLEResult(TransformedParams(x[0], x[3], (x[1], x[2])), ll, boundary, starts,
                           grid_best, f.names)
