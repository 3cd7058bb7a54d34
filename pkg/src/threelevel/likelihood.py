"""Complete-data likelihood of the contact rates.

For a fully observed outbreak the log-likelihood of the rates
``(lambda_H, lambda_G^(1..K), lambda_C)`` is

    sum_e [log S^{H,G}(t_e-) + log(rates . x_e)] - rates . A

where ``x_e`` collects the infective counts seen by the e-th infected
individual just before its infection (``I_i^H``, ``I_j^G / n_j`` in the
column of its group's rate class, ``I / N``) and ``A`` holds the exact
integrals of the corresponding susceptible-infective products. All paths
are piecewise constant, so both are computed by one sweep over the events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .population import PopulationStructure
from .simulate import EventLog, PeriodDistribution

__all__ = [
    "TrajectoryState",
    "CompleteDataLikelihood",
    "MLEResult",
    "ConvergenceError",
    "log_likelihood",
    "score",
    "mle",
    "estimate_period_means",
    "rate_names",
]

_INFECTION, _ONSET, _REMOVAL = 0, 1, 2


class ConvergenceError(RuntimeError):
    """Raised when the optimiser stops without meeting its tolerance."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


def rate_names(n_classes: int) -> list[str]:
    if n_classes == 1:
        return ["lambda_H", "lambda_G", "lambda_C"]
    return ["lambda_H", *(f"lambda_G{c}" for c in range(1, n_classes + 1)), "lambda_C"]


class TrajectoryState:
    """Counting paths of an observed outbreak on ``[0, t]``.

    Stores the breakpoints of the community-level paths ``S(t)`` and
    ``I(t)`` and answers left-limit queries for any household or group.
    """

    def __init__(self, log: EventLog, pop: PopulationStructure, t: float | None = None):
        if len(log) and (log.id.min() < 0 or log.id.max() >= pop.N):
            raise ValueError("event log refers to individuals outside the population")
        if len(log) and (np.any(pop.household[log.id] != log.household)
                         or np.any(pop.group[log.id] != log.group)):
            raise ValueError("event log household/group columns disagree with the population")
        self.log = log
        self.pop = pop
        self.t = float(log.t_obs if t is None else t)
        if not self.t > 0:
            raise ValueError(f"observation horizon must be positive, got {self.t}")
        times = np.concatenate([log.t_inf, log.onset, log.removal])
        dS = np.concatenate([-np.ones(len(log)), np.zeros(2 * len(log))])
        dI = np.concatenate([np.zeros(len(log)), np.ones(len(log)), -np.ones(len(log))])
        keep = times < self.t
        order = np.argsort(times[keep], kind="stable")
        bt = times[keep][order]
        self.breaks, idx = np.unique(bt, return_index=True)
        self.S = pop.N + np.cumsum(dS[keep][order])[np.r_[idx[1:] - 1, bt.size - 1]] if bt.size else np.array([])
        self.I = np.cumsum(dI[keep][order])[np.r_[idx[1:] - 1, bt.size - 1]] if bt.size else np.array([])

    def _left(self, breaks, values, t, initial):
        k = np.searchsorted(breaks, t, side="left")
        return initial if k == 0 else values[k - 1]

    def community(self, t):
        """(S(t-), I(t-))."""
        return (self._left(self.breaks, self.S, t, self.pop.N),
                self._left(self.breaks, self.I, t, 0))

    def _counts(self, mask, t):
        log = self.log
        sel = mask[log.id]
        S = int(mask.sum()) - int(np.sum(log.t_inf[sel] < t))
        I = int(np.sum((log.onset[sel] < t) & (log.removal[sel] >= t)))
        return S, I

    def household(self, i, t):
        """(S_i^H(t-), I_i^H(t-)) for household ``i``."""
        return self._counts(self.pop.household == i, t)

    def group(self, j, t):
        """(S_j^G(t-), I_j^G(t-)) for group ``j``."""
        return self._counts(self.pop.group == j, t)

    def household_group_susceptibles(self, i, j, t):
        """S_{i,j}^{H,G}(t-)."""
        return self._counts((self.pop.household == i) & (self.pop.group == j), t)[0]


class CompleteDataLikelihood:
    """Sufficient statistics of one observed outbreak for fast evaluation.

    Parameters
    ----------
    log : EventLog
        The complete record.
    pop : PopulationStructure
        The population the outbreak ran in.
    t : float, optional
        Observation horizon; defaults to ``log.t_obs``.
    periods : tuple of PeriodDistribution, optional
        (latent, infectious) distributions. When given, the
        period-duration factors are added to the log-likelihood; they do
        not depend on the rates.
    """

    def __init__(self, log: EventLog, pop: PopulationStructure, t: float | None = None,
                 periods: tuple[PeriodDistribution, PeriodDistribution] | None = None):
        self.pop = pop
        self.log = log
        self.t = float(log.t_obs if t is None else t)
        if not self.t > 0:
            raise ValueError(f"observation horizon must be positive, got {self.t}")
        self.n_classes = pop.n_rate_classes
        self.names = rate_names(self.n_classes)
        self.dim = self.n_classes + 2
        self._sweep()
        self.const = float(np.sum(self.log_S))
        if periods is not None:
            self.const += _period_terms(log, self.t, *periods)

    def _sweep(self):
        log, pop = self.log, self.pop
        if len(log) and (log.id.min() < 0 or log.id.max() >= pop.N):
            raise ValueError("event log refers to individuals outside the population")
        N = pop.N
        hh, gr = pop.household, pop.group
        n_g = pop.group_sizes.astype(float)
        gclass = pop.group_class
        S_h = pop.household_sizes.astype(np.int64).copy()
        S_g = pop.group_sizes.astype(np.int64).copy()
        S_hg = {}
        I_h = np.zeros_like(S_h)
        I_g = np.zeros_like(S_g)
        S, I = N, 0
        K = self.n_classes

        # running rate sums: sum_i S_i I_i, per class sum_j S_j I_j / n_j, S I / N
        RH = 0.0
        RG = np.zeros(K + 1)
        A = np.zeros(self.dim)
        t_prev = 0.0

        times = np.concatenate([log.t_inf, log.onset, log.removal])
        kinds = np.repeat([_INFECTION, _ONSET, _REMOVAL], len(log))
        who = np.tile(np.arange(len(log)), 3)
        keep = times < self.t
        order = np.lexsort((kinds[keep], times[keep]))
        times, kinds, who = times[keep][order], kinds[keep][order], who[keep][order]

        X, log_S = [], []
        initial = log.is_initial
        k = 0
        n_ev = times.size
        while k < n_ev:
            t_now = times[k]
            dt = t_now - t_prev
            if dt > 0:
                A[0] += dt * RH
                A[1:K + 1] += dt * RG[1:]
                A[K + 1] += dt * S * I / N
                t_prev = t_now
            end = k
            while end < n_ev and times[end] == t_now:
                end += 1
            # covariates use the state just before t_now
            for e in range(k, end):
                if kinds[e] != _INFECTION or initial[who[e]]:
                    continue
                v = log.id[who[e]]
                h, g = hh[v], gr[v]
                s_hg = S_hg.get((h, g), None)
                if s_hg is None:
                    s_hg = int(np.sum((hh == h) & (gr == g)))
                x = np.zeros(self.dim)
                x[0] = I_h[h]
                if gclass[g] > 0:
                    x[gclass[g]] = I_g[g] / n_g[g]
                x[K + 1] = I / N
                X.append(x)
                log_S.append(np.log(s_hg) if s_hg > 0 else -np.inf)
            for e in range(k, end):
                v = log.id[who[e]]
                h, g = hh[v], gr[v]
                c = gclass[g]
                if kinds[e] == _INFECTION:
                    if S_h[h] <= 0 or S_g[g] <= 0:
                        raise ValueError(f"individual {v} infected while not susceptible")
                    RH -= I_h[h]
                    if c > 0:
                        RG[c] -= I_g[g] / n_g[g]
                    S_h[h] -= 1
                    S_g[g] -= 1
                    S -= 1
                    key = (h, g)
                    if key not in S_hg:
                        S_hg[key] = int(np.sum((hh == h) & (gr == g)))
                    S_hg[key] -= 1
                else:
                    d = 1 if kinds[e] == _ONSET else -1
                    RH += d * S_h[h]
                    if c > 0:
                        RG[c] += d * S_g[g] / n_g[g]
                    I_h[h] += d
                    I_g[g] += d
                    I += d
            k = end
        dt = self.t - t_prev
        if dt > 0:
            A[0] += dt * RH
            A[1:K + 1] += dt * RG[1:]
            A[K + 1] += dt * S * I / N
        self.X = np.array(X).reshape(-1, self.dim)
        self.log_S = np.array(log_S)
        self.A = A

    @property
    def n_events(self) -> int:
        return int(self.X.shape[0])

    def _check(self, rates):
        rates = np.asarray(rates, dtype=float)
        if rates.shape != (self.dim,):
            raise ValueError(f"expected {self.dim} rates {self.names}, got shape {rates.shape}")
        if np.any(rates < 0) or not np.all(np.isfinite(rates)):
            raise ValueError("rates must be finite and non-negative")
        return rates

    def loglik(self, rates) -> float:
        rates = self._check(rates)
        hazard = self.X @ rates
        if np.any(hazard <= 0):
            return -np.inf
        return float(self.const + np.sum(np.log(hazard)) - self.A @ rates)

    def batch(self, R) -> np.ndarray:
        """Log-likelihood of every row of ``R``; ``-inf`` where a rate is negative."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        out = np.full(R.shape[0], -np.inf)
        ok = np.all(R >= 0, axis=1)
        if not np.any(ok):
            return out
        hazard = self.X @ R[ok].T
        with np.errstate(divide="ignore"):
            val = self.const + np.log(hazard).sum(axis=0) - R[ok] @ self.A
        out[ok] = np.where(np.all(hazard > 0, axis=0), val, -np.inf)
        return out

    def score(self, rates) -> np.ndarray:
        rates = self._check(rates)
        hazard = self.X @ rates
        with np.errstate(divide="ignore", invalid="ignore"):
            return (self.X / hazard[:, None]).sum(axis=0) - self.A

    def hessian(self, rates) -> np.ndarray:
        rates = self._check(rates)
        hazard = self.X @ rates
        Xs = self.X / hazard[:, None]
        return -(Xs.T @ Xs)

    def score_terms(self, rates):
        """Event-sum and integral parts of the score, returned separately."""
        rates = self._check(rates)
        hazard = self.X @ rates
        return (self.X / hazard[:, None]).sum(axis=0), self.A.copy()


def _period_terms(log: EventLog, t: float, latent: PeriodDistribution,
                  infectious: PeriodDistribution) -> float:
    total = 0.0
    for k in range(len(log)):
        t0, E, T = log.t_inf[k], log.lat_dur[k], log.inf_dur[k]
        if t < t0:
            continue
        # initially infective cases skip the latent stage
        has_latent = not (log.infector[k] == -1 and E == 0)
        if t < t0 + E:
            total += float(latent.logsf(t - t0))
        elif t < t0 + E + T:
            total += (float(latent.logpdf(E)) if has_latent else 0.0) + float(infectious.logsf(t - t0 - E))
        else:
            total += (float(latent.logpdf(E)) if has_latent else 0.0) + float(infectious.logpdf(T))
    return total


def log_likelihood(log: EventLog, pop: PopulationStructure, rates, t: float | None = None,
                   periods=None) -> float:
    """Complete-data log-likelihood at ``rates = (lambda_H, lambda_G..., lambda_C)``.

    Returns ``-inf`` if some observed infection had zero hazard.
    """
    return CompleteDataLikelihood(log, pop, t, periods).loglik(rates)


def score(log: EventLog, pop: PopulationStructure, rates, t: float | None = None) -> np.ndarray:
    """Gradient of :func:`log_likelihood`; group classes are pooled."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise ValueError("score requires strictly positive rates")
    return CompleteDataLikelihood(log, pop, t).score(rates)


@dataclass
class MLEResult:
    rates: np.ndarray
    loglik: float
    gradient: np.ndarray
    iterations: int
    converged: bool
    boundary: np.ndarray
    names: list = field(default_factory=list)
    standard_errors: np.ndarray | None = None

    @property
    def gradient_norm(self) -> float:
        """Max-norm of the score over the parameters not on the boundary."""
        g = self.gradient[~self.boundary]
        return float(np.max(np.abs(g))) if g.size else 0.0

    def to_dict(self) -> dict:
        return {
            "rates": dict(zip(self.names, map(float, self.rates))),
            "loglik": float(self.loglik),
            "gradient_norm": self.gradient_norm,
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "boundary": dict(zip(self.names, map(bool, self.boundary))),
            "standard_errors": (None if self.standard_errors is None
                                else dict(zip(self.names, map(float, self.standard_errors)))),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def mle(log: EventLog, pop: PopulationStructure, t: float | None = None, init_rates=None,
        tol: float = 1e-9, maxiter: int = 200, raise_on_failure: bool = False,
        likelihood: CompleteDataLikelihood | None = None) -> MLEResult:
    """Maximum-likelihood rates by damped Newton iterations on log-rates.

    A rate whose log falls below -30 with a negative score is set to
    exactly zero and reported on the boundary. Rates with no information
    at all (no exposure and no events) are also reported as zero.
    """
    lik = likelihood or CompleteDataLikelihood(log, pop, t)
    dim = lik.dim
    rates = np.full(dim, 0.5) if init_rates is None else np.asarray(init_rates, dtype=float).copy()
    if rates.shape != (dim,):
        raise ValueError(f"expected {dim} initial rates")
    uninformative = (lik.A == 0) & ~np.any(lik.X > 0, axis=0)
    decreasing = (lik.A > 0) & ~np.any(lik.X > 0, axis=0)
    fixed = uninformative | decreasing
    rates[fixed] = 0.0
    rates[~fixed] = np.maximum(rates[~fixed], 1e-3)
    f = lik.loglik(rates)
    if not np.isfinite(f):
        rates[~fixed] = 0.5
        f = lik.loglik(rates)

    it = 0
    converged = False
    for it in range(1, maxiter + 1):
        g_lam = lik.score(rates)
        active = ~fixed
        if not np.any(active) or np.max(np.abs(g_lam[active])) < tol:
            converged = True
            it -= 1
            break
        lam = rates[active]
        theta = np.log(lam)
        g = lam * g_lam[active]
        H = lam[:, None] * lik.hessian(rates)[np.ix_(active, active)] * lam[None, :] + np.diag(g)
        step = _damped_step(H, g)
        step = np.clip(step, -5.0, 5.0)
        alpha, improved = 1.0, False
        while alpha > 1e-12:
            trial = rates.copy()
            trial[active] = np.exp(theta + alpha * step)
            ft = lik.loglik(trial)
            if ft >= f + 1e-4 * alpha * (g @ step) or (ft >= f and alpha < 1e-6):
                improved = True
                break
            alpha *= 0.5
        if improved:
            rates, f = trial, ft
        # boundary detection in log-rate coordinates
        g_lam = lik.score(rates)
        hit = active & (np.log(np.maximum(rates, 1e-300)) < -30) & (g_lam <= 0)
        if np.any(hit):
            fixed = fixed | hit
            rates[hit] = 0.0
            f = lik.loglik(rates)
            continue
        if not improved:
            converged = np.max(np.abs(g_lam[~fixed])) < max(tol, 1e-7 * max(1, lik.n_events))
            break

    g_lam = lik.score(rates) if np.all(rates[~fixed] > 0) else np.full(dim, np.nan)
    result = MLEResult(rates, f, g_lam, it, converged, fixed.copy(), lik.names)
    result.standard_errors = _standard_errors(lik, rates, fixed)
    if not converged and raise_on_failure:
        raise ConvergenceError(
            f"MLE did not converge after {it} iterations (gradient norm {result.gradient_norm:.3g})",
            result,
        )
    return result


def _damped_step(H, g):
    n = g.size
    tau = 0.0
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    for _ in range(60):
        try:
            L = np.linalg.cholesky(-H + tau * np.eye(n))
            return np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            tau = max(2 * tau, 1e-8 * scale)
    return g / scale


def _standard_errors(lik, rates, fixed):
    """Square roots of the inverse observed information.

    Boundary rates keep their information; only directions without any
    data are dropped. When the full information matrix is singular (for
    example when the group and community covariates are proportional
    because the outbreak never left one group), interior rates use the
    inverse of their own block and boundary rates the conditional value
    ``1 / sqrt(information)``.
    """
    se = np.full(lik.dim, np.nan)
    use = np.any(lik.X > 0, axis=0)
    if not np.any(use) or np.any(lik.X @ rates <= 0):
        return se
    info = -lik.hessian(rates)
    if np.linalg.cond(info[np.ix_(use, use)]) < 1e10:
        cov = np.linalg.inv(info[np.ix_(use, use)])
        se[use] = np.sqrt(np.maximum(np.diag(cov), 0))
        return se
    interior = use & ~fixed
    if np.any(interior) and np.linalg.cond(info[np.ix_(interior, interior)]) < 1e10:
        cov = np.linalg.inv(info[np.ix_(interior, interior)])
        se[interior] = np.sqrt(np.maximum(np.diag(cov), 0))
    edge = use & fixed
    se[edge] = 1.0 / np.sqrt(np.diag(info)[edge])
    return se


def estimate_period_means(log: EventLog) -> tuple[float, float]:
    """Sample means of the observed latent and infectious durations.

    Initially infective cases (external, zero latent duration) are left
    out of the latent mean. Censored records are not supported.
    """
    if len(log) == 0:
        raise ValueError("event log is empty")
    if np.any(log.removal > log.t_obs + 1e-12):
        raise ValueError(
            "event log contains censored periods (removal after the observation horizon); "
            "censored-duration estimation is not supported"
        )
    latent_obs = ~(log.is_initial & (log.lat_dur == 0))
    lat = log.lat_dur[latent_obs]
    return (float(lat.mean()) if lat.size else float("nan"), float(log.inf_dur.mean()))
