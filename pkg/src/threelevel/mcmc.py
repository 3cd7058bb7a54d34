"""Metropolis-Hastings samplers and posterior summaries.

Final-size targets live on the unit cube ``(p_H, pi_G..., pi_C)`` with
independent uniform priors; every component is refreshed in turn from an
independent U(0, 1) proposal. Complete-data targets are the contact rates
with independent exponential(1) priors, updated one at a time by Gaussian
random walks whose step sizes are tuned during burn-in only.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .finalsize import mean_final_size
from .likelihood import CompleteDataLikelihood, mle
from .pseudolik import (HouseholdPseudoLikelihood, HouseholdTriple, VillageFinalSize,
                        VillagePseudoLikelihood, _param_names as transformed_names)
from .simulate import replicate_rng
from .threshold import offspring_matrix_example2, rstar_eigen, rstar_from_transformed

__all__ = [
    "ChainConfig",
    "Chain",
    "PosteriorSummary",
    "componentwise_mh",
    "run_finalsize_chain",
    "run_complete_chain",
    "summarize",
    "diagnostics",
    "effective_sample_size",
    "rstar_village",
    "rstar_school_workplace",
    "rates_to_transformed",
    "transformed_names",
]


@dataclass
class ChainConfig:
    """Chain length, thinning, seed and proposal settings.

    ``chains`` independent chains are advanced together; chain ``c`` draws
    from the stream ``(seed, c)`` and is identical whether it runs alone or
    alongside others. ``rw_sd`` gives the initial random-walk standard
    deviations (one per parameter, or a scalar); ``None`` means 0.1, i.e.
    10% of the exponential(1) prior standard deviation. ``tune`` adapts
    them during burn-in and freezes them afterwards.
    """

    iterations: int = 200_000
    burn_in: int = 20_000
    thin: int = 10
    seed: int = 0
    chains: int = 1
    rw_sd: object = None
    tune: bool = True
    target_acceptance: float = 0.44

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thinning must be at least 1")
        if self.chains < 1:
            raise ValueError("need at least one chain")
        if self.rw_sd is not None and np.any(np.asarray(self.rw_sd, dtype=float) <= 0):
            raise ValueError("random-walk standard deviations must be positive")

    @property
    def kept(self) -> int:
        """Retained draws per chain."""
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class Chain:
    """Retained draws of one or more chains, stored chain after chain."""

    samples: np.ndarray
    names: list
    acceptance: np.ndarray
    loglik: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_chains: int = 1
    proposal_sd: np.ndarray | None = None

    def __len__(self):
        return self.samples.shape[0]

    def column(self, name):
        return self.samples[:, self.names.index(name)]

    def per_chain(self) -> np.ndarray:
        """Samples reshaped to ``(n_chains, draws, dim)``."""
        return self.samples.reshape(self.n_chains, -1, self.samples.shape[1])

    @classmethod
    def merge(cls, chains):
        chains = list(chains)
        if len({len(c) // c.n_chains for c in chains}) != 1:
            raise ValueError("chains of different lengths cannot be merged")
        n = np.array([c.n_chains for c in chains], dtype=float)
        acc = np.sum([c.acceptance * k for c, k in zip(chains, n)], axis=0) / n.sum()
        return cls(np.concatenate([c.samples for c in chains]), chains[0].names, acc,
                   np.concatenate([c.loglik for c in chains]), int(n.sum()))

    def to_csv(self, path=None, rstar=None):
        """One column per parameter (plus ``R_star`` if given), one row per draw."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.names) + (["R_star"] if rstar is not None else []))
        for k, row in enumerate(self.samples):
            vals = [repr(float(v)) for v in row]
            if rstar is not None:
                vals.append(repr(float(rstar[k])))
            w.writerow(vals)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _chain_rngs(config: ChainConfig):
    return [replicate_rng(config.seed, c) for c in range(config.chains)]


def componentwise_mh(logpost, x0, config: ChainConfig, proposal="uniform", names=None,
                     rngs=None) -> Chain:
    """Systematic-scan Metropolis-Hastings for several chains at once.

    Parameters
    ----------
    logpost : callable
        Maps an array of shape ``(k, dim)`` to the ``k`` log posterior
        densities (up to a constant).
    x0 : array, shape (k, dim)
        Starting points, one per chain; all must have finite density.
    proposal : {"uniform", "rw"}
        Independent U(0, 1) proposals or Gaussian random walks.
    rngs : list of Generator, optional
        One per chain; defaults to the streams ``(config.seed, c)``.
    """
    X = np.array(x0, dtype=float, ndmin=2)
    k, dim = X.shape
    rngs = rngs if rngs is not None else _chain_rngs(config)
    if len(rngs) != k:
        raise ValueError("need one generator per chain")
    lp = np.asarray(logpost(X), dtype=float)
    if not np.all(np.isfinite(lp)):
        raise ValueError("starting point has zero posterior density")
    if proposal == "rw":
        sd0 = 0.1 if config.rw_sd is None else np.asarray(config.rw_sd, dtype=float)
        sd = np.broadcast_to(sd0, (dim,)).astype(float)[None, :].repeat(k, axis=0)
    elif proposal != "uniform":
        raise ValueError(f"unknown proposal {proposal!r}")

    n_keep = config.kept
    out = np.empty((k, n_keep, dim))
    ll_out = np.empty((k, n_keep))
    accepted = np.zeros((k, dim))
    window = np.zeros((k, dim))
    block = 5_000
    kept = 0
    for start in range(0, config.iterations, block):
        stop = min(start + block, config.iterations)
        m = stop - start
        if proposal == "uniform":
            draws = np.stack([g.random((m, dim)) for g in rngs], axis=1)
        else:
            draws = np.stack([g.standard_normal((m, dim)) for g in rngs], axis=1)
        log_u = np.log(np.stack([g.random((m, dim)) for g in rngs], axis=1))
        for it in range(start, stop):
            row = it - start
            for d in range(dim):
                Y = X.copy()
                if proposal == "uniform":
                    Y[:, d] = draws[row, :, d]
                else:
                    Y[:, d] += sd[:, d] * draws[row, :, d]
                new = logpost(Y)
                acc = log_u[row, :, d] < new - lp
                if acc.any():
                    X[acc, d] = Y[acc, d]
                    lp[acc] = new[acc]
                    if it >= config.burn_in:
                        accepted[acc, d] += 1
                    else:
                        window[acc, d] += 1
            if proposal == "rw" and config.tune and it < config.burn_in and (it + 1) % 100 == 0:
                sd *= np.exp(2 * np.clip(window / 100 - config.target_acceptance, -0.5, 0.5))
                window[:] = 0
            if it >= config.burn_in and (it - config.burn_in) % config.thin == config.thin - 1 and kept < n_keep:
                out[:, kept] = X
                ll_out[:, kept] = lp
                kept += 1
    acceptance = accepted.mean(axis=0) / (config.iterations - config.burn_in)
    return Chain(out[:, :kept].reshape(-1, dim), list(names or [f"x{j}" for j in range(dim)]),
                 acceptance, ll_out[:, :kept].ravel(), k, sd if proposal == "rw" else None)


def _batched(f):
    if hasattr(f, "batch"):
        return f.batch
    return lambda X: np.array([f.from_array(x) for x in X])


def _initial_points(logpost, rngs, dim, draw):
    x0 = np.empty((len(rngs), dim))
    for c, g in enumerate(rngs):
        for _ in range(1000):
            x = draw(g)
            if np.isfinite(logpost(x[None, :])[0]):
                x0[c] = x
                break
        else:
            raise ValueError("target is -inf at 1000 prior draws")
    return x0


def run_finalsize_chain(target, config: ChainConfig, init=None) -> Chain:
    """Sample the final-size posterior under uniform priors on the unit cube.

    Parameters
    ----------
    target : VillageFinalSize, HouseholdTriple or pseudolikelihood object
        Data, or any object with ``names`` and ``batch`` (or ``from_array``).
    config : ChainConfig
    init : array, optional
        Starting point(s); by default each chain starts at a prior draw
        with positive density.
    """
    if isinstance(target, VillageFinalSize):
        target = VillagePseudoLikelihood(target)
    elif isinstance(target, HouseholdTriple):
        target = HouseholdPseudoLikelihood(target)
    f = _batched(target)
    dim = len(target.names)

    def inside(X):
        return np.all((X > 0) & (X <= 1), axis=1) & (X[:, 0] < 1)

    rngs = _chain_rngs(config)
    if init is None:
        init = _initial_points(f, rngs, dim, lambda g: g.random(dim))
    init = np.array(np.broadcast_to(np.asarray(init, dtype=float), (config.chains, dim)))
    if not np.all(inside(init)):
        raise ValueError("starting points must lie in the unit cube with p_H < 1")
    # U(0, 1) proposals never leave the support, so the target is used directly
    return componentwise_mh(f, init, config, "uniform", target.names, rngs)


def run_complete_chain(lik: CompleteDataLikelihood, config: ChainConfig, init=None) -> Chain:
    """Sample contact rates given complete data under exponential(1) priors.

    Chains start at the MLE (rates floored at 0.001) when the data contain
    infections and at prior draws otherwise.
    """
    dim = lik.dim

    def logpost(X):
        out = np.full(X.shape[0], -np.inf)
        pos = np.all(X > 0, axis=1)
        if pos.any():
            out[pos] = lik.batch(X[pos]) - X[pos].sum(axis=1)
        return out

    rngs = _chain_rngs(config)
    if init is None and lik.n_events:
        init = np.maximum(mle(lik.log, lik.pop, likelihood=lik).rates, 1e-3)
        if not np.isfinite(logpost(init[None, :])[0]):
            init = None
    if init is None:
        init = _initial_points(logpost, rngs, dim, lambda g: g.exponential(size=dim))
    init = np.broadcast_to(np.asarray(init, dtype=float), (config.chains, dim))
    return componentwise_mh(logpost, init, config, "rw", lik.names, rngs)


def rates_to_transformed(samples, mu=1.0):
    """Map rate draws ``(lambda_H, lambda_G..., lambda_C)`` to ``(p_H, pi_G..., pi_C)``."""
    samples = np.asarray(samples, dtype=float)
    out = np.exp(-samples * mu)
    out[:, 0] = 1 - out[:, 0]
    return out


def rstar_village(samples):
    """R* for every ``(p_H, pi_G, pi_C)`` row."""
    s = np.asarray(samples)
    return rstar_from_transformed(s[:, 2], s[:, 1], s[:, 0])


def rstar_school_workplace(samples, mu=1.0):
    """R* for every ``(p_H, pi_G1, pi_G2, pi_C)`` row via the offspring matrix."""
    s = np.asarray(samples)
    out = np.empty(s.shape[0])
    cache = {}
    for k, (p, g1, g2, c) in enumerate(s):
        mu3 = cache.get(p)
        if mu3 is None:
            mu3 = cache[p] = mean_final_size(3, 1, p)
        M = offspring_matrix_example2(-math.log(c) / mu, -math.log(g1) / mu, -math.log(g2) / mu, mu, mu3)
        out[k] = rstar_eigen(M)
    return out


def effective_sample_size(x) -> float:
    """ESS of a scalar chain by Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = x @ x / n
    if var == 0:
        return float(n)
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acov = np.fft.irfft(f * np.conj(f), m)[:n] / n
    rho = acov / acov[0]
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = rho[k] + rho[k + 1]
        if pair <= 0:
            break
        tau += 2 * pair
    return float(n / max(tau, 1e-12))


def _ess_columns(samples, n_chains):
    per = samples.reshape(n_chains, -1, samples.shape[1])
    return np.array([sum(effective_sample_size(c[:, j]) for c in per) for j in range(samples.shape[1])])


def diagnostics(chain: Chain) -> dict:
    """Effective sample size (summed over chains) and acceptance rate per parameter."""
    ess = _ess_columns(chain.samples, chain.n_chains)
    return {
        "ess": dict(zip(chain.names, map(float, ess))),
        "acceptance": dict(zip(chain.names, map(float, chain.acceptance))),
    }


@dataclass
class PosteriorSummary:
    names: list
    mean: np.ndarray
    sd: np.ndarray
    median: np.ndarray
    corr: np.ndarray
    degenerate: np.ndarray
    acceptance: np.ndarray
    ess: np.ndarray
    n: int

    def __getitem__(self, name):
        k = self.names.index(name)
        return {"mean": float(self.mean[k]), "sd": float(self.sd[k]), "median": float(self.median[k])}

    def correlation(self, a, b) -> float:
        return float(self.corr[self.names.index(a), self.names.index(b)])

    def to_dict(self):
        return {
            "n": int(self.n),
            "parameters": {
                name: {"mean": float(self.mean[k]), "sd": float(self.sd[k]),
                       "median": float(self.median[k]), "ess": float(self.ess[k]),
                       "degenerate": bool(self.degenerate[k]),
                       **({"acceptance": float(self.acceptance[k])} if k < self.acceptance.size else {})}
                for k, name in enumerate(self.names)
            },
            "correlation": {"names": self.names, "matrix": self.corr.tolist()},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=1)


def summarize(chain: Chain, rstar=None, transform=None, names=None) -> PosteriorSummary:
    """Means, standard deviations, medians and correlations of a chain.

    Parameters
    ----------
    rstar : callable, optional
        Maps the (transformed) sample array to R* per draw; the result is
        summarised as an extra column ``R_star``.
    transform : callable, optional
        Applied to the raw samples first, e.g. :func:`rates_to_transformed`.
    names : list of str, optional
        Column names after ``transform``; defaults to the chain's names.
    """
    if len(chain) == 0:
        raise ValueError("cannot summarise an empty chain")
    s = chain.samples if transform is None else transform(chain.samples)
    names = list(names if names is not None else chain.names)
    if rstar is not None:
        s = np.column_stack([s, rstar(s)])
        names = names + ["R_star"]
    sd = s.std(axis=0, ddof=1) if s.shape[0] > 1 else np.zeros(s.shape[1])
    degenerate = sd == 0
    centred = s - s.mean(axis=0)
    denom = np.where(degenerate, 1.0, sd)
    z = centred / denom
    corr = (z.T @ z) / max(s.shape[0] - 1, 1)
    corr[degenerate, :] = 0.0
    corr[:, degenerate] = 0.0
    np.fill_diagonal(corr, 1.0)
    corr = np.clip((corr + corr.T) / 2, -1, 1)
    ess = _ess_columns(s, chain.n_chains)
    return PosteriorSummary(names, s.mean(axis=0), sd, np.median(s, axis=0), corr, degenerate,
                            np.asarray(chain.acceptance), ess, s.shape[0])
