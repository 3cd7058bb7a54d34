"""Event-driven simulation of the SEIR model with three levels of mixing.

When an individual becomes infective at time ``t`` with infectious period
``T`` all of its contacts on ``[t, t + T)`` are drawn at once:

* each household co-member is contacted at the points of a Poisson process
  of rate ``lambda_H``;
* group contacts arrive at total rate ``lambda_G`` of the group's rate
  class, each aimed at a uniformly chosen group member;
* community contacts arrive at total rate ``lambda_C``, each aimed at a
  uniformly chosen member of the population.

Contacts aimed at oneself are void. A contact infects its target only if
the target is still susceptible when it happens. Because the contact times
are drawn up front, any latent or infectious period distribution is
handled exactly.
"""

from __future__ import annotations

import csv
import heapq
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .population import InitialCondition, PopulationStructure, household_roles

__all__ = [
    "PeriodDistribution",
    "EpidemicParams",
    "EventLog",
    "FinalSizeData",
    "EXTERNAL",
    "replicate_rng",
    "simulate",
    "simulate_many",
    "final_size",
]

EXTERNAL = -1

SUSCEPTIBLE, EXPOSED, INFECTIVE, REMOVED = 0, 1, 2, 3
_ONSET, _REMOVAL, _CONTACT = 0, 1, 2


@dataclass(frozen=True)
class PeriodDistribution:
    """Distribution of a latent or infectious period.

    ``kind`` is one of ``"constant"``, ``"exponential"`` or ``"gamma"``;
    ``shape`` is only used by the gamma distribution.
    """

    kind: str = "constant"
    mean: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "exponential", "gamma"):
            raise ValueError(f"unknown period distribution {self.kind!r}")
        if not (np.isfinite(self.mean) and self.mean >= 0):
            raise ValueError(f"period mean must be finite and non-negative, got {self.mean}")
        if self.kind != "constant" and self.mean == 0:
            raise ValueError(f"{self.kind} period needs a positive mean")
        if self.kind == "gamma" and not self.shape > 0:
            raise ValueError(f"gamma shape must be positive, got {self.shape}")

    @classmethod
    def constant(cls, value):
        return cls("constant", float(value))

    @classmethod
    def exponential(cls, mean):
        return cls("exponential", float(mean))

    @classmethod
    def gamma(cls, mean, shape):
        return cls("gamma", float(mean), float(shape))

    def sample(self, rng, size=None):
        if self.kind == "constant":
            return self.mean if size is None else np.full(size, self.mean)
        if self.kind == "exponential":
            return rng.exponential(self.mean, size)
        return rng.gamma(self.shape, self.mean / self.shape, size)

    def _frozen(self):
        if self.kind == "exponential":
            return stats.expon(scale=self.mean)
        return stats.gamma(self.shape, scale=self.mean / self.shape)

    def logpdf(self, x):
        """Log density, or log mass for the constant distribution."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.where(np.isclose(x, self.mean, rtol=1e-9, atol=1e-12), 0.0, -np.inf)
        return self._frozen().logpdf(x)

    def logsf(self, x):
        """Log survivor function ``log P(T > x)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "constant":
            return np.where(x < self.mean, 0.0, -np.inf)
        return self._frozen().logsf(x)

    def to_dict(self):
        d = {"kind": self.kind, "mean": self.mean}
        if self.kind == "gamma":
            d["shape"] = self.shape
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d.get("kind", "constant"), float(d["mean"]), float(d.get("shape", 1.0)))


@dataclass(frozen=True)
class EpidemicParams:
    """Contact rates and period distributions.

    ``lambda_G`` lists the group rates of rate classes ``1..K``; class 0
    (the dummy group) always has rate zero.
    """

    lambda_H: float
    lambda_G: tuple
    lambda_C: float
    latent: PeriodDistribution = field(default_factory=lambda: PeriodDistribution.constant(1.0))
    infectious: PeriodDistribution = field(default_factory=lambda: PeriodDistribution.constant(1.0))

    def __post_init__(self):
        lg = np.atleast_1d(np.asarray(self.lambda_G, dtype=float))
        object.__setattr__(self, "lambda_G", tuple(float(x) for x in lg))
        rates = [self.lambda_H, self.lambda_C, *self.lambda_G]
        if not all(np.isfinite(r) and r >= 0 for r in rates):
            raise ValueError(f"contact rates must be finite and non-negative, got {rates}")
        if not self.infectious.mean > 0:
            raise ValueError("infectious period must have a positive mean")

    @property
    def mu(self) -> float:
        return self.infectious.mean

    def class_rates(self) -> np.ndarray:
        """Group rate indexed by rate class, entry 0 being the dummy class."""
        return np.concatenate([[0.0], self.lambda_G])

    def check(self, pop: PopulationStructure):
        if len(self.lambda_G) < pop.n_rate_classes:
            raise ValueError(
                f"population has {pop.n_rate_classes} rate classes but "
                f"{len(self.lambda_G)} group rates were given"
            )


@dataclass(frozen=True, eq=False)
class EventLog:
    """Complete record of an outbreak, one row per ever-infected individual.

    Rows are sorted by infection time. ``infector`` is ``EXTERNAL`` (-1)
    for initial cases. ``t_obs`` is the end of the observation window.
    """

    id: np.ndarray
    household: np.ndarray
    group: np.ndarray
    t_inf: np.ndarray
    lat_dur: np.ndarray
    inf_dur: np.ndarray
    infector: np.ndarray
    t_obs: float

    COLUMNS = ("id", "household", "group", "t_inf", "lat_dur", "inf_dur", "infector")

    def __post_init__(self):
        ints = ("id", "household", "group", "infector")
        cols = {c: np.asarray(getattr(self, c), dtype=np.int64 if c in ints else float)
                for c in self.COLUMNS}
        order = np.lexsort((cols["id"], cols["t_inf"]))
        for c, a in cols.items():
            a = np.ascontiguousarray(a[order])
            a.setflags(write=False)
            object.__setattr__(self, c, a)
        object.__setattr__(self, "t_obs", float(self.t_obs))
        if len(set(self.id.tolist())) != self.id.size:
            raise ValueError("an individual appears more than once in the event log")
        for c in ("t_inf", "lat_dur", "inf_dur"):
            a = getattr(self, c)
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise ValueError(f"{c} must be finite and non-negative")

    def __len__(self):
        return int(self.id.size)

    def __eq__(self, other):
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.t_obs == other.t_obs and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in self.COLUMNS
        )

    __hash__ = None

    @property
    def onset(self):
        return self.t_inf + self.lat_dur

    @property
    def removal(self):
        return self.t_inf + self.lat_dur + self.inf_dur

    @property
    def is_initial(self):
        return self.infector == EXTERNAL

    @classmethod
    def empty(cls, t_obs=0.0):
        z = np.zeros(0)
        return cls(z, z, z, z, z, z, z, t_obs)

    def truncated(self, t):
        """The log as seen with observation window ``[0, t]``."""
        return EventLog(*(getattr(self, c) for c in self.COLUMNS), t)

    def compartment_counts(self, times, N):
        """S, E, I, R counts (columns) at the given times (right-continuous)."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        def count(edge):
            return np.searchsorted(np.sort(edge), times, side="right")
        infected = count(self.t_inf)
        onset = count(self.onset)
        removed = count(self.removal)
        return np.column_stack([N - infected, infected - onset, onset - removed, removed])

    def check_infectors(self):
        """Raise if some infector was not infective when its victim was infected."""
        pos = {int(i): k for k, i in enumerate(self.id)}
        for k in np.flatnonzero(~self.is_initial):
            src = self.infector[k]
            if src not in pos:
                raise ValueError(f"infector {src} of {self.id[k]} is not in the log")
            j = pos[src]
            if not (self.onset[j] <= self.t_inf[k] < self.removal[j]):
                raise ValueError(f"{src} was not infective when it infected {self.id[k]}")

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in zip(*(getattr(self, c) for c in self.COLUMNS)):
            w.writerow([int(row[0]), int(row[1]), int(row[2]),
                        repr(float(row[3])), repr(float(row[4])), repr(float(row[5])), int(row[6])])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, t_obs=None):
        """Read a log written by :meth:`to_csv`.

        ``t_obs`` defaults to the last removal time, i.e. the whole outbreak
        was observed.
        """
        text = source if "\n" in str(source) else Path(source).read_text()
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or tuple(reader.fieldnames) != cls.COLUMNS:
            raise ValueError(f"event log header must be {','.join(cls.COLUMNS)}")
        rows = list(reader)
        cols = {c: [r[c] for r in rows] for c in cls.COLUMNS}
        ints = ("id", "household", "group", "infector")
        arrays = [np.array([int(v) for v in cols[c]], dtype=np.int64) if c in ints
                  else np.array([float(v) for v in cols[c]]) for c in cls.COLUMNS]
        if t_obs is None:
            t_obs = float(np.max(arrays[3] + arrays[4] + arrays[5])) if rows else 0.0
        return cls(*arrays, t_obs)


def replicate_rng(seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent generator for one replicate of a seeded experiment."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(replicate),)))


class _Membership:
    # CSR-style member lists for households and groups
    def __init__(self, labels, size):
        order = np.argsort(labels, kind="stable")
        counts = np.bincount(labels, minlength=size)
        self.members = order
        self.start = np.concatenate([[0], np.cumsum(counts)])

    def __call__(self, label):
        return self.members[self.start[label]:self.start[label + 1]]


def simulate(pop: PopulationStructure, params: EpidemicParams, init: InitialCondition,
             seed: int = 0, replicate: int = 0, rng: np.random.Generator | None = None) -> EventLog:
    """Simulate one outbreak until no exposed or infective individuals remain.

    Parameters
    ----------
    pop, params, init
        Population, model parameters and initial cases.
    seed, replicate
        Together select the random stream (see :func:`replicate_rng`).
    rng
        Explicit generator; overrides ``seed`` and ``replicate``.

    Returns
    -------
    EventLog
        The complete record with ``t_obs`` at the last removal.
    """
    params.check(pop)
    init.check(pop)
    if rng is None:
        rng = replicate_rng(seed, replicate)

    N = pop.N
    households = _Membership(pop.household, pop.n_households + 1)
    groups = _Membership(pop.group, pop.n_groups + 1)
    group_rate = params.class_rates()[pop.group_class][pop.group]
    lam_H, lam_C = params.lambda_H, params.lambda_C

    state = np.full(N, SUSCEPTIBLE, dtype=np.int8)
    t_inf = np.full(N, np.nan)
    lat = np.zeros(N)
    dur = np.zeros(N)
    infector = np.full(N, EXTERNAL, dtype=np.int64)
    infected = []

    heap = []
    seq = 0

    def push(t, kind, a, b=-1):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, a, b))
        seq += 1

    def infect(v, t, src, latent):
        state[v] = EXPOSED
        t_inf[v] = t
        lat[v] = latent
        dur[v] = params.infectious.sample(rng)
        infector[v] = src
        infected.append(v)
        push(t + latent, _ONSET, v)

    for v in init.initially_infective:
        infect(v, 0.0, EXTERNAL, 0.0)
    for v in init.initially_exposed:
        infect(v, 0.0, EXTERNAL, float(params.latent.sample(rng)))

    t_end = 0.0
    while heap:
        t, _, kind, a, b = heapq.heappop(heap)
        t_end = t
        if kind == _CONTACT:
            if state[b] == SUSCEPTIBLE:
                infect(b, t, a, float(params.latent.sample(rng)))
        elif kind == _ONSET:
            state[a] = INFECTIVE
            T = dur[a]
            push(t + T, _REMOVAL, a)
            for v, tc in _contacts(a, T, rng, households, groups, pop, group_rate[a],
                                   lam_H, lam_C, N, state):
                push(t + tc, _CONTACT, a, v)
        else:
            state[a] = REMOVED

    ids = np.array(infected, dtype=np.int64)
    return EventLog(ids, pop.household[ids], pop.group[ids], t_inf[ids], lat[ids], dur[ids],
                    infector[ids], t_end)


def _contacts(u, T, rng, households, groups, pop, lam_G, lam_H, lam_C, N, state):
    """Earliest contact offset from ``u`` to every currently susceptible target."""
    first = {}

    def offer(targets):
        if targets.size == 0:
            return
        offsets = rng.random(targets.size) * T
        for v, s in zip(targets.tolist(), offsets.tolist()):
            if v != u and state[v] == SUSCEPTIBLE and (v not in first or s < first[v]):
                first[v] = s

    if lam_H > 0:
        mates = households(pop.household[u])
        counts = rng.poisson(lam_H * T, mates.size)
        offer(np.repeat(mates, counts))
    if lam_G > 0:
        members = groups(pop.group[u])
        k = rng.poisson(lam_G * T)
        if k:
            offer(members[rng.integers(0, members.size, k)])
    if lam_C > 0:
        k = rng.poisson(lam_C * T)
        if k:
            offer(rng.integers(0, N, k))
    return sorted(first.items(), key=lambda kv: (kv[1], kv[0]))


def simulate_many(pop, params, init, seed, replicates):
    """Yield ``replicates`` independent event logs from one seed."""
    if int(replicates) != replicates or replicates < 1:
        raise ValueError(f"replicate count must be a positive integer, got {replicates}")
    for r in range(int(replicates)):
        yield simulate(pop, params, init, seed=seed, replicate=r)


@dataclass(frozen=True, eq=False)
class FinalSizeData:
    """Ever-infected counts per (household, group) cell.

    Each cell groups the members of one household that belong to one
    group; in the village layout a household is a single cell, in the
    school/workplace layout a household splits into its children, female
    and male.
    """

    pop: PopulationStructure
    cell_household: np.ndarray
    cell_group: np.ndarray
    cell_size: np.ndarray
    cell_infected: np.ndarray

    def __post_init__(self):
        for c in ("cell_household", "cell_group", "cell_size", "cell_infected"):
            a = np.asarray(getattr(self, c), dtype=np.int64)
            a.setflags(write=False)
            object.__setattr__(self, c, a)
        if np.any(self.cell_infected < 0) or np.any(self.cell_infected > self.cell_size):
            raise ValueError("infected counts must lie between 0 and the cell size")

    @classmethod
    def from_infected(cls, pop: PopulationStructure, infected: np.ndarray):
        """Build from a boolean ever-infected indicator per individual."""
        infected = np.asarray(infected, dtype=bool)
        if infected.shape != (pop.N,):
            raise ValueError("infected indicator must have one entry per individual")
        key = pop.household.astype(np.int64) * (pop.n_groups + 1) + pop.group
        cells, inv = np.unique(key, return_inverse=True)
        size = np.bincount(inv)
        inf = np.bincount(inv, weights=infected).astype(np.int64)
        return cls(pop, cells // (pop.n_groups + 1), cells % (pop.n_groups + 1), size, inf)

    def household_totals(self) -> np.ndarray:
        """Infected count per household, indexed by household id (entry 0 unused)."""
        return np.bincount(self.cell_household, weights=self.cell_infected,
                           minlength=self.pop.n_households + 1).astype(np.int64)

    def group_totals(self) -> np.ndarray:
        """Infected count Z_j per group id 0..J."""
        return np.bincount(self.cell_group, weights=self.cell_infected,
                           minlength=self.pop.n_groups + 1).astype(np.int64)

    @property
    def total(self) -> int:
        return int(self.cell_infected.sum())

    def to_csv(self, path=None, by_role=None):
        """Write ``household,infected`` or, for school/workplace layouts,
        ``household,infected_children,infected_females,infected_males``.

        ``by_role`` defaults to the role format whenever the layout has
        schools and workplaces.
        """
        if by_role is None:
            by_role = bool(self.pop.groups_of_kind("school")) and bool(self.pop.groups_of_kind("workplace"))
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if by_role:
            triples = self.role_counts()
            w.writerow(["household", "infected_children", "infected_females", "infected_males"])
            for h, (c, f, m) in enumerate(triples, start=1):
                w.writerow([h, int(c), int(f), int(m)])
        else:
            w.writerow(["household", "infected"])
            for h, k in enumerate(self.household_totals()[1:], start=1):
                w.writerow([h, int(k)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def role_counts(self) -> np.ndarray:
        """(children, female, male) infected counts per household, shape (n, 3)."""
        roles = household_roles(self.pop)
        mask = self.individual_mask()
        return np.column_stack([
            mask[roles["children"]].sum(axis=1), mask[roles["female"]], mask[roles["male"]],
        ]).astype(np.int64)

    def individual_mask(self) -> np.ndarray:
        """An ever-infected indicator consistent with the cell counts.

        Members of a cell are interchangeable, so the first ``k`` members
        (by id) of a cell with ``k`` infected are marked.
        """
        pop = self.pop
        key = pop.household.astype(np.int64) * (pop.n_groups + 1) + pop.group
        lookup = dict(zip((self.cell_household * (pop.n_groups + 1) + self.cell_group).tolist(),
                          self.cell_infected.tolist()))
        mask = np.zeros(pop.N, dtype=bool)
        used = {}
        for i, k in enumerate(key.tolist()):
            c = used.get(k, 0)
            if c < lookup.get(k, 0):
                mask[i] = True
                used[k] = c + 1
        return mask

    @classmethod
    def from_csv(cls, source, pop: PopulationStructure):
        text = source if "\n" in str(source) else Path(source).read_text()
        reader = csv.DictReader(io.StringIO(text))
        fields = tuple(reader.fieldnames or ())
        rows = list(reader)
        hh = np.array([int(r["household"]) for r in rows], dtype=np.int64)
        if np.any(hh < 1) or np.any(hh > pop.n_households) or len(set(hh.tolist())) != hh.size:
            raise ValueError("final-size file has unknown or repeated households")
        mask = np.zeros(pop.N, dtype=bool)
        if fields == ("household", "infected_children", "infected_females", "infected_males"):
            roles = household_roles(pop)
            for h, r in zip(hh, rows):
                c, f, m = (int(r[k]) for k in fields[1:])
                if not (0 <= c <= 2 and 0 <= f <= 1 and 0 <= m <= 1):
                    raise ValueError(f"household {h}: counts out of range")
                mask[roles["children"][h - 1, :c]] = True
                mask[roles["female"][h - 1]] = bool(f)
                mask[roles["male"][h - 1]] = bool(m)
        elif fields == ("household", "infected"):
            for h, r in zip(hh, rows):
                members = pop.members_of_household(h)
                k = int(r["infected"])
                if len(np.unique(pop.group[members])) > 1:
                    raise ValueError(
                        f"household {h} spans several groups; a per-household count is ambiguous"
                    )
                if not 0 <= k <= members.size:
                    raise ValueError(f"household {h}: count {k} out of range")
                mask[members[:k]] = True
        else:
            raise ValueError(f"unrecognised final-size header {','.join(fields)}")
        return cls.from_infected(pop, mask)


def final_size(log: EventLog, pop: PopulationStructure) -> FinalSizeData:
    """Per-household and per-group ever-infected counts of an outbreak."""
    if len(log) and (log.id.min() < 0 or log.id.max() >= pop.N):
        raise ValueError("event log refers to individuals outside the population")
    infected = np.zeros(pop.N, dtype=bool)
    infected[log.id] = True
    return FinalSizeData.from_infected(pop, infected)
