"""Population structures with household, group and community mixing.

Every individual belongs to exactly one household and one group. Group 0
is the dummy group for individuals without a group; its contact rate is
always zero. Individuals are indexed densely ``0..N-1``, households are
numbered ``1..n`` and groups ``0..J``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "PopulationStructure",
    "InitialCondition",
    "PopulationError",
    "build_villages",
    "build_schools_workplaces",
    "load_population",
    "save_population",
    "population_to_dict",
    "population_from_dict",
    "household_roles",
]


class PopulationError(ValueError):
    """Raised for malformed or inconsistent population structures."""


def _frozen(a, dtype=np.int64):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PopulationStructure:
    """Household and group membership of every individual.

    Parameters
    ----------
    household : array of int, shape (N,)
        Household id (1..n) of each individual.
    group : array of int, shape (N,)
        Group id (0..J) of each individual.
    group_kind : dict
        Group id -> label such as ``"village"`` or ``"school"``.
        Group 0 is labelled ``"none"``.
    rate_class : dict
        Group id -> rate class. Class 0 is reserved for group 0 and has
        rate zero; groups sharing a class share a contact rate.
    """

    household: np.ndarray
    group: np.ndarray
    group_kind: dict = field(default_factory=dict)
    rate_class: dict = field(default_factory=dict)

    def __post_init__(self):
        hh = _frozen(self.household)
        gr = _frozen(self.group)
        object.__setattr__(self, "household", hh)
        object.__setattr__(self, "group", gr)
        kinds = {int(k): str(v) for k, v in self.group_kind.items()}
        classes = {int(k): int(v) for k, v in self.rate_class.items()}
        kinds.setdefault(0, "none")
        classes.setdefault(0, 0)
        object.__setattr__(self, "group_kind", kinds)
        object.__setattr__(self, "rate_class", classes)
        self._validate()

    def _validate(self):
        if self.household.ndim != 1 or self.household.shape != self.group.shape:
            raise PopulationError("household and group arrays must be 1-d and of equal length")
        if self.household.size == 0:
            raise PopulationError("population must contain at least one individual")
        if self.household.min() < 1:
            raise PopulationError("household ids must be >= 1")
        if self.group.min() < 0:
            raise PopulationError("group ids must be >= 0")
        present = np.unique(self.household)
        if present.size != present[-1]:
            raise PopulationError("household ids must be exactly 1..n with no gaps")
        if self.rate_class[0] != 0:
            raise PopulationError("group 0 must map to rate class 0")
        for g in np.unique(self.group):
            g = int(g)
            if g not in self.rate_class:
                raise PopulationError(f"group {g} has no rate class")
        for g, c in self.rate_class.items():
            if g != 0 and c < 1:
                raise PopulationError(f"group {g} uses reserved rate class {c}")
        if set(self.group_kind) != set(self.rate_class):
            raise PopulationError("group_kind and rate_class must describe the same groups")
        sizes = self.group_sizes
        for g in self.rate_class:
            if g != 0 and sizes[g] == 0:
                raise PopulationError(f"group {g} is declared but has no members")

    @property
    def N(self) -> int:
        return int(self.household.size)

    @property
    def n_households(self) -> int:
        return int(self.household.max())

    @property
    def n_groups(self) -> int:
        """Largest group id J (group 0 not counted)."""
        return max(self.rate_class)

    @property
    def n_rate_classes(self) -> int:
        """Number of classes with a free contact rate (class 0 excluded)."""
        return max(self.rate_class.values())

    @property
    def household_sizes(self) -> np.ndarray:
        """Member counts indexed by household id; entry 0 is unused."""
        return np.bincount(self.household, minlength=self.n_households + 1)

    @property
    def group_sizes(self) -> np.ndarray:
        """Member counts n_j indexed by group id 0..J."""
        return np.bincount(self.group, minlength=self.n_groups + 1)

    @property
    def group_class(self) -> np.ndarray:
        """Rate class of every group id 0..J (0 for undeclared ids)."""
        out = np.zeros(self.n_groups + 1, dtype=np.int64)
        for g, c in self.rate_class.items():
            out[g] = c
        return out

    def members_of_household(self, h: int) -> np.ndarray:
        return np.flatnonzero(self.household == h)

    def members_of_group(self, g: int) -> np.ndarray:
        return np.flatnonzero(self.group == g)

    def groups_of_kind(self, kind: str) -> list[int]:
        """Sorted ids of all groups with the given kind label."""
        return sorted(g for g, k in self.group_kind.items() if k == kind and g != 0)

    def __eq__(self, other):
        if not isinstance(other, PopulationStructure):
            return NotImplemented
        return (
            np.array_equal(self.household, other.household)
            and np.array_equal(self.group, other.group)
            and self.group_kind == other.group_kind
            and self.rate_class == other.rate_class
        )

    __hash__ = None


@dataclass(frozen=True)
class InitialCondition:
    """Individuals that are exposed or infective at time 0."""

    initially_exposed: tuple = ()
    initially_infective: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "initially_exposed", tuple(int(i) for i in self.initially_exposed))
        object.__setattr__(self, "initially_infective", tuple(int(i) for i in self.initially_infective))
        ex, inf = set(self.initially_exposed), set(self.initially_infective)
        if len(ex) != len(self.initially_exposed) or len(inf) != len(self.initially_infective):
            raise PopulationError("initial condition lists contain duplicates")
        if ex & inf:
            raise PopulationError("an individual cannot be both initially exposed and infective")
        if not ex and not inf:
            raise PopulationError("initial condition must contain at least one individual")

    def check(self, pop: PopulationStructure):
        for i in self.initially_exposed + self.initially_infective:
            if not 0 <= i < pop.N:
                raise PopulationError(f"initial individual {i} not in population")


def build_villages(m: int, households_per_village: int, household_size: int) -> PopulationStructure:
    """Equal-sized villages of equal-sized households sharing one group rate.

    Household ``h`` (1-based) lives in village ``ceil(h / households_per_village)``
    and all its members belong to that village's group.
    """
    for name, v in (("m", m), ("households_per_village", households_per_village),
                    ("household_size", household_size)):
        if int(v) != v or v < 1:
            raise PopulationError(f"{name} must be a positive integer, got {v!r}")
    n = m * households_per_village
    household = np.repeat(np.arange(1, n + 1), household_size)
    group = (household - 1) // households_per_village + 1
    kinds = {j: "village" for j in range(1, m + 1)}
    classes = {j: 1 for j in range(1, m + 1)}
    return PopulationStructure(household, group, kinds, classes)


def build_schools_workplaces() -> PopulationStructure:
    """The fixed 500-household school/workplace layout.

    Each household has two children followed by two adults. School ``i``
    (group id ``i``, 1..10) holds the children of households
    ``50(i-1)+1 .. 50i``. For household ``h`` with ``k = ceil(h/25)`` the
    first adult works at workplace ``k`` and the second at workplace
    ``20+k``; workplace ``w`` has group id ``10+w``. Schools are rate
    class 1 and workplaces rate class 2.
    """
    n, n_schools, n_work = 500, 10, 40
    household = np.repeat(np.arange(1, n + 1), 4)
    hh = np.arange(1, n + 1)
    school = (hh - 1) // 50 + 1
    k = (hh - 1) // 25 + 1
    work_f = n_schools + k
    work_m = n_schools + 20 + k
    group = np.column_stack([school, school, work_f, work_m]).ravel()
    kinds = {g: "school" for g in range(1, n_schools + 1)}
    kinds.update({g: "workplace" for g in range(n_schools + 1, n_schools + n_work + 1)})
    classes = {g: (1 if kinds[g] == "school" else 2) for g in kinds}
    return PopulationStructure(household, group, kinds, classes)


def household_roles(pop: PopulationStructure) -> dict:
    """Children, female and male of every household in a school/workplace layout.

    Children are the two members in ``"school"`` groups; of the two members
    in ``"workplace"`` groups the one at the lower-numbered workplace is
    labelled female. Returns arrays indexed by ``household - 1``:
    ``children`` (n, 2), ``female`` (n,), ``male`` (n,).
    """
    n = pop.n_households
    kind = np.array([pop.group_kind.get(int(g), "none") for g in range(pop.n_groups + 1)])
    member_kind = kind[pop.group]
    order = np.argsort(pop.household, kind="stable")
    children = np.full((n, 2), -1, dtype=np.int64)
    adults = np.full((n, 2), -1, dtype=np.int64)
    nc = np.zeros(n, dtype=np.int64)
    na = np.zeros(n, dtype=np.int64)
    for i in order:
        h = pop.household[i] - 1
        if member_kind[i] == "school":
            if nc[h] == 2:
                raise PopulationError(f"household {h + 1} has more than two children")
            children[h, nc[h]] = i
            nc[h] += 1
        elif member_kind[i] == "workplace":
            if na[h] == 2:
                raise PopulationError(f"household {h + 1} has more than two adults")
            adults[h, na[h]] = i
            na[h] += 1
        else:
            raise PopulationError(f"individual {i} is neither in a school nor a workplace")
    if np.any(nc != 2) or np.any(na != 2):
        raise PopulationError("every household needs exactly two children and two adults")
    swap = pop.group[adults[:, 0]] > pop.group[adults[:, 1]]
    adults[swap] = adults[swap][:, ::-1]
    return {"children": children, "female": adults[:, 0], "male": adults[:, 1]}


def population_to_dict(pop: PopulationStructure) -> dict:
    individuals = [
        {"id": i, "household": int(h), "group": int(g)}
        for i, (h, g) in enumerate(zip(pop.household, pop.group))
    ]
    groups = [
        {"id": g, "kind": pop.group_kind[g], "rate_class": pop.rate_class[g]}
        for g in sorted(pop.rate_class)
    ]
    return {"individuals": individuals, "groups": groups}


def _as_int(value, what):
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise PopulationError(f"{what} must be an integer, got {value!r}")
    return int(value)


def population_from_dict(doc: dict) -> PopulationStructure:
    """Validate a decoded population document and build the structure.

    Individual labels may be arbitrary; integer labels are sorted,
    anything else is taken in order of appearance. Household labels are
    mapped to 1..n in sorted order. Missing group ids mean group 0.
    """
    if not isinstance(doc, dict) or "individuals" not in doc:
        raise PopulationError("population document needs an 'individuals' list")
    rows = doc["individuals"]
    if not isinstance(rows, list) or not rows:
        raise PopulationError("'individuals' must be a non-empty list")

    groups = doc.get("groups", [])
    kinds, classes = {}, {}
    for row in groups:
        try:
            g = _as_int(row["id"], "group id")
        except KeyError as exc:
            raise PopulationError("group entry without 'id'") from exc
        if g in classes:
            raise PopulationError(f"duplicate group id {g}")
        kinds[g] = str(row.get("kind", "none" if g == 0 else "group"))
        classes[g] = _as_int(row.get("rate_class", 0 if g == 0 else 1), "rate_class")
    if classes.get(0, 0) != 0:
        raise PopulationError("group 0 must have rate class 0")

    seen = {}
    for row in rows:
        if not isinstance(row, dict) or "id" not in row or "household" not in row:
            raise PopulationError(f"malformed individual entry {row!r}")
        label = row["id"]
        if label in seen:
            raise PopulationError(f"duplicate individual id {label!r}")
        g = _as_int(row.get("group", 0), "group id")
        if g != 0 and g not in classes:
            raise PopulationError(f"individual {label!r} refers to unknown group {g}")
        hlabel = row["household"]
        if hlabel is None or isinstance(hlabel, (dict, list)):
            raise PopulationError(f"individual {label!r} has invalid household {hlabel!r}")
        seen[label] = (hlabel, g)

    labels = list(seen)
    if all(isinstance(x, (int, np.integer)) and not isinstance(x, bool) for x in labels):
        labels.sort()
    hlabels = sorted({v[0] for v in seen.values()}, key=lambda x: (str(type(x)), x))
    hmap = {h: i + 1 for i, h in enumerate(hlabels)}
    household = [hmap[seen[x][0]] for x in labels]
    group = [seen[x][1] for x in labels]
    return PopulationStructure(np.array(household), np.array(group), kinds, classes)


def save_population(pop: PopulationStructure, path) -> None:
    Path(path).write_text(json.dumps(population_to_dict(pop), indent=1))


def load_population(source) -> PopulationStructure:
    """Load a population from a JSON file path, JSON text or decoded dict."""
    if isinstance(source, dict):
        return population_from_dict(source)
    text = str(source)
    if not text.lstrip().startswith("{"):
        text = Path(text).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PopulationError(f"malformed population document: {exc}") from exc
    return population_from_dict(doc)
