import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from threelevel.population import (InitialCondition, PopulationError, PopulationStructure,
                                   build_schools_workplaces, build_villages, household_roles,
                                   load_population, population_from_dict, population_to_dict,
                                   save_population)


class TestBuildVillages:
    def test_four_villages_of_pairs(self):
        pop = build_villages(4, 500, 2)
        assert (pop.N, pop.n_households, pop.n_groups) == (4000, 2000, 4)
        assert list(pop.group_sizes[1:]) == [1000] * 4
        assert pop.n_rate_classes == 1
        assert all(pop.group_kind[g] == "village" for g in range(1, 5))

    def test_minimal(self):
        pop = build_villages(1, 1, 1)
        assert (pop.N, pop.n_households, pop.n_groups) == (1, 1, 1)
        assert pop.group_sizes[1] == 1

    def test_small_arithmetic(self):
        pop = build_villages(2, 3, 2)
        assert (pop.N, pop.n_households) == (12, 6)
        assert list(pop.group_sizes[1:]) == [6, 6]

    @pytest.mark.parametrize("args", [(0, 1, 1), (1, 0, 1), (1, 1, 0), (-2, 3, 2), (1.5, 2, 2)])
    def test_rejects_non_positive(self, args):
        with pytest.raises(PopulationError):
            build_villages(*args)

    @given(st.integers(1, 5), st.integers(1, 6), st.integers(1, 4))
    def test_household_members_share_village(self, m, hpv, size):
        pop = build_villages(m, hpv, size)
        for h in range(1, pop.n_households + 1):
            assert len(set(pop.group[pop.members_of_household(h)].tolist())) == 1
        assert np.all(pop.group_sizes[1:] == pop.N // m)


class TestSchoolsWorkplaces:
    pop = build_schools_workplaces()

    def test_sizes(self):
        pop = self.pop
        assert (pop.N, pop.n_households) == (2000, 500)
        schools, work = pop.groups_of_kind("school"), pop.groups_of_kind("workplace")
        assert len(schools) == 10 and len(work) == 40
        assert all(pop.group_sizes[g] == 100 for g in schools)
        assert all(pop.group_sizes[g] == 25 for g in work)
        assert {pop.rate_class[g] for g in schools} == {1}
        assert {pop.rate_class[g] for g in work} == {2}

    def test_first_and_last_household(self):
        roles = household_roles(self.pop)
        g = self.pop.group
        # workplace w has group id 10 + w
        assert set(g[roles["children"][0]]) == {1}
        assert (g[roles["female"][0]] - 10, g[roles["male"][0]] - 10) == (1, 21)
        assert set(g[roles["children"][499]]) == {10}
        assert (g[roles["female"][499]] - 10, g[roles["male"][499]] - 10) == (20, 40)

    def test_structure_invariants(self):
        roles = household_roles(self.pop)
        g = self.pop.group
        assert np.all(g[roles["children"][:, 0]] == g[roles["children"][:, 1]])
        assert np.all(g[roles["female"]] != g[roles["male"]])


class TestSerialisation:
    def test_round_trip(self, tmp_path):
        pop = build_villages(2, 1, 2)
        save_population(pop, tmp_path / "pop.json")
        assert load_population(tmp_path / "pop.json") == pop

    def test_round_trip_schools(self):
        pop = build_schools_workplaces()
        assert population_from_dict(json.loads(json.dumps(population_to_dict(pop)))) == pop

    def test_missing_group_means_group_zero(self):
        doc = {"individuals": [{"id": "a", "household": 7}, {"id": "b", "household": 7, "group": 1}],
               "groups": [{"id": 1, "kind": "village", "rate_class": 1}]}
        pop = population_from_dict(doc)
        assert list(pop.group) == [0, 1]
        assert list(pop.household) == [1, 1]

    def test_individual_in_two_households(self):
        doc = {"individuals": [{"id": 0, "household": 1}, {"id": 0, "household": 2}]}
        with pytest.raises(PopulationError):
            population_from_dict(doc)

    def test_unknown_group(self):
        doc = {"individuals": [{"id": 0, "household": 1, "group": 3}], "groups": []}
        with pytest.raises(PopulationError):
            population_from_dict(doc)

    def test_group_zero_with_rate_class(self):
        doc = {"individuals": [{"id": 0, "household": 1}],
               "groups": [{"id": 0, "kind": "none", "rate_class": 2}]}
        with pytest.raises(PopulationError):
            population_from_dict(doc)

    def test_malformed_text(self):
        with pytest.raises(PopulationError):
            load_population("{not json")


class TestValidation:
    def test_household_gap(self):
        with pytest.raises(PopulationError):
            PopulationStructure([1, 3], [0, 0])

    def test_empty_declared_group(self):
        with pytest.raises(PopulationError):
            PopulationStructure([1], [0], {2: "village"}, {2: 1})

    def test_structure_is_read_only(self):
        pop = build_villages(1, 2, 2)
        with pytest.raises(ValueError):
            pop.household[0] = 5


class TestInitialCondition:
    def test_disjoint(self):
        with pytest.raises(PopulationError):
            InitialCondition([1], [1])

    def test_nonempty(self):
        with pytest.raises(PopulationError):
            InitialCondition([], [])

    def test_unknown_individual(self):
        with pytest.raises(PopulationError):
            InitialCondition(initially_infective=[10]).check(build_villages(1, 1, 2))
