import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import stats

from oracles import sellke_final_size
from threelevel.population import InitialCondition, build_schools_workplaces, build_villages
from threelevel.simulate import (EXTERNAL, EpidemicParams, EventLog, FinalSizeData,
                                 PeriodDistribution, final_size, replicate_rng, simulate,
                                 simulate_many)

FIRST = InitialCondition(initially_infective=[0])


def test_zero_rates_only_initial_case():
    pop = build_villages(2, 3, 2)
    log = simulate(pop, EpidemicParams(0, (0,), 0), FIRST, seed=3)
    assert len(log) == 1
    assert log.id[0] == 0 and log.infector[0] == EXTERNAL and log.t_inf[0] == 0.0
    assert final_size(log, pop).total == 1


def test_isolated_pair_escape_probability():
    pop = build_villages(1, 1, 2)
    params = EpidemicParams(0.5, (0,), 0)
    rng = np.random.default_rng(5)
    n = 100_000
    hits = sum(len(simulate(pop, params, FIRST, rng=rng)) == 2 for _ in range(n))
    p = 1 - np.exp(-0.5)
    assert abs(hits / n - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_determinism_bit_for_bit():
    pop = build_villages(2, 20, 2)
    params = EpidemicParams(0.4, (1.3,), 0.2, infectious=PeriodDistribution.exponential(1.0))
    a = simulate(pop, params, FIRST, seed=42, replicate=7)
    b = simulate(pop, params, FIRST, seed=42, replicate=7)
    assert a.to_csv() == b.to_csv()
    c = simulate(pop, params, FIRST, seed=42, replicate=8)
    assert a.to_csv() != c.to_csv() or len(a) == 1


def test_replicate_streams_independent_of_order():
    pop = build_villages(1, 10, 2)
    params = EpidemicParams(0.4, (1.3,), 0.2)
    logs = list(simulate_many(pop, params, FIRST, seed=9, replicates=4))
    assert logs[2] == simulate(pop, params, FIRST, seed=9, replicate=2)


def test_replicate_count_validated():
    pop = build_villages(1, 1, 2)
    with pytest.raises(ValueError):
        list(simulate_many(pop, EpidemicParams(0, (0,), 0), FIRST, seed=0, replicates=0))


def test_missing_group_rates():
    with pytest.raises(ValueError):
        simulate(build_schools_workplaces(), EpidemicParams(0.3, (1.0,), 0.1), FIRST)


def test_negative_rate():
    with pytest.raises(ValueError):
        EpidemicParams(-0.1, (1.0,), 0.1)


@given(st.integers(0, 10_000), st.sampled_from(["constant", "exponential", "gamma"]))
def test_log_invariants(seed, kind):
    pop = build_villages(2, 15, 2)
    period = {"constant": PeriodDistribution.constant(1.0),
              "exponential": PeriodDistribution.exponential(1.0),
              "gamma": PeriodDistribution.gamma(1.0, 3.0)}[kind]
    params = EpidemicParams(0.5, (1.5,), 0.3, latent=period, infectious=period)
    log = simulate(pop, params, FIRST, seed=seed)
    log.check_infectors()
    assert np.all(np.diff(log.t_inf) >= 0)
    assert log.t_obs == pytest.approx(log.removal.max())
    assert np.all(log.household == pop.household[log.id])
    assert np.all(log.group == pop.group[log.id])
    times = np.linspace(0, log.t_obs, 9)
    counts = log.compartment_counts(times, pop.N)
    assert np.all(counts.sum(axis=1) == pop.N) and np.all(counts >= 0)
    assert counts[-1, 3] == len(log)


def test_initially_exposed_have_latent_period():
    pop = build_villages(1, 2, 2)
    params = EpidemicParams(0, (0,), 0, latent=PeriodDistribution.constant(2.0))
    log = simulate(pop, params, InitialCondition(initially_exposed=[1]), seed=0)
    assert log.lat_dur[0] == 2.0 and log.onset[0] == 2.0


def test_final_size_matches_sellke_oracle():
    # fixed infectious period: the final size law is that of the Sellke construction
    pop = build_villages(2, 15, 2)
    params = EpidemicParams(0.4, (1.2,), 0.3)
    n = 2000
    sim = [len(simulate(pop, params, FIRST, seed=1, replicate=r)) for r in range(n)]
    rng = np.random.default_rng(2)
    rates = np.array([0.0, 1.2, 1.2])
    ref = [sellke_final_size(pop.household, pop.group, rates, 0.4, 0.3, 1.0, [0], rng).sum()
           for _ in range(n)]
    assert stats.ks_2samp(sim, ref).pvalue > 1e-3


class TestEventLogIO:
    def log(self):
        return simulate(build_villages(2, 10, 2), EpidemicParams(0.5, (2.0,), 0.3), FIRST, seed=4)

    def test_csv_round_trip(self, tmp_path):
        log = self.log()
        log.to_csv(tmp_path / "log.csv")
        assert EventLog.from_csv(tmp_path / "log.csv") == log

    def test_bad_header(self):
        with pytest.raises(ValueError):
            EventLog.from_csv("a,b\n1,2\n")

    def test_duplicate_individual(self):
        with pytest.raises(ValueError):
            EventLog([1, 1], [1, 1], [0, 0], [0, 1], [0, 0], [1, 1], [-1, 1], 3.0)

    def test_bad_infector(self):
        log = EventLog([0, 1], [1, 1], [0, 0], [0.0, 5.0], [0, 0], [1, 1], [-1, 0], 6.0)
        with pytest.raises(ValueError):
            log.check_infectors()

    def test_truncated(self):
        log = self.log()
        assert log.truncated(0.5).t_obs == 0.5 and len(log.truncated(0.5)) == len(log)


class TestFinalSizeData:
    def test_single_case_in_village_one(self):
        pop = build_villages(3, 4, 2)
        log = simulate(pop, EpidemicParams(0, (0,), 0), FIRST)
        Z = final_size(log, pop).group_totals()
        assert list(Z) == [0, 1, 0, 0]

    def test_hand_built(self):
        pop = build_villages(1, 2, 2)
        log = EventLog([0, 1, 3], [1, 1, 2], [1, 1, 1], [0, 1, 1.5], [0, 0, 0], [1, 1, 1], [-1, 0, 0], 3)
        fs = final_size(log, pop)
        assert list(fs.household_totals()[1:]) == [2, 1]
        assert fs.to_csv() == "household,infected\n1,2\n2,1\n"

    def test_role_csv_round_trip(self):
        pop = build_schools_workplaces()
        log = simulate(pop, EpidemicParams(0.3, (1.2, 0.6), 0.05), FIRST, seed=11)
        fs = final_size(log, pop)
        back = FinalSizeData.from_csv(fs.to_csv(), pop)
        assert np.array_equal(back.role_counts(), fs.role_counts())
        assert back.total == len(log)

    def test_out_of_population(self):
        with pytest.raises(ValueError):
            final_size(EventLog([9], [1], [0], [0], [0], [1], [-1], 1), build_villages(1, 1, 2))

    def test_csv_unknown_household(self):
        with pytest.raises(ValueError):
            FinalSizeData.from_csv("household,infected\n7,1\n", build_villages(1, 2, 2))


class TestPeriods:
    @pytest.mark.parametrize("dist", [PeriodDistribution.constant(2.0),
                                      PeriodDistribution.exponential(2.0),
                                      PeriodDistribution.gamma(2.0, 4.0)])
    def test_sample_mean(self, dist):
        x = dist.sample(np.random.default_rng(0), size=40_000)
        assert x.mean() == pytest.approx(2.0, abs=0.05)
        assert PeriodDistribution.from_dict(dist.to_dict()) == dist

    def test_replicate_rng(self):
        assert replicate_rng(1, 2).random() == replicate_rng(1, 2).random()
        assert replicate_rng(1, 2).random() != replicate_rng(1, 3).random()


def test_schools_workplaces_major_outbreak_size():
    # compared with the Sellke construction rather than a fixed window
    pop = build_schools_workplaces()
    params = EpidemicParams(0.3, (1.2, 0.6), 0.05)
    sim = [len(simulate(pop, params, FIRST, seed=21, replicate=r)) for r in range(200)]
    rng = np.random.default_rng(21)
    rates = params.class_rates()[pop.group_class]
    ref = [sellke_final_size(pop.household, pop.group, rates, 0.3, 0.05, 1.0, [0], rng).sum()
           for _ in range(200)]
    sim, ref = np.array(sim), np.array(ref)
    a, b = sim[sim > 200], ref[ref > 200]
    se = np.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    assert abs(a.mean() - b.mean()) < 4 * se
