import numpy as np
import pytest
from hypothesis import given, strategies as st

from threelevel.datasets import DATASET_1_1
from threelevel.likelihood import CompleteDataLikelihood
from threelevel.mcmc import (Chain, ChainConfig, componentwise_mh, diagnostics,
                             effective_sample_size, rates_to_transformed, rstar_school_workplace,
                             rstar_village, run_complete_chain, run_finalsize_chain, summarize)
from threelevel.population import InitialCondition, build_villages
from threelevel.pseudolik import VillageFinalSize
from threelevel.simulate import EpidemicParams, EventLog, simulate
from threelevel.threshold import rstar_example1

SHORT = ChainConfig(iterations=6000, burn_in=1000, thin=5, seed=1)


class _Target:
    def __init__(self, f, names):
        self.f, self.names = f, names

    def batch(self, X):
        return self.f(X)


class TestESS:
    def test_iid(self):
        x = np.random.default_rng(0).standard_normal(20_000)
        assert 0.8 * x.size <= effective_sample_size(x) <= 1.2 * x.size

    def test_ar1(self):
        rng = np.random.default_rng(1)
        n, rho = 100_000, 0.5
        x = np.empty(n)
        x[0] = rng.standard_normal()
        for t in range(1, n):
            x[t] = rho * x[t - 1] + np.sqrt(1 - rho ** 2) * rng.standard_normal()
        assert effective_sample_size(x) == pytest.approx(n * (1 - rho) / (1 + rho), rel=0.2)

    def test_constant(self):
        assert effective_sample_size(np.ones(100)) == 100


class TestSampler:
    def test_beta_target_uniform_proposals(self):
        t = _Target(lambda X: np.log(X[:, 0]) + 2 * np.log1p(-X[:, 0]), ["x"])  # Beta(2, 3)
        ch = run_finalsize_chain(t, ChainConfig(iterations=40_000, burn_in=2000, thin=2, seed=3))
        assert ch.samples.mean() == pytest.approx(0.4, abs=0.01)
        assert ch.samples.std() == pytest.approx(0.2, abs=0.01)

    def test_normal_target_random_walk(self):
        f = lambda X: -0.5 * ((X - 2.0) ** 2).sum(axis=1)
        cfg = ChainConfig(iterations=40_000, burn_in=4000, thin=2, seed=4)
        ch = componentwise_mh(f, np.zeros((1, 2)), cfg, proposal="rw")
        assert np.allclose(ch.samples.mean(axis=0), 2.0, atol=0.06)
        assert np.allclose(ch.samples.std(axis=0), 1.0, atol=0.05)
        # tuned towards the target acceptance rate
        assert np.all(np.abs(ch.acceptance - 0.44) < 0.08)

    def test_sticky_chain(self):
        x0 = np.array([[0.5]])
        f = lambda X: np.where(X[:, 0] == 0.5, 0.0, -np.inf)
        ch = componentwise_mh(f, x0, SHORT)
        assert ch.acceptance[0] == 0.0
        assert np.all(ch.samples == 0.5)
        assert diagnostics(ch)["acceptance"]["x0"] == 0.0

    def test_determinism(self):
        d = VillageFinalSize(DATASET_1_1)
        a = run_finalsize_chain(d, SHORT)
        b = run_finalsize_chain(d, SHORT)
        assert np.array_equal(a.samples, b.samples)

    def test_chain_independent_of_companions(self):
        d = VillageFinalSize(DATASET_1_1)
        one = run_finalsize_chain(d, SHORT)
        three = run_finalsize_chain(d, ChainConfig(iterations=6000, burn_in=1000, thin=5, seed=1, chains=3))
        assert np.array_equal(three.per_chain()[0], one.samples)
        assert three.n_chains == 3 and len(three) == 3 * SHORT.kept

    def test_kept_count(self):
        ch = run_finalsize_chain(VillageFinalSize(DATASET_1_1), SHORT)
        assert len(ch) == SHORT.kept == 1000

    def test_zero_density_start(self):
        with pytest.raises(ValueError):
            componentwise_mh(lambda X: np.full(X.shape[0], -np.inf), np.zeros((1, 1)), SHORT)

    def test_init_outside_cube(self):
        with pytest.raises(ValueError):
            run_finalsize_chain(VillageFinalSize(DATASET_1_1), SHORT, init=[1.0, 0.5, 0.5])

    @pytest.mark.parametrize("kw", [dict(iterations=10, burn_in=10), dict(thin=0), dict(chains=0),
                                    dict(rw_sd=-1.0)])
    def test_config_validation(self, kw):
        with pytest.raises(ValueError):
            ChainConfig(**kw)

    def test_dataset_1_1_short_run(self):
        ch = run_finalsize_chain(VillageFinalSize(DATASET_1_1),
                                 ChainConfig(iterations=30_000, burn_in=3000, thin=5, seed=2))
        s = summarize(ch, rstar=rstar_village)
        assert s["p_H"]["mean"] == pytest.approx(0.277, abs=0.02)
        assert s["pi_G"]["mean"] == pytest.approx(0.238, abs=0.01)
        assert s["R_star"]["mean"] == pytest.approx(1.836, abs=0.03)


class TestCompleteChain:
    def test_prior_recovery_empty_log(self):
        lik = CompleteDataLikelihood(EventLog.empty(1.0), build_villages(1, 2, 2))
        cfg = ChainConfig(iterations=30_000, burn_in=2000, thin=1, seed=5)
        ch = run_complete_chain(lik, cfg)
        ess = diagnostics(ch)["ess"]
        for k, name in enumerate(lik.names):
            x = ch.samples[:, k]
            assert abs(x.mean() - 1.0) < 3 * x.std() / np.sqrt(ess[name])

    def test_posterior_near_truth(self):
        pop = build_villages(4, 100, 2)
        for rep in range(20):
            log = simulate(pop, EpidemicParams(0.3, (1.4,), 0.2), InitialCondition(initially_infective=[0]),
                           seed=8, replicate=rep)
            if len(log) > 100:
                break
        ch = run_complete_chain(CompleteDataLikelihood(log, pop),
                                ChainConfig(iterations=8000, burn_in=1000, thin=2, seed=0))
        m = ch.samples.mean(axis=0)
        sd = ch.samples.std(axis=0)
        assert np.all(np.abs(m - [0.3, 1.4, 0.2]) < 4 * sd)


class TestSummaries:
    def test_constant_chain_degenerate(self):
        ch = Chain(np.column_stack([np.ones(50), np.arange(50.0)]), ["a", "b"], np.zeros(2))
        s = summarize(ch)
        assert s.sd[0] == 0 and s.degenerate[0] and not s.degenerate[1]
        assert s.correlation("a", "b") == 0.0 and s.correlation("a", "a") == 1.0

    def test_anticorrelated(self):
        x = np.random.default_rng(0).standard_normal(500)
        s = summarize(Chain(np.column_stack([x, -x]), ["a", "b"], np.zeros(2)))
        assert s.correlation("a", "b") == pytest.approx(-1.0)

    def test_json_and_csv(self):
        x = np.random.default_rng(0).uniform(0.1, 0.9, (20, 3))
        ch = Chain(x, ["p_H", "pi_G", "pi_C"], np.full(3, 0.5))
        doc = summarize(ch, rstar=rstar_village).to_dict()
        assert set(doc["parameters"]) == {"p_H", "pi_G", "pi_C", "R_star"}
        text = ch.to_csv(rstar=rstar_village(x))
        assert text.splitlines()[0] == "p_H,pi_G,pi_C,R_star" and len(text.splitlines()) == 21

    def test_empty(self):
        with pytest.raises(ValueError):
            summarize(Chain(np.zeros((0, 2)), ["a", "b"], np.zeros(2)))

    def test_merge(self):
        a = Chain(np.zeros((4, 2)), ["a", "b"], np.array([0.2, 0.4]))
        b = Chain(np.ones((4, 2)), ["a", "b"], np.array([0.4, 0.6]))
        m = Chain.merge([a, b])
        assert m.n_chains == 2 and np.allclose(m.acceptance, [0.3, 0.5])


@given(st.floats(0.01, 2), st.floats(0.01, 2), st.floats(0.01, 2))
def test_rate_transform_matches_rstar(lh, lg, lc):
    t = rates_to_transformed(np.array([[lh, lg, lc]]))
    assert rstar_village(t)[0] == pytest.approx(rstar_example1(lc, lg, 1.0, 1 - np.exp(-lh)), rel=1e-9)


def test_rstar_school_workplace_true_values():
    t = rates_to_transformed(np.array([[0.3, 1.2, 0.6, 0.05]]))
    assert rstar_school_workplace(t)[0] == pytest.approx(2.08214, abs=1e-4)
