import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffnet.model import (
    NULL, BlockIndex, DegenerateWeightsError, DomainError, InfectionState, ModelHyperparams,
    ObservationSet, log_gamma_prior, log_geometric_transmission, log_joint_posterior,
    log_parent_choice, make_blocks, node_infection_law, node_law_logmass,
)
from diffnet.obsmodel import GaussianModel

from conftest import chain_state, small_hyper

LN2 = math.log(2)


class TestTransmission:
    def test_pmf_value(self):
        assert log_geometric_transmission(5, 2, LN2, 10) == pytest.approx(math.log(0.125))

    def test_survival_cdf(self):
        assert log_geometric_transmission(NULL, 2, LN2, 10) == pytest.approx(math.log(0.5 ** 8))

    def test_survival_printed_variant(self):
        assert log_geometric_transmission(NULL, 2, LN2, 10, survival="printed") == pytest.approx(10 * math.log(0.5))

    def test_order_violation(self):
        with pytest.raises(DomainError):
            log_geometric_transmission(2, 5, LN2, 10)

    def test_bad_alpha(self):
        with pytest.raises(DomainError):
            log_geometric_transmission(5, 2, 0.0, 10)

    @given(st.floats(0.01, 5.0), st.integers(1, 15), st.integers(1, 10))
    def test_partition_of_unity(self, alpha, tp, extra):
        horizon = tp + extra
        total = sum(math.exp(log_geometric_transmission(x, tp, alpha, horizon)) for x in range(tp + 1, horizon + 1))
        total += math.exp(log_geometric_transmission(NULL, tp, alpha, horizon))
        assert total == pytest.approx(1.0, abs=1e-12)


class TestParentChoice:
    def test_values(self):
        assert log_parent_choice(1, {1: 2.0, 2: 1.0, 3: 1.0}) == pytest.approx(math.log(0.5))
        assert log_parent_choice(4, {4: 0.7}) == pytest.approx(0.0)

    def test_errors(self):
        with pytest.raises(DomainError):
            log_parent_choice(9, {1: 1.0})
        with pytest.raises(DegenerateWeightsError):
            log_parent_choice(1, {1: 0.0, 2: 0.0})

    @given(st.lists(st.floats(0.01, 10.0), min_size=1, max_size=6))
    def test_sums_to_one(self, ws):
        alphas = dict(enumerate(ws))
        assert sum(math.exp(log_parent_choice(z, alphas)) for z in alphas) == pytest.approx(1.0, abs=1e-12)


class TestGammaPrior:
    def test_values(self):
        assert log_gamma_prior(0.5, 1, 0.5) == pytest.approx(math.log(2 * math.exp(-1)))
        assert log_gamma_prior(0.0, 1, 0.5) == pytest.approx(math.log(2))
        assert log_gamma_prior(1.0, 2, 1) == pytest.approx(-1.0)

    def test_negative(self):
        with pytest.raises(DomainError):
            log_gamma_prior(-0.1, 1, 1)

    def test_matches_scipy(self):
        from scipy import stats
        for a, k, th in [(0.3, 2.5, 0.7), (4.0, 40, 0.5), (0.01, 0.8, 2.0)]:
            assert log_gamma_prior(a, k, th) == pytest.approx(stats.gamma.logpdf(a, k, scale=th))


class TestNodeLaw:
    def test_previously_infected_is_point_mass(self):
        law = node_infection_law(1, ([NULL, 0], [1, 3]), {0: 0.3}, 8)
        assert law == {(0, 3): 1.0}

    def test_no_infected_parent(self):
        assert node_infection_law(1, ([NULL, NULL], [NULL, NULL]), {0: 1.0}, 5) == {(NULL, NULL): 1.0}

    def test_hand_enumeration(self):
        law = node_infection_law(1, ([NULL, NULL], [0, NULL]), {0: LN2}, 2)
        assert law[(0, 1)] == pytest.approx(0.5)
        assert law[(0, 2)] == pytest.approx(0.25)
        assert law[(NULL, NULL)] == pytest.approx(0.25)
        assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)

    @settings(max_examples=60)
    @given(st.lists(st.floats(0.01, 4.0), min_size=1, max_size=4), st.data(), st.integers(2, 20))
    def test_sums_to_one(self, alphas, data, block_end):
        k = len(alphas)
        times = [data.draw(st.one_of(st.just(NULL), st.integers(1, block_end))) for _ in range(k)] + [NULL]
        law = node_infection_law(k, ([NULL] * (k + 1), times), dict(enumerate(alphas)), block_end)
        assert sum(law.values()) == pytest.approx(1.0, abs=1e-12)

    def test_logmass_agrees_with_law(self):
        a = np.zeros((3, 3))
        a[2, 0], a[2, 1] = 0.7, 1.9
        times = np.array([1, 3, NULL])
        law = node_infection_law(2, ([NULL, 0, NULL], times), {0: 0.7, 1: 1.9}, 9)
        pp = ((), (0,), (0, 1))
        for (z, t), m in law.items():
            assert node_law_logmass(2, z, t, times, a, pp, 9) == pytest.approx(math.log(m))

    def test_infected_without_parent_has_zero_mass(self):
        a = np.array([[0, 0], [1.0, 0]])
        assert node_law_logmass(1, NULL, 4, np.array([1, 4]), a, ((), (0,)), 6) == -math.inf

    def test_delay_shifts_support(self):
        law = node_infection_law(1, ([NULL, NULL], [2, NULL]), {0: 1.0}, 10, delays={0: 3})
        assert min(t for (_, t) in law if t != NULL) == 6
        assert sum(law.values()) == pytest.approx(1.0)


class TestState:
    def test_invariants(self):
        pp = ((), (0,))
        ok = chain_state([1, 3], [None, 0], [[0, 0], [0.5, 0]])
        assert ok.violations(pp) == []
        late = chain_state([3, 2], [None, 0], [[0, 0], [0.5, 0]])
        assert late.violations(pp)
        orphan = chain_state([1, None], [None, 0], [[0, 0], [0.5, 0]])
        assert orphan.violations(pp)
        off = chain_state([1, 2], [None, 0], [[0, 0.3], [0.5, 0]])
        assert off.violations(pp)

    def test_immutable_and_hashable(self):
        s = chain_state([1, 3], [None, 0], [[0, 0], [0.5, 0]])
        with pytest.raises(ValueError):
            s.times[0] = 5
        assert hash(s) == hash(chain_state([1, 3], [None, 0], [[0, 0], [0.5, 0]]))


class TestBlocks:
    def test_even(self):
        assert make_blocks(12, 4) == [BlockIndex(1, 1, 3), BlockIndex(2, 4, 6), BlockIndex(3, 7, 9), BlockIndex(4, 10, 12)]

    def test_remainder_goes_last(self):
        b = make_blocks(14, 4)
        assert b[-1] == BlockIndex(4, 10, 14)
        assert sum(x.length for x in b) == 14

    def test_too_many(self):
        with pytest.raises(DomainError):
            make_blocks(3, 4)


class TestJointPosterior:
    def setup_method(self):
        self.obs = GaussianModel(0.0, 1.0, 5.0, 1.0)
        self.data = ObservationSet(np.array([[0.1, 4.8, 5.2, 4.9, 5.1], [0.2, -0.3, 0.1, 5.3, 4.7]]))
        self.hyper = small_hyper(((), (0,)), kappa=2.0, theta=0.5)

    def test_violation_is_minus_inf(self):
        s = chain_state([3, 2], [None, 0], [[0, 0], [0.8, 0]])
        assert log_joint_posterior(s, self.data, self.hyper, self.obs) == -math.inf

    def test_single_uninfected_node(self):
        data = ObservationSet(np.array([[0.3, -0.2, 1.1]]))
        s = chain_state([None], [None], [[0.0]])
        hyper = small_hyper(((),))
        from scipy import stats
        expect = stats.norm.logpdf(data.values[0], 0, 1).sum()
        assert log_joint_posterior(s, data, hyper, self.obs) == pytest.approx(expect)

    def test_two_node_chain_by_hand(self):
        from scipy import stats
        a = 0.8
        s = chain_state([1, 3], [None, 0], [[0, 0], [a, 0]])
        d = self.data.values
        data_ll = (stats.norm.logpdf(d[0, :1], 0, 1).sum() + stats.norm.logpdf(d[0, 1:], 5, 1).sum()
                   + stats.norm.logpdf(d[1, :3], 0, 1).sum() + stats.norm.logpdf(d[1, 3:], 5, 1).sum())
        p = 1 - math.exp(-a)
        trans = math.log(p * (1 - p) ** (3 - 1 - 1))
        prior = stats.gamma.logpdf(a, 2.0, scale=0.5)
        assert log_joint_posterior(s, self.data, self.hyper, self.obs) == pytest.approx(data_ll + trans + prior, abs=1e-10)

    def test_better_fit_never_lowers(self):
        s = chain_state([1, 3], [None, 0], [[0, 0], [0.8, 0]])
        base = log_joint_posterior(s, self.data, self.hyper, self.obs)
        v = self.data.values.copy()
        v[1, 4] = 5.0
        better = log_joint_posterior(s, ObservationSet(v), self.hyper, self.obs)
        assert better >= base


def test_hyper_validation():
    with pytest.raises(DomainError):
        ModelHyperparams.uniform(((), (1,)))
    with pytest.raises(DomainError):
        ModelHyperparams.uniform(((), (0,)), proposal_rate=1.0)
    with pytest.raises(DomainError):
        ModelHyperparams.uniform(((), (0,)), kappa=0.0)
