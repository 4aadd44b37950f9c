import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffnet.evaluate import (
    DeviationReport, deviation_alphas, deviation_parents, deviation_times, mean_band,
    percent_correct_parents, predict_infection_times,
)
from diffnet.model import NULL, BlockIndex, DomainError, InfeasibleStateError
from diffnet.particles import ParticleSet

LN2 = math.log(2)


def particles(parents, strengths, times=None, end=20):
    parents = np.asarray(parents)
    S, n = parents.shape
    times = np.ones_like(parents) if times is None else np.asarray(times)
    return ParticleSet(parents, times, np.asarray(strengths, dtype=float), BlockIndex(1, 1, end), 0,
                       np.arange(S), np.zeros(S))


class TestTimes:
    def test_examples(self):
        assert deviation_times([3, 5], [3, 7], 20) == 1.0
        assert deviation_times([NULL], [10], 12) == 2.0
        assert deviation_times([4, NULL], [4, NULL], 9) == 0.0

    def test_truth_after_batch_is_null(self):
        assert deviation_times([NULL], [15], 12) == 0.0

    times = st.lists(st.one_of(st.just(NULL), st.integers(1, 30)), min_size=3, max_size=3)

    @given(times, times, times, st.integers(5, 25))
    def test_metric_properties(self, a, b, c, end):
        assert deviation_times(a, b, end) == deviation_times(b, a, end)
        assert deviation_times(a, c, end) <= deviation_times(a, b, end) + deviation_times(b, c, end) + 1e-12

    @given(times, times)
    def test_relabeling(self, a, b):
        perm = [2, 0, 1]
        assert deviation_times([a[k] for k in perm], [b[k] for k in perm], 20) == deviation_times(a, b, 20)


class TestParentsAlphas:
    def test_parents(self):
        assert deviation_parents([1, NULL, 2], [1, NULL, 2]) == 0
        assert deviation_parents([1, NULL, 2], [1, NULL, 3]) == 1
        assert deviation_parents([0, 0, 0], [1, 1, 1]) == 3

    def test_alphas(self):
        pp = ((), (0,))
        assert deviation_alphas([[0, 0], [1.3, 0]], [[0, 0], [1.0, 0]], pp) == pytest.approx(0.3)
        pp3 = ((), (0,), (0, 1))
        t = np.array([[0, 0, 0], [1.0, 0, 0], [2.0, 0.5, 0]])
        assert deviation_alphas(t + 0.2 * (t > 0), t, pp3) == pytest.approx(0.2)
        assert deviation_alphas(t, t, pp3) == 0.0

    def test_support_mismatch(self):
        with pytest.raises(DomainError):
            deviation_alphas([[0, 0.1], [1.0, 0]], [[0, 0], [1.0, 0]], ((), (0,)))

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            deviation_parents([1, 2], [1])


class TestPercentCorrect:
    def test_cases(self):
        a = np.zeros((4, 2, 2))
        ps = particles([[NULL, 0]] * 4, a)
        assert percent_correct_parents(ps, [NULL, 0]).tolist() == [100, 100]
        ps = particles([[NULL, 0], [NULL, 1], [NULL, 0], [NULL, 1]], a)
        assert percent_correct_parents(ps, [NULL, 0])[1] == 50
        ps = particles([[NULL, 1]], a[:1])
        assert percent_correct_parents(ps, [NULL, 0])[1] == 0

    def test_report(self):
        r = DeviationReport(0.5, 1, 0.2, np.array([100.0, 50.0]))
        assert r.to_dict() == {"d_t": 0.5, "d_z": 1, "d_alpha": 0.2, "percent_correct_parent": [100.0, 50.0]}


class TestPrediction:
    def test_single_link(self):
        a = np.zeros((1, 2, 2))
        a[0, 1, 0] = LN2
        p = predict_infection_times(particles([[NULL, 0]], a), {0: 5})
        assert p.mean[1] == pytest.approx(7.0)

    def test_degenerate_zero_band(self):
        a = np.zeros((5, 2, 2))
        a[:, 1, 0] = 0.4
        p = predict_infection_times(particles([[NULL, 0]] * 5, a), {0: 1})
        assert np.all(p.q25 == p.q75)

    def test_two_hop_chain(self):
        a = np.zeros((1, 3, 3))
        a[0, 1, 0] = a[0, 2, 1] = LN2
        p = predict_infection_times(particles([[NULL, 0, 1]], a), {0: 3})
        assert p.mean[2] == pytest.approx(7.0, abs=1e-12)

    def test_cycle(self):
        a = np.ones((1, 3, 3))
        with pytest.raises(InfeasibleStateError):
            predict_infection_times(particles([[NULL, 2, 1]], a), {0: 1})

    def test_null_parent_placeholder(self):
        a = np.zeros((1, 2, 2))
        p = predict_infection_times(particles([[NULL, NULL]], a, end=14), {0: 1})
        assert p.mean[1] == 14

    def test_band_over_particles(self):
        a = np.zeros((4, 2, 2))
        a[:, 1, 0] = [LN2, LN2, -math.log(0.75), -math.log(0.75)]
        p = predict_infection_times(particles([[NULL, 0]] * 4, a), {0: 0})
        assert p.mean[1] == pytest.approx(3.0)
        assert p.q25[1] < p.q75[1]


def test_mean_band():
    b = mean_band([1.0, 2.0, 3.0])
    assert b["mean"] == 2.0 and b["lo"] < 2.0 < b["hi"]
    assert mean_band([4.0])["lo"] == 4.0
