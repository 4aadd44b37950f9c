"""Synthetic ground truth: random network, cascade and observed series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import NULL, DomainError, ObservationSet

SCENARIOS = {
    "A": dict(mu1=10.0, sigma1=1.0, mu2=100.0, sigma2=1.0, kappa1=1.0, theta1=0.5, kappa2=40.0, theta2=0.5),
    "B": dict(mu1=10.0, sigma1=1.0, mu2=100.0, sigma2=1.0, kappa1=1.0, theta1=0.5, kappa2=2.0, theta2=0.5),
    "C": dict(mu1=10.0, sigma1=1.0, mu2=11.0, sigma2=1.0, kappa1=1.0, theta1=0.5, kappa2=40.0, theta2=0.5),
    "D": dict(mu1=10.0, sigma1=1.0, mu2=11.0, sigma2=1.0, kappa1=1.0, theta1=0.5, kappa2=2.0, theta2=0.5),
}


@dataclass(frozen=True, eq=False)
class GroundTruth:
    potential_parents: tuple
    tree_parents: np.ndarray
    strengths: np.ndarray
    parents: np.ndarray
    times: np.ndarray
    horizon: int

    @property
    def n_nodes(self) -> int:
        return len(self.potential_parents)

    def check(self):
        """Raise if any structural invariant is broken."""
        pp, z, t = self.potential_parents, self.parents, self.times
        assert not pp[0] and z[0] == NULL
        for i in range(1, self.n_nodes):
            assert z[i] in pp[i], (i, z[i], pp[i])
            assert t[i] > t[z[i]]
        assert self.horizon == 10 + int(t.max())
        mask = np.zeros_like(self.strengths, dtype=bool)
        for i, p in enumerate(pp):
            mask[i, list(p)] = True
        assert np.all((self.strengths > 0) == mask)


def generate_network(n, inclusion_p=0.5, kappa1=1.0, theta1=0.5, kappa2=40.0, theta2=0.5,
                     seed=None, swap=False):
    """Random potential-parent sets, a random spanning tree through them, and
    true link strengths (tree links from the first gamma, others from the
    second; ``swap`` exchanges the two).

    Node 0 is the source. A node whose inclusion draw comes out empty is
    redrawn until it has at least one potential parent.
    """
    if n < 2:
        raise DomainError("need at least two nodes")
    if not 0 < inclusion_p <= 1:
        raise DomainError("inclusion probability must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    pp = [()]
    tree = np.full(n, NULL, dtype=np.int64)
    alpha = np.zeros((n, n))
    if swap:
        kappa1, theta1, kappa2, theta2 = kappa2, theta2, kappa1, theta1
    for i in range(1, n):
        while True:
            members = np.flatnonzero(rng.random(i) < inclusion_p)
            if members.size:
                break
        pp.append(tuple(int(j) for j in members))
        tree[i] = members[rng.integers(members.size)]
        for j in members:
            if j == tree[i]:
                alpha[i, j] = rng.gamma(kappa1, theta1)
            else:
                alpha[i, j] = rng.gamma(kappa2, theta2)
    return tuple(pp), tree, alpha


def generate_cascade(potential_parents, strengths, seed=None, source_time=1):
    """Draw true parents (weighted by link strength) and geometric delays in
    index order. Returns ``(parents, times, horizon)``."""
    rng = np.random.default_rng(seed)
    n = len(potential_parents)
    z = np.full(n, NULL, dtype=np.int64)
    t = np.full(n, NULL, dtype=np.int64)
    for i in range(n):
        pi = potential_parents[i]
        if not pi:
            t[i] = source_time
            continue
        w = np.array([strengths[i, j] for j in pi])
        j = pi[rng.choice(len(pi), p=w / w.sum())]
        if t[j] == NULL:
            raise DomainError(f"potential parent {j} of {i} has no time; parents must precede children")
        z[i] = j
        t[i] = t[j] + rng.geometric(-np.expm1(-strengths[i, j]))
    return z, t, 10 + int(t.max())


def generate_observations(times, gamma1, gamma2, horizon, seed=None) -> ObservationSet:
    """Gaussian series: ``gamma1 = (mean, sd)`` on ``1..t``, ``gamma2`` after.
    A zero sd yields the exact step."""
    rng = np.random.default_rng(seed)
    n = len(times)
    (m1, s1), (m2, s2) = gamma1, gamma2
    values = np.empty((n, horizon))
    idx = np.arange(1, horizon + 1)
    for i in range(n):
        ti = horizon if times[i] == NULL else times[i]
        pre = idx <= ti
        values[i] = np.where(pre, m1 + s1 * rng.standard_normal(horizon), m2 + s2 * rng.standard_normal(horizon))
    return ObservationSet(values)


def generate_ground_truth(n, scenario="A", seed=None, inclusion_p=0.5, swap=False, **overrides):
    """Network, cascade and observations for one realization of a preset."""
    params = {**SCENARIOS[scenario], **overrides} if scenario in SCENARIOS else dict(overrides)
    ss = np.random.SeedSequence(seed)
    s_net, s_cas, s_obs = (int(c.generate_state(1)[0]) for c in ss.spawn(3))
    pp, tree, alpha = generate_network(n, inclusion_p, params["kappa1"], params["theta1"],
                                       params["kappa2"], params["theta2"], s_net, swap)
    z, t, horizon = generate_cascade(pp, alpha, s_cas)
    data = generate_observations(t, (params["mu1"], params["sigma1"]), (params["mu2"], params["sigma2"]),
                                 horizon, s_obs)
    return GroundTruth(pp, tree, alpha, z, t, horizon), data, params
