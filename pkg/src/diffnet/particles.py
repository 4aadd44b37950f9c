"""Particle sets and MAP extraction."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .model import BlockIndex, DomainError, InfectionState


@dataclass(frozen=True, eq=False)
class ParticleSet:
    """Uniformly weighted samples of one block's posterior.

    ``iterations`` holds the (1-based) MCMC iteration each particle was
    retained at; ``anchors`` the index of the previous-block particle it was
    drawn against (online blocks only).
    """

    parents: np.ndarray
    times: np.ndarray
    strengths: np.ndarray
    block: BlockIndex
    seed: int
    iterations: np.ndarray
    log_posterior: np.ndarray
    anchors: np.ndarray | None = None
    acceptance_rate: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("parents", "times", "strengths", "iterations", "log_posterior", "anchors"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.asarray(arr)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        if self.parents.shape[0] == 0:
            raise DomainError("particle set is empty")

    def __len__(self):
        return self.parents.shape[0]

    def __getitem__(self, k) -> InfectionState:
        return InfectionState(self.parents[k], self.times[k], self.strengths[k])

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @property
    def n_nodes(self) -> int:
        return self.parents.shape[1]

    def __eq__(self, other):
        if not isinstance(other, ParticleSet):
            return NotImplemented
        return (
            self.block == other.block
            and self.seed == other.seed
            and np.array_equal(self.parents, other.parents)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.strengths, other.strengths)
            and np.array_equal(self.iterations, other.iterations)
        )

    __hash__ = None


def _first_mode(keys):
    counts = Counter(keys)
    best = max(counts.values())
    for k in keys:
        if counts[k] == best:
            return k


def map_estimate(particles: ParticleSet, mode: str = "marginal") -> InfectionState:
    """Most probable configuration among the particles.

    ``joint``: the most repeated full (parents, times) configuration, with
    strengths averaged over the particles sharing it. ``marginal``: per node
    the most repeated (parent, time) pair, strengths averaged over all
    particles. Ties go to the configuration seen first.
    """
    z, t, a = particles.parents, particles.times, particles.strengths
    if mode == "joint":
        keys = [z[k].tobytes() + t[k].tobytes() for k in range(len(particles))]
        best = _first_mode(keys)
        rows = [k for k, key in enumerate(keys) if key == best]
        return InfectionState(z[rows[0]], t[rows[0]], a[rows].mean(axis=0))
    if mode == "marginal":
        n = particles.n_nodes
        zz = np.empty(n, dtype=np.int64)
        tt = np.empty(n, dtype=np.int64)
        for i in range(n):
            zi, ti = _first_mode(list(zip(z[:, i].tolist(), t[:, i].tolist())))
            zz[i], tt[i] = zi, ti
        return InfectionState(zz, tt, a.mean(axis=0))
    raise ValueError(f"unknown MAP mode {mode!r}")
