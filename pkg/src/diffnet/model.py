"""Generative model for diffusion cascades observed through time series.

Nodes are indexed ``0..N-1``. Infection times are integer time indices
(the first observation is time 1); a missing value (no infection, no
parent) is encoded as :data:`NULL`.

The per-node law over ``(parent, time)`` used throughout is the unified one:
an uninfected node has no parent, and the probability that node ``i`` stays
uninfected up to ``block_end`` is the complement of the mass assigned to
every ``(parent, time)`` pair. Nodes without potential parents are treated
as exogenous sources: their infection time carries a flat prior and their
parent is always null.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np

NULL = -1


class DomainError(ValueError):
    """An argument is outside the domain of a density or operation."""


class DegenerateWeightsError(DomainError):
    """Parent-choice weights are all zero."""


class InfeasibleStateError(RuntimeError):
    """A conditional distribution has empty support."""


def _is_null(value) -> bool:
    return value is None or value == NULL


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True, eq=False)
class InfectionState:
    """One hypothesis ``(parents, times, strengths)``.

    ``strengths[i, j]`` is the strength of the link along which ``j`` may
    infect ``i``.
    """

    parents: np.ndarray
    times: np.ndarray
    strengths: np.ndarray

    def __post_init__(self):
        z = np.array(self.parents, dtype=np.int64)
        t = np.array(self.times, dtype=np.int64)
        a = np.array(self.strengths, dtype=np.float64)
        n = z.shape[0]
        if t.shape != (n,) or a.shape != (n, n):
            raise DomainError(f"inconsistent state shapes {z.shape}, {t.shape}, {a.shape}")
        for arr in (z, t, a):
            arr.setflags(write=False)
        object.__setattr__(self, "parents", z)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "strengths", a)

    @property
    def n_nodes(self) -> int:
        return self.parents.shape[0]

    def __eq__(self, other):
        if not isinstance(other, InfectionState):
            return NotImplemented
        return (
            np.array_equal(self.parents, other.parents)
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.strengths, other.strengths)
        )

    def __hash__(self):
        return hash((self.parents.tobytes(), self.times.tobytes(), self.strengths.tobytes()))

    def replace(self, parents=None, times=None, strengths=None) -> "InfectionState":
        return InfectionState(
            self.parents if parents is None else parents,
            self.times if times is None else times,
            self.strengths if strengths is None else strengths,
        )

    def violations(self, potential_parents: Sequence[Sequence[int]]) -> list[str]:
        """List every structural invariant the state breaks."""
        out = []
        n = self.n_nodes
        for i in range(n):
            pi = set(potential_parents[i])
            zi, ti = int(self.parents[i]), int(self.times[i])
            for j in range(n):
                if j not in pi and self.strengths[i, j] != 0:
                    out.append(f"strength[{i},{j}] nonzero outside potential parents")
            if np.any(self.strengths[i] < 0):
                out.append(f"negative strength in row {i}")
            if ti == NULL and zi != NULL:
                out.append(f"node {i} uninfected but has parent {zi}")
            if zi != NULL:
                if zi not in pi:
                    out.append(f"parent {zi} of node {i} not a potential parent")
                elif self.times[zi] == NULL or self.times[zi] >= ti:
                    out.append(f"parent {zi} of node {i} not infected before it")
        return out


@dataclass(frozen=True)
class ModelHyperparams:
    """Structure and prior hyperparameters.

    ``kappa``/``theta`` are gamma shape/scale per link (only entries with
    ``j in potential_parents[i]`` are used). ``proposal_rate`` is the
    geometric rate of the online time proposal. ``delays[i, j]`` shifts the
    transmission law of link ``j -> i`` so that infection cannot happen
    before ``t_j + delays[i, j] + 1`` (zero everywhere by default).
    ``clamped`` pins the infection time of selected nodes (``NULL`` allowed).
    """

    potential_parents: tuple
    kappa: np.ndarray
    theta: np.ndarray
    proposal_rate: np.ndarray
    delays: np.ndarray | None = None
    clamped: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self):
        pp = tuple(tuple(sorted(int(j) for j in p)) for p in self.potential_parents)
        n = len(pp)
        for i, p in enumerate(pp):
            if any(j < 0 or j >= n or j == i for j in p):
                raise DomainError(f"invalid potential parents for node {i}: {p}")
        kappa = np.broadcast_to(np.asarray(self.kappa, dtype=np.float64), (n, n)).copy()
        theta = np.broadcast_to(np.asarray(self.theta, dtype=np.float64), (n, n)).copy()
        rate = np.broadcast_to(np.asarray(self.proposal_rate, dtype=np.float64), (n,)).copy()
        delays = (
            np.zeros((n, n), dtype=np.int64)
            if self.delays is None
            else np.asarray(self.delays, dtype=np.int64).reshape(n, n).copy()
        )
        for i, p in enumerate(pp):
            for j in p:
                if not (kappa[i, j] > 0 and theta[i, j] > 0):
                    raise DomainError(f"gamma hyperparameters of link {j}->{i} must be positive")
        if np.any((rate <= 0) | (rate >= 1)):
            raise DomainError("proposal rate must lie in (0, 1)")
        if np.any(delays < 0):
            raise DomainError("delays must be nonnegative")
        clamped = {int(k): int(NULL if _is_null(v) else v) for k, v in dict(self.clamped).items()}
        for arr in (kappa, theta, rate, delays):
            arr.setflags(write=False)
        object.__setattr__(self, "potential_parents", pp)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "proposal_rate", rate)
        object.__setattr__(self, "delays", delays)
        object.__setattr__(self, "clamped", clamped)

    @classmethod
    def uniform(cls, potential_parents, kappa=1.0, theta=1.0, proposal_rate=0.5, **kw):
        n = len(potential_parents)
        return cls(
            potential_parents,
            np.full((n, n), float(kappa)),
            np.full((n, n), float(theta)),
            np.full(n, float(proposal_rate)),
            **kw,
        )

    @property
    def n_nodes(self) -> int:
        return len(self.potential_parents)

    def with_clamped(self, clamped: Mapping[int, int]) -> "ModelHyperparams":
        return ModelHyperparams(
            self.potential_parents, self.kappa, self.theta, self.proposal_rate,
            self.delays, clamped,
        )

    def support_mask(self) -> np.ndarray:
        n = self.n_nodes
        mask = np.zeros((n, n), dtype=bool)
        for i, p in enumerate(self.potential_parents):
            mask[i, list(p)] = True
        return mask

    @cached_property
    def arrays(self) -> dict:
        """Padded index arrays consumed by the compiled samplers."""
        n = self.n_nodes
        deg = np.array([len(p) for p in self.potential_parents], dtype=np.int64)
        width = max(1, int(deg.max()) if n else 1)
        parents = np.full((n, width), NULL, dtype=np.int64)
        for i, p in enumerate(self.potential_parents):
            parents[i, : len(p)] = p
        children = [[] for _ in range(n)]
        for i, p in enumerate(self.potential_parents):
            for j in p:
                children[j].append(i)
        rdeg = np.array([len(c) for c in children], dtype=np.int64)
        rwidth = max(1, int(rdeg.max()) if n else 1)
        rev = np.full((n, rwidth), NULL, dtype=np.int64)
        for j, c in enumerate(children):
            rev[j, : len(c)] = c
        clamp_mask = np.zeros(n, dtype=np.bool_)
        clamp_val = np.full(n, NULL, dtype=np.int64)
        for k, v in self.clamped.items():
            clamp_mask[k] = True
            clamp_val[k] = v
        return dict(
            P=parents, deg=deg, rev=rev, revcnt=rdeg,
            kappa=np.ascontiguousarray(self.kappa), theta=np.ascontiguousarray(self.theta),
            delay=np.ascontiguousarray(self.delays), rate=np.ascontiguousarray(self.proposal_rate),
            clamp_mask=clamp_mask, clamp_val=clamp_val,
        )


@dataclass(frozen=True)
class BlockIndex:
    """Block ``b`` (1-based) covering time indices ``start..end`` inclusive."""

    b: int
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def make_blocks(n_times: int, n_blocks: int) -> list[BlockIndex]:
    """Partition ``1..n_times`` into ``n_blocks`` blocks of length
    ``n_times // n_blocks``; the last block absorbs the remainder."""
    if n_blocks < 1 or n_times < n_blocks:
        raise DomainError(f"cannot split {n_times} times into {n_blocks} blocks")
    m = n_times // n_blocks
    out = []
    for b in range(1, n_blocks + 1):
        start = m * (b - 1) + 1
        end = n_times if b == n_blocks else m * b
        out.append(BlockIndex(b, start, end))
    return out


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """``values[i]`` is the observed series of node ``i``, length ``N_T``."""

    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise DomainError("observations must be an N x N_T matrix")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        names = tuple(self.names) or tuple(f"n{i}" for i in range(v.shape[0]))
        if len(names) != v.shape[0]:
            raise DomainError("one name per node required")
        object.__setattr__(self, "names", names)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    def blocks(self, n_blocks: int) -> list[BlockIndex]:
        return make_blocks(self.n_times, n_blocks)

    def truncated(self, end: int) -> "ObservationSet":
        return ObservationSet(self.values[:, :end], self.names)


# ---------------------------------------------------------------------------
# Prior densities


def _check_alpha(alpha):
    if not alpha > 0:
        raise DomainError(f"link strength must be positive, got {alpha}")


def log_geometric_transmission(t_child, t_parent, alpha, horizon, survival="cdf"):
    """Log-probability that a parent infected at ``t_parent`` infects the
    child at ``t_child`` (or never before ``horizon`` when ``t_child`` is null).

    ``survival="cdf"`` uses ``(1-p)**(horizon - t_parent)``, the complement of
    the geometric CDF. ``survival="printed"`` uses ``(1-p)**horizon``.
    """
    _check_alpha(alpha)
    if t_parent >= horizon:
        raise DomainError("parent must be infected before the horizon")
    log1mp = -float(alpha)  # log(1 - p) with p = 1 - exp(-alpha)
    if _is_null(t_child):
        if survival == "cdf":
            return log1mp * (horizon - t_parent)
        if survival == "printed":
            return log1mp * horizon
        raise ValueError(f"unknown survival convention {survival!r}")
    if t_child <= t_parent:
        raise DomainError(f"child time {t_child} not after parent time {t_parent}")
    if t_child > horizon:
        raise DomainError(f"child time {t_child} beyond horizon {horizon}")
    return math.log(-math.expm1(-alpha)) + log1mp * (t_child - t_parent - 1)


def log_parent_choice(z, alphas: Mapping[int, float]):
    """``log(alpha_z / sum(alphas))`` over the potential-parent set."""
    if z not in alphas:
        raise DomainError(f"{z} is not a potential parent")
    total = float(sum(alphas.values()))
    if not total > 0:
        raise DegenerateWeightsError("all parent weights are zero")
    w = alphas[z]
    return math.log(w) - math.log(total) if w > 0 else -math.inf


def log_gamma_prior(alpha, kappa, theta):
    """Gamma log-density, shape ``kappa`` and scale ``theta``."""
    if alpha < 0:
        raise DomainError("link strength must be nonnegative")
    if alpha == 0:
        if kappa < 1:
            return math.inf
        if kappa > 1:
            return -math.inf
        return -math.log(theta)
    return (
        (kappa - 1) * math.log(alpha) - alpha / theta
        - math.lgamma(kappa) - kappa * math.log(theta)
    )


# ---------------------------------------------------------------------------
# Per-node (parent, time) law


def _law_terms(alphas, parent_times, block_end, delays=None):
    """Yield ``((z, t), mass)`` for every infection outcome plus the null mass."""
    total = float(sum(alphas.values()))
    if not total > 0:
        raise DegenerateWeightsError("all parent weights are zero")
    null_mass = 0.0
    terms = []
    for l, a in alphas.items():
        w = a / total
        tl = parent_times.get(l, NULL)
        if _is_null(tl):
            null_mass += w
            continue
        start = tl + (0 if delays is None else delays.get(l, 0))
        p = -math.expm1(-a)
        for x in range(start + 1, block_end + 1):
            terms.append(((l, x), w * p * math.exp(-a * (x - start - 1))))
        null_mass += w * math.exp(-a * max(0, block_end - start))
    return terms, null_mass


def node_infection_law(node, prior_state, alphas, block_end, delays=None):
    """Distribution over ``(parent, time)`` of ``node`` at the end of a block.

    ``prior_state`` is ``(parents, times)`` at the end of the previous block
    (``times`` also supplies the infection times of potential parents).
    ``alphas`` maps each potential parent to its link strength. Returns a
    dict ``{(z, t): mass}`` with ``(NULL, NULL)`` for staying uninfected.
    """
    parents, times = prior_state
    if not _is_null(times[node]):
        return {(int(parents[node]), int(times[node])): 1.0}
    if not alphas:
        return {(NULL, NULL): 1.0}
    ptimes = {l: int(times[l]) for l in alphas}
    terms, null_mass = _law_terms(alphas, ptimes, block_end, delays)
    if not any(not _is_null(ptimes[l]) and ptimes[l] < block_end for l in alphas):
        return {(NULL, NULL): 1.0}
    law = dict(terms)
    law[(NULL, NULL)] = null_mass
    return law


def node_law_logmass(node, z, t, times, strengths, potential_parents, block_end, delays=None):
    """Log-mass of ``(z, t)`` under the law of ``node`` given the other
    nodes' times; exogenous sources (no potential parents) get a flat prior."""
    pi = potential_parents[node]
    if not pi:
        return 0.0 if _is_null(z) else -math.inf
    alphas = {l: float(strengths[node, l]) for l in pi}
    total = sum(alphas.values())
    if not total > 0:
        return -math.inf
    dl = {} if delays is None else {l: int(delays[node, l]) for l in pi}
    if _is_null(t):
        if not _is_null(z):
            return -math.inf
        s = 0.0
        for l, a in alphas.items():
            tl = int(times[l])
            if tl == NULL or tl + dl.get(l, 0) >= block_end:
                s += a
            else:
                s += a * math.exp(-a * (block_end - tl - dl.get(l, 0)))
        return math.log(s) - math.log(total) if s > 0 else -math.inf
    if _is_null(z) or z not in alphas or t > block_end:
        return -math.inf
    tz = int(times[z])
    if tz == NULL:
        return -math.inf
    start = tz + dl.get(z, 0)
    if t <= start or alphas[z] <= 0:
        return -math.inf
    a = alphas[z]
    return math.log(a) - math.log(total) + math.log(-math.expm1(-a)) - a * (t - start - 1)


# ---------------------------------------------------------------------------
# Joint posterior


def log_joint_posterior(state: InfectionState, data: ObservationSet, hyper: ModelHyperparams,
                        obs_model, horizon=None) -> float:
    """Unnormalised log posterior of ``state`` given all data up to ``horizon``.

    Returns ``-inf`` for states that violate the model's invariants.
    """
    from .obsmodel import per_node_models

    horizon = data.n_times if horizon is None else horizon
    if state.violations(hyper.potential_parents):
        return -math.inf
    t = state.times
    if np.any((t != NULL) & ((t < 1) | (t > horizon))):
        return -math.inf
    models = per_node_models(obs_model, state.n_nodes)
    total = 0.0
    for i in range(state.n_nodes):
        series = data.values[i, :horizon]
        total += models[i].node_loglik(series, int(t[i]))
        total += node_law_logmass(i, int(state.parents[i]), int(t[i]), t, state.strengths,
                                  hyper.potential_parents, horizon, hyper.delays)
        for j in hyper.potential_parents[i]:
            total += log_gamma_prior(float(state.strengths[i, j]), hyper.kappa[i, j], hyper.theta[i, j])
    return total
