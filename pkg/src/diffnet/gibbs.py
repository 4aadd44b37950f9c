"""Batch Gibbs sampler over parents, infection times and link strengths.

Each sweep visits the nodes in a fixed order (optionally a random
permutation per sweep). For every node the parent and infection time are
drawn jointly from their enumerated full conditional, so an uninfected node
never carries a parent; then each of the node's link strengths is updated by
stepping-out slice sampling.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .model import (
    NULL, BlockIndex, DomainError, InfeasibleStateError, InfectionState,
    ModelHyperparams, ObservationSet,
)
from .obsmodel import ml_changepoint, per_node_models
from .particles import ParticleSet, map_estimate

log = logging.getLogger(__name__)

__all__ = [
    "McmcConfig", "run_batch_gibbs", "map_estimate", "sample_parent_conditional",
    "sample_time_conditional", "sample_alpha_conditional", "time_conditional",
    "window_tables", "initial_state",
]


class NumericalError(ArithmeticError):
    """A non-finite value appeared where a finite one was required."""


@dataclass(frozen=True)
class McmcConfig:
    n_mcmc: int
    n_burn: int = 0
    n_thin: int = 1
    seed: int = 0
    random_scan: bool = False
    update_alpha: bool = True
    slice_steps: int = 50
    refinement_sweeps: int = 1
    consistent_proposal: bool = False

    def __post_init__(self):
        if self.n_thin < 1 or self.n_burn < 0:
            raise DomainError("n_thin must be >= 1 and n_burn >= 0")
        kept = self.n_mcmc - self.n_burn
        if kept < self.n_thin or kept % self.n_thin:
            raise DomainError(
                f"n_mcmc={self.n_mcmc} must equal n_s*n_thin + n_burn with n_s >= 1 "
                f"(n_burn={self.n_burn}, n_thin={self.n_thin})"
            )
        if self.refinement_sweeps < 1 or self.slice_steps < 1:
            raise DomainError("refinement_sweeps and slice_steps must be positive")

    @property
    def n_samples(self) -> int:
        return (self.n_mcmc - self.n_burn) // self.n_thin

    def with_seed(self, seed: int) -> "McmcConfig":
        return McmcConfig(**{**self.__dict__, "seed": int(seed)})


def window_tables(data: ObservationSet, obs_model, lo: int, hi: int) -> np.ndarray:
    """Per-node log-likelihood of ``lo..hi`` for every candidate time ``lo-1..hi``."""
    models = per_node_models(obs_model, data.n_nodes)
    tab = np.empty((data.n_nodes, hi - lo + 2))
    for i in range(data.n_nodes):
        tab[i] = models[i].loglik_table(data.values[i], lo, hi)
    return tab


def _mutable(state: InfectionState):
    return state.parents.copy(), state.times.copy(), state.strengths.copy()


def initial_state(data: ObservationSet, hyper: ModelHyperparams, obs_model, horizon: int) -> InfectionState:
    """Feasible starting point: clamped times where given, exogenous sources
    at their individual changepoint, everything else uninfected; strengths
    at their prior means."""
    n = hyper.n_nodes
    models = per_node_models(obs_model, n)
    t = np.full(n, NULL, dtype=np.int64)
    for i in range(n):
        if i in hyper.clamped:
            v = hyper.clamped[i]
            t[i] = NULL if v == NULL or v > horizon else v
        elif not hyper.potential_parents[i]:
            t[i] = ml_changepoint(data.values[i, :horizon], models[i], (1, horizon))
    z = np.full(n, NULL, dtype=np.int64)
    a = np.zeros((n, n))
    for i, pi in enumerate(hyper.potential_parents):
        for j in pi:
            a[i, j] = hyper.kappa[i, j] * hyper.theta[i, j]
    for i in np.argsort(np.where(t == NULL, np.iinfo(np.int64).max, t), kind="stable"):
        if t[i] == NULL or not hyper.potential_parents[i]:
            continue
        feasible = [l for l in hyper.potential_parents[i]
                    if t[l] != NULL and t[l] + hyper.delays[i, l] < t[i]]
        if not feasible:
            raise InfeasibleStateError(f"clamped node {i} has no potential parent infected before t={t[i]}")
        z[i] = max(feasible, key=lambda l: a[i, l])
    return InfectionState(z, t, a)


def _raise_status(status, fail, what="sampler"):
    if status == K.INFEASIBLE:
        raise InfeasibleStateError(
            f"{what}: empty conditional support for node {fail[0]} at iteration {fail[1]}"
        )
    if status == K.NUMERICAL:
        raise NumericalError(f"{what}: non-finite conditional for node {fail[0]} at iteration {fail[1]}")


def run_batch_gibbs(data: ObservationSet, hyper: ModelHyperparams, obs_model, config: McmcConfig,
                    horizon: int | None = None, init: InfectionState | None = None,
                    rng: np.random.Generator | None = None) -> ParticleSet:
    """Gibbs-sample the posterior given data ``1..horizon``.

    Deterministic given ``config.seed`` (or the supplied generator).
    """
    horizon = data.n_times if horizon is None else horizon
    if horizon < 2:
        raise DomainError("need at least two time steps")
    if hyper.n_nodes != data.n_nodes:
        raise DomainError("hyperparameters and data disagree on the number of nodes")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    state = initial_state(data, hyper, obs_model, horizon) if init is None else init
    bad = state.violations(hyper.potential_parents)
    if bad:
        raise InfeasibleStateError("initial state invalid: " + "; ".join(bad[:3]))
    tab = window_tables(data, obs_model, 1, horizon)
    ar = hyper.arrays
    z, t, a = _mutable(state)
    n = hyper.n_nodes
    frozen = np.zeros(n, dtype=np.bool_)
    S = config.n_samples
    out_z = np.empty((S, n), dtype=np.int64)
    out_t = np.empty((S, n), dtype=np.int64)
    out_a = np.empty((S, n, n))
    out_iter = np.empty(S, dtype=np.int64)
    out_lp = np.empty(S)
    fail = np.full(2, -1, dtype=np.int64)
    status = K.run_chain(
        z, t, a, ar["P"], ar["deg"], ar["rev"], ar["revcnt"], ar["delay"], ar["kappa"],
        ar["theta"], frozen, ar["clamp_mask"], ar["clamp_val"], tab, 1, horizon, True,
        config.update_alpha, config.random_scan, config.slice_steps, config.n_mcmc,
        config.n_burn, config.n_thin, rng, out_z, out_t, out_a, out_iter, out_lp, fail,
    )
    _raise_status(status, fail, "batch Gibbs")
    log.info("batch gibbs: %d iterations, %d samples, final log-posterior %.4f",
             config.n_mcmc, S, out_lp[-1])
    return ParticleSet(out_z, out_t, out_a, BlockIndex(1, 1, horizon), config.seed, out_iter, out_lp)


# ---------------------------------------------------------------------------
# Single-site conditionals


def _site_args(hyper, data, obs_model, horizon, n):
    ar = hyper.arrays
    if data is None:
        tab = np.zeros((n, horizon + 1))
    else:
        tab = window_tables(data, obs_model, 1, horizon)
    width = 1 + sum(max(1, d) for d in ar["deg"]) * (horizon + 1)
    bufs = (np.empty(width, dtype=np.int64), np.empty(width, dtype=np.int64), np.empty(width))
    return ar, tab, bufs


def time_conditional(node, state: InfectionState, data, hyper, obs_model, horizon=None,
                     fixed_time=False) -> dict:
    """Enumerated joint conditional of ``(parent, time)`` for ``node``."""
    horizon = data.n_times if horizon is None else horizon
    z, t, a = _mutable(state)
    ar, tab, (bz, bt, bs) = _site_args(hyper, data, obs_model, horizon, state.n_nodes)
    frozen = np.zeros(state.n_nodes, dtype=np.bool_)
    cnt = K.node_candidates(node, z, t, a, ar["P"], ar["deg"], ar["rev"], ar["revcnt"], ar["delay"],
                            frozen, ar["clamp_mask"], ar["clamp_val"], tab, 1, horizon, fixed_time,
                            bz, bt, bs)
    if cnt == 0 or not np.any(np.isfinite(bs[:cnt])):
        raise InfeasibleStateError(f"empty conditional support for node {node}")
    w = np.exp(bs[:cnt] - np.max(bs[:cnt]))
    w /= w.sum()
    return {(int(bz[k]), int(bt[k])): float(w[k]) for k in range(cnt)}


def _draw(dist: dict, rng):
    keys = list(dist)
    k = rng.choice(len(keys), p=np.array([dist[key] for key in keys]))
    return keys[k]


def sample_parent_conditional(node, state: InfectionState, hyper: ModelHyperparams, rng,
                              horizon: int, null_time_parents: bool = False):
    """Draw the parent of ``node`` with its infection time held fixed.

    With ``null_time_parents`` an uninfected node still draws a parent among
    its infected potential parents, weighted by link strength times the
    probability of surviving that parent up to ``horizon``.
    """
    if null_time_parents and state.times[node] == NULL:
        weights = {}
        for l in hyper.potential_parents[node]:
            tl = state.times[l]
            if tl != NULL and tl < horizon:
                a = state.strengths[node, l]
                weights[l] = math.log(a) - a * (horizon - tl) if a > 0 else -math.inf
        if not weights:
            return NULL
        keys = list(weights)
        lw = np.array([weights[k] for k in keys])
        p = np.exp(lw - lw.max())
        return int(keys[rng.choice(len(keys), p=p / p.sum())])
    dist = time_conditional(node, state, None, hyper, None, horizon, fixed_time=True)
    return _draw(dist, rng)[0]


def sample_time_conditional(node, state: InfectionState, data, hyper, obs_model, rng, horizon=None):
    """Draw ``(parent, time)`` of ``node`` jointly from its full conditional."""
    return _draw(time_conditional(node, state, data, hyper, obs_model, horizon), rng)


def sample_alpha_conditional(node, j, state: InfectionState, hyper: ModelHyperparams, rng,
                             horizon: int, max_steps: int = 50) -> float:
    """One slice-sampling update of the strength of link ``j -> node``."""
    if j not in hyper.potential_parents[node]:
        raise DomainError(f"{j} is not a potential parent of {node}")
    z, t, a = _mutable(state)
    ar = hyper.arrays
    status = K.slice_alpha(node, j, z, t, a, ar["P"], ar["deg"], ar["delay"], ar["kappa"],
                           ar["theta"], horizon, max_steps, rng)
    _raise_status(status, (node, 0), "slice sampler")
    return float(a[node, j])
