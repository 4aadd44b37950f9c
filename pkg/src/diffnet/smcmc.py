"""Online inference: sequential MCMC over data blocks.

The first block is processed by the batch Gibbs sampler. Each later block
runs a Markov chain on pairs (current state, anchor particle from the
previous block): a joint Metropolis-Hastings move proposes a fresh anchor
and a new state from a cheap three-stage proposal centred on the per-node
maximum-likelihood changepoints of the block, and a Gibbs refinement sweep
then updates the nodes not yet infected in the anchor. Nodes infected in an
earlier block keep their parent, time and strengths forever.

The functions in this module are plain-Python reference implementations of
the densities; the chain itself runs in :mod:`diffnet._kernels`.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .gibbs import McmcConfig, NumericalError, _raise_status, run_batch_gibbs, window_tables
from .model import (
    NULL, BlockIndex, DomainError, InfectionState, ModelHyperparams, ObservationSet,
    log_gamma_prior, make_blocks, node_law_logmass,
)
from .particles import ParticleSet, map_estimate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BlockResult:
    particles: ParticleSet
    map_state: InfectionState
    t_ml: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Transition density


def transition_logdensity(x_b: InfectionState, x_prev: InfectionState, hyper: ModelHyperparams,
                          block_end: int) -> float:
    """Log-density of moving from ``x_prev`` (end of the previous block) to
    ``x_b`` (end of a block finishing at ``block_end``)."""
    if x_b.n_nodes != x_prev.n_nodes:
        raise DomainError("states have different sizes")
    total = 0.0
    for i in range(x_b.n_nodes):
        pi = hyper.potential_parents[i]
        if x_prev.times[i] != NULL:
            same = (x_b.times[i] == x_prev.times[i] and x_b.parents[i] == x_prev.parents[i]
                    and all(x_b.strengths[i, j] == x_prev.strengths[i, j] for j in pi))
            if not same:
                return -math.inf
            continue
        total += node_law_logmass(i, int(x_b.parents[i]), int(x_b.times[i]), x_b.times, x_b.strengths,
                                  hyper.potential_parents, block_end, hyper.delays)
        for j in pi:
            total += log_gamma_prior(float(x_b.strengths[i, j]), hyper.kappa[i, j], hyper.theta[i, j])
    return total


# ---------------------------------------------------------------------------
# Three-stage proposal


def time_proposal_law(t_ml: int, rate: float, block: BlockIndex) -> dict:
    """Masses of the two-sided geometric time proposal for a node that was
    not infected before ``block``; the remainder goes to null."""
    if not 0 < rate < 1:
        raise DomainError("proposal rate must lie in (0, 1)")
    law = {x: 0.5 * rate * (1 - rate) ** abs(x - t_ml) for x in range(block.start, block.end + 1)}
    law[NULL] = 1.0 - sum(law.values())
    return law


def _clamped_time(hyper, i, block):
    v = hyper.clamped[i]
    return NULL if v == NULL or v > block.end else v


def propose_times(x_prev: InfectionState, t_ml, rates, block: BlockIndex, rng, hyper=None):
    """Draw proposal times; returns ``(times, log_density)``."""
    n = x_prev.n_nodes
    rates = np.broadcast_to(np.asarray(rates, dtype=np.float64), (n,))
    t = np.empty(n, dtype=np.int64)
    logd = 0.0
    for i in range(n):
        if x_prev.times[i] != NULL:
            t[i] = x_prev.times[i]
            continue
        if hyper is not None and i in hyper.clamped:
            t[i] = _clamped_time(hyper, i, block)
            continue
        law = time_proposal_law(int(t_ml[i]), float(rates[i]), block)
        keys = list(law)
        k = rng.choice(len(keys), p=np.array([law[x] for x in keys]))
        t[i] = keys[k]
        logd += math.log(law[keys[k]])
    return t, logd


def propose_alphas(x_prev: InfectionState, t_proposal, hyper: ModelHyperparams, rng):
    """Copy strength rows of previously infected nodes; draw the rest from
    their gamma priors. Returns ``(strengths, log_density)``."""
    n = x_prev.n_nodes
    a = np.zeros((n, n))
    logd = 0.0
    for i, pi in enumerate(hyper.potential_parents):
        if x_prev.times[i] != NULL:
            a[i] = x_prev.strengths[i]
            continue
        for j in pi:
            a[i, j] = rng.gamma(hyper.kappa[i, j], hyper.theta[i, j])
            logd += log_gamma_prior(a[i, j], hyper.kappa[i, j], hyper.theta[i, j])
    return a, logd


def parent_proposal_law(i, t_proposal, alphas, hyper: ModelHyperparams, consistent=False) -> dict:
    """Parent masses for a node newly infected in the block: strength-
    weighted over potential parents infected before it, leftover on null."""
    pi = hyper.potential_parents[i]
    total = sum(alphas[i, j] for j in pi)
    avail = [l for l in pi if t_proposal[l] != NULL and t_proposal[l] < t_proposal[i]]
    if not avail:
        return {NULL: 1.0}
    norm = sum(alphas[i, l] for l in avail) if consistent else total
    law = {l: alphas[i, l] / norm for l in avail}
    if not consistent:
        law[NULL] = sum(alphas[i, l] for l in pi if l not in avail) / total
    return law


def propose_parents(x_prev: InfectionState, t_proposal, alpha_proposal, hyper: ModelHyperparams,
                    rng, consistent=False):
    """Draw proposal parents; returns ``(parents, log_density)``."""
    n = x_prev.n_nodes
    z = np.full(n, NULL, dtype=np.int64)
    logd = 0.0
    for i in range(n):
        if x_prev.times[i] != NULL:
            z[i] = x_prev.parents[i]
            continue
        if t_proposal[i] == NULL:
            continue
        law = parent_proposal_law(i, t_proposal, alpha_proposal, hyper, consistent)
        keys = list(law)
        p = np.array([law[k] for k in keys])
        k = rng.choice(len(keys), p=p / p.sum())
        z[i] = keys[k]
        logd += math.log(law[keys[k]])
    return z, logd


def propose(x_prev: InfectionState, t_ml, hyper: ModelHyperparams, block: BlockIndex, rng,
            consistent=False):
    """Full three-stage proposal; returns ``(state, log_density)``."""
    t, lt = propose_times(x_prev, t_ml, hyper.proposal_rate, block, rng, hyper)
    a, la = propose_alphas(x_prev, t, hyper, rng)
    z, lz = propose_parents(x_prev, t, a, hyper, rng, consistent)
    return InfectionState(z, t, a), lt + la + lz


def proposal_logdensity(x_b: InfectionState, x_prev: InfectionState, t_ml, hyper: ModelHyperparams,
                        block: BlockIndex, consistent=False, include_alpha=True) -> float:
    """Log-density of proposing ``x_b`` from anchor ``x_prev``."""
    total = 0.0
    for i in range(x_b.n_nodes):
        pi = hyper.potential_parents[i]
        ti, zi = int(x_b.times[i]), int(x_b.parents[i])
        if x_prev.times[i] != NULL:
            same = (ti == x_prev.times[i] and zi == x_prev.parents[i]
                    and all(x_b.strengths[i, j] == x_prev.strengths[i, j] for j in pi))
            if not same:
                return -math.inf
            continue
        if i in hyper.clamped:
            if ti != _clamped_time(hyper, i, block):
                return -math.inf
        else:
            law = time_proposal_law(int(t_ml[i]), float(hyper.proposal_rate[i]), block)
            if ti not in law:
                return -math.inf
            total += math.log(law[ti])
        if include_alpha:
            for j in pi:
                total += log_gamma_prior(float(x_b.strengths[i, j]), hyper.kappa[i, j], hyper.theta[i, j])
        if ti == NULL:
            if zi != NULL:
                return -math.inf
            continue
        zlaw = parent_proposal_law(i, x_b.times, x_b.strengths, hyper, consistent)
        if zi not in zlaw or zlaw[zi] <= 0:
            return -math.inf
        total += math.log(zlaw[zi])
    return total


def proposal_total_mass(x_prev: InfectionState, t_ml, hyper: ModelHyperparams, block: BlockIndex,
                        alphas=None, consistent=False) -> float:
    """Sum of the proposal over every (times, parents) configuration, with
    strengths fixed at ``alphas`` (their gamma factors integrate to one).

    Enumerates the time grid with numpy and sums each node's parent masses
    in closed form per grid point; should be 1 for every anchor.
    """
    n = x_prev.n_nodes
    alphas = x_prev.strengths if alphas is None else np.asarray(alphas)
    alphas = np.where(x_prev.times[:, None] != NULL, x_prev.strengths, alphas)
    supports, masses = [], []
    for i in range(n):
        if x_prev.times[i] != NULL:
            supports.append([int(x_prev.times[i])])
            masses.append([1.0])
        else:
            law = time_proposal_law(int(t_ml[i]), float(hyper.proposal_rate[i]), block)
            supports.append(list(law))
            masses.append(list(law.values()))
    grid = np.stack(np.meshgrid(*[np.array(s) for s in supports], indexing="ij"), -1).reshape(-1, n)
    weight = np.ones(grid.shape[0])
    for i in range(n):
        m = dict(zip(supports[i], masses[i]))
        weight *= np.array([m[v] for v in grid[:, i]])
    for i in range(n):
        if x_prev.times[i] != NULL:
            continue
        zsum = np.empty(grid.shape[0])
        for g in range(grid.shape[0]):
            if grid[g, i] == NULL:
                zsum[g] = 1.0
            else:
                zsum[g] = sum(parent_proposal_law(i, grid[g], alphas, hyper, consistent).values())
        weight *= zsum
    return float(weight.sum())


# ---------------------------------------------------------------------------
# Metropolis-Hastings


def block_data_loglik(state: InfectionState, tables: np.ndarray, block: BlockIndex) -> float:
    return float(sum(tables[i, K.tab_index(int(state.times[i]), block.start, block.end)]
                     for i in range(state.n_nodes)))


def mh_acceptance(x_star, x_prev_star, x_curr, x_prev_curr, data: ObservationSet, block: BlockIndex,
                  t_ml, hyper: ModelHyperparams, obs_model, consistent=False) -> float:
    """Acceptance probability of the joint move to ``(x_star, x_prev_star)``
    from ``(x_curr, x_prev_curr)``."""
    tab = window_tables(data, obs_model, block.start, block.end)
    num = [
        block_data_loglik(x_star, tab, block),
        transition_logdensity(x_star, x_prev_star, hyper, block.end),
        proposal_logdensity(x_curr, x_prev_curr, t_ml, hyper, block, consistent),
    ]
    den = [
        block_data_loglik(x_curr, tab, block),
        transition_logdensity(x_curr, x_prev_curr, hyper, block.end),
        proposal_logdensity(x_star, x_prev_star, t_ml, hyper, block, consistent),
    ]
    if any(math.isnan(p) or p == math.inf for p in num + den):
        raise NumericalError(f"non-finite acceptance terms {num} / {den}")
    if -math.inf in num:
        return 0.0
    if -math.inf in den:
        return 1.0
    total = sum(num) - sum(den)
    if math.isnan(total):
        raise NumericalError("acceptance ratio is NaN")
    return 1.0 if total >= 0 else math.exp(total)


# ---------------------------------------------------------------------------
# Refinement and the block driver


def block_ml_changepoints(data: ObservationSet, obs_model, block: BlockIndex, tables=None) -> np.ndarray:
    """Per-node maximum-likelihood changepoint within the block (earliest on ties)."""
    tab = window_tables(data, obs_model, block.start, block.end) if tables is None else tables
    return block.start + np.argmax(tab[:, 1:], axis=1).astype(np.int64)


def refinement_step(x_b: InfectionState, x_prev_anchor: InfectionState, data: ObservationSet,
                    block: BlockIndex, hyper: ModelHyperparams, obs_model, rng, sweeps=1,
                    update_alpha=True, slice_steps=50) -> InfectionState:
    """Gibbs sweep(s) over nodes not infected in the anchor."""
    tab = window_tables(data, obs_model, block.start, block.end)
    ar = hyper.arrays
    n = x_b.n_nodes
    z, t, a = x_b.parents.copy(), x_b.times.copy(), x_b.strengths.copy()
    frozen = x_prev_anchor.times != NULL
    width = 1 + sum(max(1, d) for d in ar["deg"]) * (block.length + 1)
    bz, bt, bs = np.empty(width, dtype=np.int64), np.empty(width, dtype=np.int64), np.empty(width)
    order = np.empty(n, dtype=np.int64)
    fail = np.full(2, -1, dtype=np.int64)
    for _ in range(sweeps):
        status = K.sweep(z, t, a, ar["P"], ar["deg"], ar["rev"], ar["revcnt"], ar["delay"],
                         ar["kappa"], ar["theta"], frozen, ar["clamp_mask"], ar["clamp_val"], tab,
                         block.start, block.end, True, update_alpha, False, slice_steps,
                         bz, bt, bs, order, rng, fail)
        _raise_status(status, fail, "refinement")
    return InfectionState(z, t, a)


def run_online_block(prev: ParticleSet, data: ObservationSet, hyper: ModelHyperparams, obs_model,
                     config: McmcConfig, block: BlockIndex, rng) -> tuple[ParticleSet, np.ndarray]:
    """Process one block ``b >= 2`` given the previous block's particles."""
    if len(prev) == 0:
        raise DomainError("empty particle set")
    lo, hi = block.start, block.end
    tab = window_tables(data, obs_model, lo, hi)
    t_ml = block_ml_changepoints(data, obs_model, block, tab)
    ar = hyper.arrays
    n = hyper.n_nodes
    S = config.n_samples
    out_z = np.empty((S, n), dtype=np.int64)
    out_t = np.empty((S, n), dtype=np.int64)
    out_a = np.empty((S, n, n))
    out_iter = np.empty(S, dtype=np.int64)
    out_lp = np.empty(S)
    out_anchor = np.empty(S, dtype=np.int64)
    stats = np.zeros(1, dtype=np.int64)
    fail = np.full(2, -1, dtype=np.int64)
    status = K.online_block(
        np.ascontiguousarray(prev.parents), np.ascontiguousarray(prev.times),
        np.ascontiguousarray(prev.strengths), ar["P"], ar["deg"], ar["rev"], ar["revcnt"],
        ar["delay"], ar["kappa"], ar["theta"], ar["rate"], ar["clamp_mask"], ar["clamp_val"],
        tab, lo, hi, t_ml, config.n_mcmc, config.n_burn, config.n_thin, config.refinement_sweeps,
        config.consistent_proposal, config.update_alpha, config.random_scan, config.slice_steps,
        rng, out_z, out_t, out_a, out_iter, out_lp, out_anchor, stats, fail,
    )
    _raise_status(status, fail, f"online block {block.b}")
    rate = stats[0] / config.n_mcmc
    log.info("block %d [%d..%d]: acceptance %.3f, final log-posterior %.4f",
             block.b, lo, hi, rate, out_lp[-1])
    ps = ParticleSet(out_z, out_t, out_a, block, config.seed, out_iter, out_lp, out_anchor, rate)
    return ps, t_ml


def run_online(data: ObservationSet, hyper: ModelHyperparams, obs_model, config: McmcConfig,
               n_blocks: int, map_mode: str = "joint") -> list[BlockResult]:
    """Process the data block by block; returns one result per block.

    A single block reproduces :func:`run_batch_gibbs` exactly.
    """
    blocks = make_blocks(data.n_times, n_blocks)
    rng = np.random.default_rng(config.seed)
    ps = run_batch_gibbs(data, hyper, obs_model, config, horizon=blocks[0].end, rng=rng)
    results = [BlockResult(ps, map_estimate(ps, map_mode))]
    for block in blocks[1:]:
        ps, t_ml = run_online_block(ps, data, hyper, obs_model, config, block, rng)
        results.append(BlockResult(ps, map_estimate(ps, map_mode), t_ml))
    return results
