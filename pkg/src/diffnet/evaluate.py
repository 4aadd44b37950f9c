"""Deviation metrics against ground truth and infection-time prediction."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .model import NULL, DomainError, InfeasibleStateError, InfectionState
from .obsmodel import ml_changepoint, per_node_models
from .particles import ParticleSet


def _times(x):
    return np.asarray(x, dtype=np.int64)


def deviation_times(est, truth, batch_end: int) -> float:
    """Mean absolute infection-time error.

    Times after ``batch_end`` count as null (the infection has not happened
    yet within the batch), and every null is replaced by ``batch_end``.
    """
    est, truth = _times(est), _times(truth)
    if est.shape != truth.shape:
        raise DomainError(f"length mismatch: {est.shape} vs {truth.shape}")
    if est.size == 0:
        return 0.0

    def sub(x):
        return np.where((x == NULL) | (x > batch_end), batch_end, x)

    return float(np.mean(np.abs(sub(est) - sub(truth))))


def deviation_parents(est, truth) -> int:
    """Number of nodes whose parent labels differ (null is a label)."""
    est, truth = _times(est), _times(truth)
    if est.shape != truth.shape:
        raise DomainError(f"length mismatch: {est.shape} vs {truth.shape}")
    return int(np.sum(est != truth))


def deviation_alphas(est, truth, potential_parents) -> float:
    """Mean absolute strength error over all supported links."""
    est, truth = np.asarray(est, dtype=float), np.asarray(truth, dtype=float)
    n = len(potential_parents)
    if est.shape != (n, n) or truth.shape != (n, n):
        raise DomainError(f"strength matrices must be {n}x{n}")
    mask = np.zeros((n, n), dtype=bool)
    for i, p in enumerate(potential_parents):
        mask[i, list(p)] = True
    for name, a in (("estimate", est), ("truth", truth)):
        if np.any(a[~mask] != 0):
            raise DomainError(f"{name} has strength outside the potential-parent support")
    if not mask.any():
        return 0.0
    return float(np.mean(np.abs(est[mask] - truth[mask])))


def percent_correct_parents(particles: ParticleSet, truth) -> np.ndarray:
    """Per node, percentage of particles carrying the true parent."""
    truth = _times(truth)
    if truth.shape != (particles.n_nodes,):
        raise DomainError("truth length does not match the particles")
    return 100.0 * np.mean(particles.parents == truth[None, :], axis=0)


@dataclass(frozen=True)
class DeviationReport:
    d_t: float
    d_z: int
    d_alpha: float
    percent_correct_parent: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"d_t": self.d_t, "d_z": self.d_z, "d_alpha": self.d_alpha, **self.extra}
        if self.percent_correct_parent is not None:
            out["percent_correct_parent"] = [float(v) for v in self.percent_correct_parent]
        return out


def deviation_report(estimate: InfectionState, truth: InfectionState, potential_parents,
                     batch_end: int, particles: ParticleSet | None = None) -> DeviationReport:
    pcp = None if particles is None else percent_correct_parents(particles, truth.parents)
    return DeviationReport(
        deviation_times(estimate.times, truth.times, batch_end),
        deviation_parents(estimate.parents, truth.parents),
        deviation_alphas(estimate.strengths, truth.strengths, potential_parents),
        pcp,
    )


# ---------------------------------------------------------------------------
# Prediction


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray
    q25: np.ndarray
    q75: np.ndarray
    samples: np.ndarray


def predict_chain(parents, strengths, source_times, placeholder, delays=None) -> np.ndarray:
    """Predicted time of every node for one particle: a parent's predicted
    time plus the mean geometric delay ``1 / (1 - exp(-alpha))``."""
    n = len(parents)
    pred = np.full(n, np.nan)
    state = np.zeros(n, dtype=np.int8)  # 0 unvisited, 1 on stack, 2 done

    def visit(i):
        # iterative walk up the parent chain, then unwind
        path = []
        while state[i] != 2:
            if state[i] == 1:
                raise InfeasibleStateError(f"parent chain through node {i} is cyclic")
            if i in source_times:
                pred[i] = source_times[i]
                state[i] = 2
                break
            j = int(parents[i])
            if j == NULL:
                pred[i] = placeholder
                state[i] = 2
                break
            state[i] = 1
            path.append(i)
            i = j
        for k in reversed(path):
            j = int(parents[k])
            a = float(strengths[k, j])
            if not a > 0:
                raise InfeasibleStateError(f"link {j}->{k} has no positive strength")
            shift = 0 if delays is None else int(delays[k, j])
            pred[k] = pred[j] + shift + 1.0 / -math.expm1(-a)
            state[k] = 2

    for i in range(n):
        visit(i)
    return pred


def predict_infection_times(particles: ParticleSet, source_times: dict, placeholder=None,
                            delays=None) -> Prediction:
    """Mean and 25-75% band of the predicted infection times.

    ``source_times`` maps source nodes to their observed times. A node with
    no parent in a particle contributes ``placeholder`` (the block end by
    default).
    """
    placeholder = particles.block.end if placeholder is None else placeholder
    src = {int(k): float(v) for k, v in source_times.items()}
    samples = np.stack([predict_chain(particles.parents[k], particles.strengths[k], src, placeholder, delays)
                        for k in range(len(particles))])
    q25, q75 = np.percentile(samples, [25, 75], axis=0)
    return Prediction(samples.mean(axis=0), q25, q75, samples)


def individual_baseline_times(data, obs_model, horizon=None) -> np.ndarray:
    """Per-node maximum-likelihood changepoint over the whole horizon."""
    horizon = data.n_times if horizon is None else horizon
    models = per_node_models(obs_model, data.n_nodes)
    return np.array([ml_changepoint(data.values[i, :horizon], models[i], (1, horizon))
                     for i in range(data.n_nodes)], dtype=np.int64)


def mean_band(values, level=0.95) -> dict:
    """Mean with a Student-t confidence band over realizations."""
    v = np.asarray(values, dtype=float)
    m = float(v.mean()) if v.size else math.nan
    if v.size < 2:
        return {"mean": m, "lo": m, "hi": m, "n": int(v.size)}
    h = float(stats.t.ppf(0.5 + level / 2, v.size - 1) * v.std(ddof=1) / math.sqrt(v.size))
    return {"mean": m, "lo": m - h, "hi": m + h, "n": int(v.size)}
