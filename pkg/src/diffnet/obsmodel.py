"""Segment likelihoods for pre- and post-infection regimes.

A node's series is split at its infection time ``t``: observations
``1..t`` follow the pre-infection regime and ``t+1..end`` the
post-infection regime. ``t`` is therefore the last pre-infection index, and
a null time means the whole series is pre-infection.

Every observation model exposes :meth:`loglik_table`, the log-likelihood of
a window ``lo..hi`` of the series for each candidate time ``lo-1..hi``; the
samplers only ever consume these tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .model import NULL, DomainError

LOG_2PI = math.log(2.0 * math.pi)


class InsufficientDataError(DomainError):
    """Too few observations to fit a post-infection curve."""


@dataclass(frozen=True, eq=False)
class SeriesStats:
    """Prefix sums of a series; index ``k`` covers the first ``k`` values."""

    csum: np.ndarray
    csq: np.ndarray
    clogfact: np.ndarray

    @classmethod
    def from_series(cls, series) -> "SeriesStats":
        x = np.asarray(series, dtype=np.float64)
        zero = np.zeros(1)
        return cls(
            np.concatenate([zero, np.cumsum(x)]),
            np.concatenate([zero, np.cumsum(x * x)]),
            np.concatenate([zero, np.cumsum(gammaln(np.maximum(x, 0.0) + 1.0))]),
        )

    @property
    def length(self) -> int:
        return self.csum.shape[0] - 1


def _as_stats(series_or_stats) -> SeriesStats:
    if isinstance(series_or_stats, SeriesStats):
        return series_or_stats
    return SeriesStats.from_series(series_or_stats)


@dataclass(frozen=True)
class Normal:
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DomainError("standard deviation must be positive")

    def segment_loglik(self, stats: SeriesStats, frm: int, to: int) -> float:
        n = to - frm + 1
        s1 = stats.csum[to] - stats.csum[frm - 1]
        s2 = stats.csq[to] - stats.csq[frm - 1]
        ss = s2 - 2.0 * self.mean * s1 + n * self.mean * self.mean
        return -0.5 * n * (LOG_2PI + 2.0 * math.log(self.sd)) - ss / (2.0 * self.sd ** 2)

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return -0.5 * (LOG_2PI + 2.0 * math.log(self.sd)) - (x - self.mean) ** 2 / (2.0 * self.sd ** 2)


@dataclass(frozen=True)
class Poisson:
    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise DomainError("Poisson rate must be positive")

    def segment_loglik(self, stats: SeriesStats, frm: int, to: int) -> float:
        n = to - frm + 1
        s1 = stats.csum[to] - stats.csum[frm - 1]
        lf = stats.clogfact[to] - stats.clogfact[frm - 1]
        return s1 * math.log(self.rate) - n * self.rate - lf

    def logpdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        return x * math.log(self.rate) - self.rate - gammaln(x + 1.0)


def segment_loglik(stats, frm: int, to: int, regime) -> float:
    """Log-likelihood of values ``frm..to`` (1-based, inclusive) under
    ``regime``; an empty segment (``frm > to``) contributes 0."""
    stats = _as_stats(stats)
    if frm > to:
        return 0.0
    if frm < 1 or to > stats.length:
        raise DomainError(f"segment {frm}..{to} outside series of length {stats.length}")
    return regime.segment_loglik(stats, frm, to)


class TwoRegimeModel:
    """i.i.d. observations from ``pre`` up to the infection time and from
    ``post`` afterwards."""

    def __init__(self, pre, post):
        self.pre = pre
        self.post = post

    def __repr__(self):
        return f"{type(self).__name__}(pre={self.pre!r}, post={self.post!r})"

    def window_loglik(self, stats: SeriesStats, t: int, lo: int, hi: int) -> float:
        if t == NULL:
            t = hi
        cut = min(max(t, lo - 1), hi)
        return segment_loglik(stats, lo, cut, self.pre) + segment_loglik(stats, cut + 1, hi, self.post)

    def node_loglik(self, series, t, horizon=None) -> float:
        stats = _as_stats(series)
        horizon = stats.length if horizon is None else horizon
        return self.window_loglik(stats, NULL if t is None else t, 1, horizon)

    def loglik_table(self, series, lo: int = 1, hi: int | None = None) -> np.ndarray:
        stats = _as_stats(series)
        hi = stats.length if hi is None else hi
        if lo < 1 or hi > stats.length or lo > hi:
            raise DomainError(f"window {lo}..{hi} outside series of length {stats.length}")
        cuts = np.arange(lo - 1, hi + 1)
        pre = _segments(stats, lo, cuts, self.pre)
        post = _segments_tail(stats, cuts, hi, self.post)
        return pre + post


def _segments(stats, lo, cuts, regime):
    return np.array([segment_loglik(stats, lo, c, regime) for c in cuts])


def _segments_tail(stats, cuts, hi, regime):
    return np.array([segment_loglik(stats, c + 1, hi, regime) for c in cuts])


class GaussianModel(TwoRegimeModel):
    def __init__(self, mean_pre, sd_pre, mean_post, sd_post):
        super().__init__(Normal(mean_pre, sd_pre), Normal(mean_post, sd_post))


class PoissonModel(TwoRegimeModel):
    def __init__(self, rate_pre, rate_post):
        super().__init__(Poisson(rate_pre), Poisson(rate_post))


def per_node_models(obs_model, n_nodes: int) -> list:
    if isinstance(obs_model, (list, tuple)):
        if len(obs_model) != n_nodes:
            raise DomainError("one observation model per node required")
        return list(obs_model)
    return [obs_model] * n_nodes


def node_data_loglik(stats, t, model, horizon=None) -> float:
    """Log-likelihood of a node's series ``1..horizon`` given infection time ``t``."""
    stats = _as_stats(stats)
    horizon = stats.length if horizon is None else horizon
    if t is not None and t != NULL and not 1 <= t <= horizon:
        raise DomainError(f"infection time {t} outside 1..{horizon}")
    return model.node_loglik(stats, NULL if t is None else t, horizon)


def ml_changepoint(stats, model, window=None) -> int:
    """Maximum-likelihood changepoint of a single series within ``window``.

    Candidates are ``lo..hi``; ties go to the earliest time.
    """
    length = stats.length if isinstance(stats, SeriesStats) else len(stats)
    lo, hi = window if window is not None else (1, length)
    if not 1 <= lo <= hi <= length:
        raise DomainError(f"window {lo}..{hi} outside series of length {length}")
    table = model.loglik_table(stats, lo, hi)[1:]
    return lo + int(np.argmax(table))


# ---------------------------------------------------------------------------
# Log-normal epidemic curve


def lognormal_epidemic_value(n, t, amplitude, sigma, peak_days):
    """Expected count in week ``n`` for an outbreak starting in week ``t``.

    ``peak_days`` is the mode of the curve in days; the log-mean is
    ``log(peak_days) + sigma**2``.
    """
    n = np.asarray(n, dtype=np.float64)
    if np.any(n <= t):
        raise DomainError("curve is only defined after the infection week")
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    days = 7.0 * (n - t)
    mu = math.log(peak_days) + sigma * sigma
    out = amplitude / (math.sqrt(2 * math.pi) * sigma * days) * np.exp(
        -((np.log(days) - mu) ** 2) / (2 * sigma * sigma)
    )
    return out if out.ndim else float(out)


def golden_section(f, lo, hi, tol=1e-4):
    """Minimise a unimodal scalar function on ``[lo, hi]``."""
    g = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return (a + b) / 2.0


@dataclass(frozen=True)
class EpidemicFit:
    sigma: float
    peak_days: float
    amplitude: float
    mse: float


def fit_lognormal_epidemic(series, candidate_t, sigma_bounds=(0.05, 5.0), tol=1e-4) -> EpidemicFit:
    """Fit the log-normal outbreak curve to the weeks after ``candidate_t``.

    The peak is placed at the largest post-infection observation and the
    amplitude chosen so the curve passes through it; sigma minimises the MSE.
    """
    x = np.asarray(series, dtype=np.float64)
    weeks = np.arange(candidate_t + 1, x.shape[0] + 1)
    if weeks.shape[0] < 3:
        raise InsufficientDataError(f"need at least 3 weeks after {candidate_t}, have {weeks.shape[0]}")
    post = x[candidate_t:]
    k = int(np.argmax(post))
    peak_week = weeks[k]
    peak_days = 7.0 * (peak_week - candidate_t)

    def curve(sigma):
        unit = lognormal_epidemic_value(weeks, candidate_t, 1.0, sigma, peak_days)
        return unit * (post[k] / unit[k])

    def mse(sigma):
        return float(np.mean((post - curve(sigma)) ** 2))

    sigma = golden_section(mse, *sigma_bounds, tol=tol)
    unit_peak = lognormal_epidemic_value(peak_week, candidate_t, 1.0, sigma, peak_days)
    return EpidemicFit(sigma, peak_days, float(post[k] / unit_peak), mse(sigma))


class LogNormalEpidemicModel:
    """Plain Gaussian before the outbreak; after it, the fitted log-normal
    curve plus Gaussian residual noise."""

    def __init__(self, pre_mean, pre_sd, resid_mean, resid_sd, min_post=3):
        self.pre = Normal(pre_mean, pre_sd)
        self.resid = Normal(resid_mean, resid_sd)
        self.min_post = min_post

    def node_loglik(self, series, t, horizon=None) -> float:
        x = np.asarray(series, dtype=np.float64)
        horizon = x.shape[0] if horizon is None else horizon
        return self._window(x, NULL if t is None else t, 1, horizon)

    def _window(self, x, t, lo, hi):
        if t == NULL or t >= hi:
            return float(np.sum(self.pre.logpdf(x[lo - 1:hi])))
        cut = max(t, lo - 1)
        pre = float(np.sum(self.pre.logpdf(x[lo - 1:cut])))
        seg = x[:hi]
        if hi - t < self.min_post:
            # too short to fit a curve: residual-only post regime
            return pre + float(np.sum(self.resid.logpdf(x[cut:hi])))
        fit = fit_lognormal_epidemic(seg, t)
        weeks = np.arange(cut + 1, hi + 1)
        h = lognormal_epidemic_value(weeks, t, fit.amplitude, fit.sigma, fit.peak_days)
        return pre + float(np.sum(self.resid.logpdf(x[cut:hi] - h)))

    def loglik_table(self, series, lo: int = 1, hi: int | None = None) -> np.ndarray:
        x = np.asarray(series, dtype=np.float64)
        hi = x.shape[0] if hi is None else hi
        return np.array([self._window(x, c, lo, hi) for c in range(lo - 1, hi + 1)])


def lognormal_individual_estimate(series, candidates=None) -> int:
    """Candidate infection week whose log-normal fit has the smallest MSE."""
    x = np.asarray(series, dtype=np.float64)
    if candidates is None:
        candidates = range(1, x.shape[0] - 2)
    best, best_mse = None, math.inf
    for c in candidates:
        fit = fit_lognormal_epidemic(x, c)
        if fit.mse < best_mse:
            best, best_mse = c, fit.mse
    if best is None:
        raise InsufficientDataError("no admissible candidate week")
    return int(best)
