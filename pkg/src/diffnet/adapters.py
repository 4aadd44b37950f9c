"""Real-data ingestion: CSV series, changepoint-ordered potential parents,
and the seismic pipeline (distance-gated parents, dummy sources, epicenter).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gibbs import McmcConfig, run_batch_gibbs
from .model import NULL, DomainError, InfectionState, ModelHyperparams, ObservationSet
from .obsmodel import GaussianModel, ml_changepoint, per_node_models
from .particles import ParticleSet, map_estimate

EARTH_RADIUS_KM = 6371.0


class ParseError(DomainError):
    """Malformed input file."""


class EstimationError(RuntimeError):
    """The data do not support the requested estimate."""


def _float_cell(cell, row, col, path):
    try:
        v = float(cell)
    except ValueError:
        raise ParseError(f"{path}: row {row}, column {col}: not a number: {cell!r}") from None
    if not math.isfinite(v):
        raise ParseError(f"{path}: row {row}, column {col}: non-finite value {cell!r}")
    return v


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_series_csv(path) -> ObservationSet:
    """Load a wide CSV: header row of node names, one row per time step."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(not h for h in header):
        raise ParseError(f"{path}: row 1: missing or blank header")
    if all(_is_number(h) for h in header):
        raise ParseError(f"{path}: row 1: header looks numeric; node names required")
    body = rows[1:]
    if not body:
        raise ParseError(f"{path}: no data rows")
    values = np.empty((len(header), len(body)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {r}: expected {len(header)} cells, found {len(row)}")
        for c, cell in enumerate(row, start=1):
            if not cell.strip():
                raise ParseError(f"{path}: row {r}, column {c}: missing value")
            values[c - 1, r - 2] = _float_cell(cell, r, c, path)
    return ObservationSet(values, tuple(header))


def write_series_csv(path, data: ObservationSet):
    names = data.names or tuple(f"n{i}" for i in range(data.n_nodes))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for k in range(data.n_times):
            w.writerow([repr(float(v)) for v in data.values[:, k]])


def potential_parents_from_changepoints(cp) -> tuple:
    """``j`` may infect ``i`` iff its individual changepoint is strictly earlier."""
    cp = np.asarray(cp)
    return tuple(tuple(int(j) for j in np.flatnonzero(cp < cp[i])) for i in range(cp.size))


# ---------------------------------------------------------------------------
# Geometry


@dataclass(frozen=True)
class GeoStation:
    id: str
    lat: float
    lon: float
    series: np.ndarray

    def __post_init__(self):
        if not (-90 <= self.lat <= 90 and -180 <= self.lon <= 180):
            raise DomainError(f"station {self.id}: invalid coordinates ({self.lat}, {self.lon})")


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in km on a spherical Earth."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dp, dl = p2 - p1, np.radians(lon2) - np.radians(lon1)
    h = np.sin(dp / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def distance_matrix(lats, lons) -> np.ndarray:
    lats, lons = np.asarray(lats, dtype=float), np.asarray(lons, dtype=float)
    return haversine(lats[:, None], lons[:, None], lats[None, :], lons[None, :])


def destination(lat, lon, bearing_deg, dist_km):
    """Point reached from ``(lat, lon)`` along a great circle."""
    p1, l1, b = math.radians(lat), math.radians(lon), math.radians(bearing_deg)
    d = dist_km / EARTH_RADIUS_KM
    p2 = math.asin(math.sin(p1) * math.cos(d) + math.cos(p1) * math.sin(d) * math.cos(b))
    l2 = l1 + math.atan2(math.sin(b) * math.sin(d) * math.cos(p1), math.cos(d) - math.sin(p1) * math.sin(p2))
    return math.degrees(p2), (math.degrees(l2) + 540) % 360 - 180


def geographic_midpoint(lats, lons):
    """Midpoint as the normalized mean of unit vectors."""
    p, l = np.radians(np.asarray(lats, dtype=float)), np.radians(np.asarray(lons, dtype=float))
    v = np.stack([np.cos(p) * np.cos(l), np.cos(p) * np.sin(l), np.sin(p)]).mean(axis=1)
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise EstimationError("midpoint undefined for antipodal points")
    v /= norm
    return float(np.degrees(np.arcsin(v[2]))), float(np.degrees(np.arctan2(v[1], v[0])))


def potential_parents_geo(lats, lons, cp, velocity, dummy_radius, dt=1.0):
    """Distance-gated potential parents plus one dummy source per station.

    ``j`` may infect ``i`` iff ``cp_j + D_ij / v < cp_i`` (times in steps of
    ``dt`` seconds, distances in km, ``v`` in km/s). Station ``i``'s dummy is
    node ``N + i``. Returns ``(potential_parents, dummy_time, distances)``
    where ``dummy_time = min_i(cp_i - D0 / v)`` in (fractional) steps.
    """
    if not velocity > 0:
        raise DomainError("velocity must be positive")
    if dummy_radius < 0:
        raise DomainError("dummy radius must be nonnegative")
    cp = np.asarray(cp, dtype=float)
    n = cp.size
    dist = distance_matrix(lats, lons)
    travel = dist / (velocity * dt)
    pp = []
    for i in range(n):
        real = [j for j in range(n) if j != i and cp[j] + travel[i, j] < cp[i]]
        pp.append(tuple(real) + (n + i,))
    pp.extend(() for _ in range(n))
    dummy_time = float(np.min(cp - dummy_radius / (velocity * dt)))
    return tuple(pp), dummy_time, dist


def fit_gamma_moments(x):
    """Method-of-moments gamma fit; returns ``(shape, scale)``."""
    x = np.asarray(x, dtype=float)
    if x.size < 2 or np.any(x <= 0):
        raise EstimationError("need at least two positive values to fit a gamma")
    m, v = x.mean(), x.var(ddof=1)
    if v <= 0:
        raise EstimationError("zero variance; gamma fit undefined")
    return m * m / v, v / m


def epicenter_estimate(map_state: InfectionState, lats, lons):
    """Midpoint of the stations whose parent is their own dummy source."""
    n = len(lats)
    hit = [i for i in range(n) if map_state.parents[i] == n + i]
    if not hit:
        raise EstimationError("no station is infected by its dummy source")
    return geographic_midpoint(np.asarray(lats)[hit], np.asarray(lons)[hit])


def fit_two_regime_gaussian(series, min_segment=3) -> GaussianModel:
    """Per-series Gaussian regimes at the best single split (profile likelihood)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if n < 2 * min_segment:
        raise EstimationError("series too short to fit two regimes")
    c1, c2 = np.cumsum(x), np.cumsum(x * x)
    best, arg = -math.inf, None
    for t in range(min_segment, n - min_segment + 1):
        v1 = c2[t - 1] / t - (c1[t - 1] / t) ** 2
        s, q, m = c1[-1] - c1[t - 1], c2[-1] - c2[t - 1], n - t
        v2 = q / m - (s / m) ** 2
        ll = -0.5 * (t * math.log(max(v1, 1e-12)) + m * math.log(max(v2, 1e-12)))
        if ll > best:
            best, arg = ll, t
    pre, post = x[:arg], x[arg:]
    floor = 1e-6 * max(1.0, float(np.abs(x).max()))
    return GaussianModel(pre.mean(), max(pre.std(), floor), post.mean(), max(post.std(), floor))


@dataclass(frozen=True)
class EpicenterResult:
    lat: float
    lon: float
    map_state: InfectionState
    particles: ParticleSet
    changepoints: np.ndarray
    dummy_time: int
    hyper: ModelHyperparams


def locate_epicenter(stations, velocity=13.0, dummy_radius=10.0, dt=1.0, config: McmcConfig | None = None,
                     obs_models=None, proposal_rate=0.5) -> EpicenterResult:
    """Full seismic pipeline: changepoints, gated parents with dummy sources,
    batch inference, and the midpoint of dummy-infected stations."""
    stations = list(stations)
    n = len(stations)
    if n < 2:
        raise DomainError("need at least two stations")
    length = {len(s.series) for s in stations}
    if len(length) != 1:
        raise ParseError("station series must share one length")
    n_t = length.pop()
    lats = np.array([s.lat for s in stations])
    lons = np.array([s.lon for s in stations])
    models = [fit_two_regime_gaussian(s.series) for s in stations] if obs_models is None \
        else per_node_models(obs_models, n)
    cp = np.array([ml_changepoint(np.asarray(s.series, dtype=float), models[i]) for i, s in enumerate(stations)])
    pp, dummy_real, dist = potential_parents_geo(lats, lons, cp, velocity, dummy_radius, dt)
    # largest integer strictly below the printed dummy time keeps the
    # earliest station reachable under the strict travel-time gate
    dummy_time = math.ceil(dummy_real) - 1
    if dummy_time < 1:
        raise EstimationError("not enough pre-event samples to place the dummy sources")

    travel = dist / (velocity * dt)
    delays = np.zeros((2 * n, 2 * n), dtype=np.int64)
    inv = []
    for i in range(n):
        for j in pp[i]:
            d = dist[i, j] if j < n else dummy_radius
            delays[i, j] = math.floor(travel[i, j] if j < n else dummy_radius / (velocity * dt))
            inv.append(1.0 / max(d, 1e-3))
    try:
        kappa, theta = fit_gamma_moments(inv)
    except EstimationError:
        kappa, theta = 1.0, float(np.mean(inv))
    hyper = ModelHyperparams.uniform(pp, kappa, theta, proposal_rate, delays=delays,
                                     clamped={n + i: dummy_time for i in range(n)})
    values = np.vstack([np.stack([np.asarray(s.series, dtype=float) for s in stations]), np.zeros((n, n_t))])
    data = ObservationSet(values, tuple(s.id for s in stations) + tuple(f"dummy:{s.id}" for s in stations))
    flat = GaussianModel(0.0, 1.0, 0.0, 1.0)
    config = McmcConfig(4000, 1000, 10) if config is None else config
    ps = run_batch_gibbs(data, hyper, list(models) + [flat] * n, config)
    m = map_estimate(ps, "marginal")
    lat, lon = epicenter_estimate(m, lats, lons)
    return EpicenterResult(lat, lon, m, ps, cp, dummy_time, hyper)


def load_stations_csv(path) -> list[GeoStation]:
    """Rows of ``id, lat, lon, v1, v2, ...``; an optional header starting with ``id``."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path}: empty file")
    start = 1 if rows[0][0].strip().lower() == "id" else 0
    out = []
    width = None
    for r, row in enumerate(rows[start:], start=start + 1):
        if len(row) < 4:
            raise ParseError(f"{path}: row {r}: need id, lat, lon and at least one value")
        if width is not None and len(row) != width:
            raise ParseError(f"{path}: row {r}: expected {width} cells, found {len(row)}")
        width = len(row)
        lat, lon = _float_cell(row[1], r, 2, path), _float_cell(row[2], r, 3, path)
        series = np.array([_float_cell(c, r, k, path) for k, c in enumerate(row[3:], start=4)])
        try:
            out.append(GeoStation(row[0].strip(), lat, lon, series))
        except DomainError as e:
            raise ParseError(f"{path}: row {r}: {e}") from None
    return out


def write_stations_csv(path, stations):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        n_t = len(stations[0].series)
        w.writerow(["id", "lat", "lon"] + [f"v{k + 1}" for k in range(n_t)])
        for s in stations:
            w.writerow([s.id, repr(s.lat), repr(s.lon)] + [repr(float(v)) for v in s.series])


def synthetic_event(epicenter, station_positions, velocity=13.0, dt=1.0, onset=20, n_times=None,
                    noise=(0.0, 1.0), signal=(10.0, 1.0), seed=None) -> list[GeoStation]:
    """Stations with Gaussian noise that switches regime at the exact
    arrival step ``onset + ceil(D / (v dt))``. The default regimes are a
    ten-sigma level shift, so individual changepoints land on the arrivals."""
    rng = np.random.default_rng(seed)
    lat0, lon0 = epicenter
    arrivals = []
    for lat, lon in station_positions:
        d = float(haversine(lat0, lon0, lat, lon))
        arrivals.append(onset + math.ceil(d / (velocity * dt)))
    n_times = max(arrivals) + 20 if n_times is None else n_times
    out = []
    idx = np.arange(1, n_times + 1)
    for k, ((lat, lon), a) in enumerate(zip(station_positions, arrivals)):
        pre = idx <= a
        x = np.where(pre, noise[0] + noise[1] * rng.standard_normal(n_times),
                     signal[0] + signal[1] * rng.standard_normal(n_times))
        out.append(GeoStation(f"s{k}", float(lat), float(lon), x))
    return out
