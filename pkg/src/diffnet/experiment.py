"""Synthetic experiments over many realizations of a scenario preset."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import serialize
from .evaluate import (
    deviation_alphas, deviation_parents, deviation_times, individual_baseline_times, mean_band,
    percent_correct_parents,
)
from .gibbs import McmcConfig, run_batch_gibbs
from .model import DomainError, ModelHyperparams
from .obsmodel import GaussianModel
from .particles import map_estimate
from .smcmc import run_online
from .synth import SCENARIOS, generate_ground_truth

log = logging.getLogger(__name__)

METHODS = ("batch", "online")


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "A"
    n_nodes: int = 10
    n_blocks: int = 4
    mcmc: McmcConfig = field(default_factory=lambda: McmcConfig(20000, 1000, 10))
    realizations: int = 20
    methods: tuple = ("batch",)
    known_times: bool = False
    prior_kappa: float = 1.0
    prior_theta: float = 1.0
    proposal_rate: float = 0.5
    inclusion_p: float = 0.5
    overrides: dict = field(default_factory=dict)
    out_dir: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.scenario not in SCENARIOS and self.scenario != "custom":
            raise DomainError(f"unknown scenario {self.scenario!r}")
        if self.scenario == "custom":
            missing = set(SCENARIOS["A"]) - set(self.overrides)
            if missing:
                raise DomainError(f"custom scenario needs {sorted(missing)}")
        bad = set(self.methods) - set(METHODS)
        if bad or not self.methods:
            raise DomainError(f"unknown methods {sorted(bad)}")
        if self.n_nodes < 2 or self.realizations < 1 or self.n_blocks < 1 or self.workers < 1:
            raise DomainError("n_nodes >= 2, realizations >= 1, n_blocks >= 1, workers >= 1 required")

    @property
    def seed(self) -> int:
        return self.mcmc.seed


def realization_seed(master: int, r: int) -> int:
    return int(np.random.SeedSequence([master, r]).generate_state(1)[0])


def _estimate(method, data, hyper, obs, mcmc, n_blocks):
    if method == "batch":
        ps = run_batch_gibbs(data, hyper, obs, mcmc)
    else:
        ps = run_online(data, hyper, obs, mcmc, n_blocks, "marginal")[-1].particles
    return ps, map_estimate(ps, "marginal")


def run_realization(cfg: ExperimentConfig, r: int) -> list[dict]:
    seed = realization_seed(cfg.seed, r)
    scenario = cfg.scenario if cfg.scenario in SCENARIOS else None
    gt, data, params = generate_ground_truth(cfg.n_nodes, scenario, seed, cfg.inclusion_p, **cfg.overrides)
    hyper = ModelHyperparams.uniform(gt.potential_parents, cfg.prior_kappa, cfg.prior_theta, cfg.proposal_rate)
    obs = GaussianModel(params["mu1"], params["sigma1"], params["mu2"], params["sigma2"])
    mcmc = cfg.mcmc.with_seed(seed)
    end = gt.horizon
    t_ind = individual_baseline_times(data, obs)
    rows = []
    for method in cfg.methods:
        t0 = time.perf_counter()
        ps, m = _estimate(method, data, hyper, obs, mcmc, cfg.n_blocks)
        elapsed = time.perf_counter() - t0
        per_particle = np.array([deviation_times(ps.times[k], gt.times, end) for k in range(len(ps))])
        row = {
            "scenario": cfg.scenario, "realization": r, "seed": seed, "method": method,
            "n_nodes": cfg.n_nodes, "horizon": end,
            "d_t": deviation_times(m.times, gt.times, end),
            "d_t_individual": deviation_times(t_ind, gt.times, end),
            "d_z": deviation_parents(m.parents, gt.parents),
            "d_alpha": deviation_alphas(m.strengths, gt.strengths, gt.potential_parents),
            "pct_correct_parent": float(np.mean(percent_correct_parents(ps, gt.parents))),
            "d_t_particles_mean": float(per_particle.mean()),
            "d_t_particles_lo": float(np.percentile(per_particle, 2.5)),
            "d_t_particles_hi": float(np.percentile(per_particle, 97.5)),
            "seconds": elapsed,
        }
        if cfg.known_times:
            clamped = hyper.with_clamped({i: int(v) for i, v in enumerate(gt.times)})
            _, mk = _estimate(method, data, clamped, obs, mcmc, cfg.n_blocks)
            row["d_z_known"] = deviation_parents(mk.parents, gt.parents)
            row["d_alpha_known"] = deviation_alphas(mk.strengths, gt.strengths, gt.potential_parents)
        log.info("scenario %s realization %d %s: d_t=%.3f (individual %.3f) d_z=%d",
                 cfg.scenario, r, method, row["d_t"], row["d_t_individual"], row["d_z"])
        rows.append(row)
    return rows


def _run_one(args):
    return run_realization(*args)


METRICS = ("d_t", "d_t_individual", "d_z", "d_alpha", "pct_correct_parent", "d_t_particles_mean",
           "d_z_known", "d_alpha_known", "seconds")


def aggregate(rows: list[dict]) -> dict:
    out = {}
    for method in sorted({r["method"] for r in rows}):
        sub = [r for r in rows if r["method"] == method]
        out[method] = {k: mean_band([r[k] for r in sub]) for k in METRICS if k in sub[0]}
    return out


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every realization; write per-realization CSV and aggregate JSON
    when ``out_dir`` is set. Returns ``{"rows", "aggregate", "files"}``."""
    jobs = [(cfg, r) for r in range(cfg.realizations)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(_run_one, jobs))
    else:
        results = [_run_one(j) for j in jobs]
    rows = [row for rs in results for row in rs]
    agg = aggregate(rows)
    files = {}
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        stem = f"experiment_{cfg.scenario}_seed{cfg.seed}"
        files["csv"] = out / f"{stem}.csv"
        files["json"] = out / f"{stem}_aggregate.json"
        write_rows_csv(files["csv"], rows)
        serialize.dump({"config": config_to_dict(cfg), "aggregate": agg}, files["json"])
    return {"rows": rows, "aggregate": agg, "files": files}


def write_rows_csv(path, rows):
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})


def read_rows_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh)]


def config_to_dict(cfg: ExperimentConfig) -> dict:
    d = {k: v for k, v in cfg.__dict__.items() if k not in ("mcmc", "out_dir", "workers")}
    d["methods"] = list(cfg.methods)
    d["mcmc"] = dict(cfg.mcmc.__dict__)
    return d
