"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data/domain error, 4 numerical
error. Log verbosity comes from ``DIFFNET_LOG_LEVEL`` (default WARNING).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import serialize
from .adapters import EstimationError, ParseError, load_series_csv, load_stations_csv, locate_epicenter, \
    write_series_csv
from .evaluate import deviation_alphas, deviation_parents, deviation_times, percent_correct_parents, \
    predict_infection_times
from .experiment import ExperimentConfig, run_experiment
from .gibbs import McmcConfig, NumericalError, run_batch_gibbs
from .model import DomainError, InfeasibleStateError, ModelHyperparams
from .obsmodel import GaussianModel
from .particles import map_estimate
from .smcmc import run_online
from .synth import SCENARIOS, generate_ground_truth

log = logging.getLogger("diffnet")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

# fallbacks for shared flags when neither the command line nor --config sets them
DEFAULTS = dict(seed=0, nmcmc=20000, nburn=1000, nthin=10, blocks=4, out=".")


def _shared(p):
    p.add_argument("--seed", type=int)
    p.add_argument("--nmcmc", type=int)
    p.add_argument("--nburn", type=int)
    p.add_argument("--nthin", type=int)
    p.add_argument("--blocks", type=int)
    p.add_argument("--out")
    p.add_argument("--config", help="JSON file of flag defaults")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="diffnet", description="Bayesian diffusion-network inference")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthetic network, cascade and series")
    _shared(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="A")
    p.add_argument("--nodes", type=int, default=10)

    for name in ("infer-batch", "infer-online"):
        p = sub.add_parser(name, help=f"{name.split('-')[1]} inference")
        _shared(p)
        p.add_argument("--data", required=True, help="series CSV")
        p.add_argument("--model", required=True, help="model JSON (hyperparameters + observation model)")

    p = sub.add_parser("eval", help="deviation metrics of an estimate against truth")
    _shared(p)
    p.add_argument("--estimate", required=True, help="MAP state JSON")
    p.add_argument("--truth", required=True, help="ground-truth JSON")
    p.add_argument("--particles", help="particle JSON for percent-correct-parent")
    p.add_argument("--batch-end", type=int)

    p = sub.add_parser("predict", help="predict infection times from particles")
    _shared(p)
    p.add_argument("--particles", required=True)
    p.add_argument("--sources", required=True, help="JSON object {node: observed time}")

    p = sub.add_parser("locate", help="earthquake epicenter from station CSV")
    _shared(p)
    p.add_argument("--stations", required=True)
    p.add_argument("--velocity", type=float, default=13.0, help="km/s")
    p.add_argument("--radius", type=float, default=10.0, help="dummy-source radius, km")
    p.add_argument("--dt", type=float, default=1.0, help="sampling interval, s")

    p = sub.add_parser("experiment", help="scenario preset over many realizations")
    _shared(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="A")
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--realizations", type=int, default=20)
    p.add_argument("--methods", default="batch", help="comma list of batch,online")
    p.add_argument("--known-times", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--kappa", type=float, default=1.0, help="inference prior shape")
    p.add_argument("--theta", type=float, default=1.0, help="inference prior scale")
    return ap


def _resolve(args):
    cfg = {}
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ParseError(f"config {args.config}: {e}") from None
        if not isinstance(cfg, dict):
            raise ParseError(f"config {args.config}: expected a JSON object")
    for k, v in DEFAULTS.items():
        if getattr(args, k) is None:
            setattr(args, k, cfg.get(k, v))
    for k, v in cfg.items():
        k = k.replace("-", "_")
        if k not in DEFAULTS and hasattr(args, k) and k != "config":
            setattr(args, k, v)
    return args


def _mcmc(args) -> McmcConfig:
    return McmcConfig(args.nmcmc, args.nburn, args.nthin, args.seed)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_model(path):
    d = serialize.load(path)
    hyper = serialize.hyper_from_dict(d["hyper"])
    o = d["obs_model"]
    return hyper, GaussianModel(o["mu1"], o["sigma1"], o["mu2"], o["sigma2"])


def cmd_generate(args):
    gt, data, params = generate_ground_truth(args.nodes, args.scenario, args.seed)
    out = _out(args)
    hyper = ModelHyperparams.uniform(gt.potential_parents, 1.0, 1.0, 0.5)
    write_series_csv(out / "data.csv", data)
    serialize.dump(serialize.truth_to_dict(gt, params), out / "truth.json")
    serialize.dump({"hyper": serialize.hyper_to_dict(hyper),
                    "obs_model": {k: params[k] for k in ("mu1", "sigma1", "mu2", "sigma2")}},
                   out / "model.json")
    print(out / "data.csv")


def cmd_infer(args, online):
    data = load_series_csv(args.data)
    hyper, obs = _load_model(args.model)
    out = _out(args)
    if online:
        results = run_online(data, hyper, obs, _mcmc(args), args.blocks)
        for r in results:
            b = r.particles.block.b
            serialize.dump(serialize.particles_to_dict(r.particles), out / f"particles_block{b}.json")
            serialize.dump(serialize.state_to_dict(r.map_state), out / f"map_block{b}.json")
        ps = results[-1].particles
    else:
        ps = run_batch_gibbs(data, hyper, obs, _mcmc(args))
    serialize.dump(serialize.particles_to_dict(ps), out / "particles.json")
    serialize.dump(serialize.state_to_dict(map_estimate(ps, "marginal")), out / "map.json")
    print(out / "map.json")


def cmd_eval(args):
    est = serialize.state_from_dict(serialize.load(args.estimate))
    truth = serialize.truth_from_dict(serialize.load(args.truth))
    end = truth.horizon if args.batch_end is None else args.batch_end
    rep = {
        "d_t": deviation_times(est.times, truth.times, end),
        "d_z": deviation_parents(est.parents, truth.parents),
        "d_alpha": deviation_alphas(est.strengths, truth.strengths, truth.potential_parents),
    }
    if args.particles:
        ps = serialize.particles_from_dict(serialize.load(args.particles))
        rep["percent_correct_parent"] = percent_correct_parents(ps, truth.parents)
    text = serialize.dumps(rep)
    (_out(args) / "report.json").write_text(text)
    sys.stdout.write(text)


def cmd_predict(args):
    ps = serialize.particles_from_dict(serialize.load(args.particles))
    src = args.sources
    try:
        src = json.loads(Path(src).read_text()) if Path(src).is_file() else json.loads(src)
    except json.JSONDecodeError as e:
        raise ParseError(f"sources: {e}") from None
    pred = predict_infection_times(ps, {int(k): v for k, v in src.items()})
    text = serialize.dumps({"mean": pred.mean, "q25": pred.q25, "q75": pred.q75})
    (_out(args) / "prediction.json").write_text(text)
    sys.stdout.write(text)


def cmd_locate(args):
    stations = load_stations_csv(args.stations)
    res = locate_epicenter(stations, args.velocity, args.radius, args.dt, _mcmc(args))
    rep = {
        "lat": res.lat, "lon": res.lon, "dummy_time": res.dummy_time,
        "changepoints": res.changepoints,
        "dummy_infected": [s.id for i, s in enumerate(stations) if res.map_state.parents[i] == len(stations) + i],
    }
    text = serialize.dumps(rep)
    (_out(args) / "epicenter.json").write_text(text)
    sys.stdout.write(text)


def cmd_experiment(args):
    cfg = ExperimentConfig(
        scenario=args.scenario, n_nodes=args.nodes, n_blocks=args.blocks, mcmc=_mcmc(args),
        realizations=args.realizations, methods=tuple(m.strip() for m in args.methods.split(",") if m.strip()),
        known_times=args.known_times, prior_kappa=args.kappa, prior_theta=args.theta,
        out_dir=args.out, workers=args.workers,
    )
    res = run_experiment(cfg)
    sys.stdout.write(serialize.dumps(res["aggregate"]))


COMMANDS = {
    "generate": cmd_generate,
    "infer-batch": lambda a: cmd_infer(a, False),
    "infer-online": lambda a: cmd_infer(a, True),
    "eval": cmd_eval,
    "predict": cmd_predict,
    "locate": cmd_locate,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DIFFNET_LOG_LEVEL", "WARNING").upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        COMMANDS[args.command](_resolve(args))
    except NumericalError as e:
        log.error("numerical error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (DomainError, InfeasibleStateError, EstimationError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    return 0


if __name__ == "__main__":
    sys.exit(main())
