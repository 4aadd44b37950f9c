"""Canonical JSON for states, particle sets and reports.

Keys are sorted and floats written with 12 significant digits, so equal
inputs give byte-identical files.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .model import NULL, BlockIndex, DomainError, InfectionState, ModelHyperparams
from .particles import ParticleSet
from .synth import GroundTruth

SIG_DIGITS = 12


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
        return float(f"{x:.{SIG_DIGITS}g}")
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":")) + "\n"


def dump(obj, path):
    Path(path).write_text(dumps(obj))


def load(path):
    return json.loads(Path(path).read_text())


def _nullable(seq):
    return [None if v == NULL else int(v) for v in seq]


def _unnull(seq):
    return np.array([NULL if v is None else int(v) for v in seq], dtype=np.int64)


def state_to_dict(s: InfectionState) -> dict:
    return {"parents": _nullable(s.parents), "times": _nullable(s.times), "strengths": s.strengths}


def state_from_dict(d) -> InfectionState:
    try:
        return InfectionState(_unnull(d["parents"]), _unnull(d["times"]), np.asarray(d["strengths"], dtype=float))
    except KeyError as e:
        raise DomainError(f"state is missing field {e}") from None


def particles_to_dict(ps: ParticleSet) -> dict:
    return {
        "block": {"b": ps.block.b, "start": ps.block.start, "end": ps.block.end},
        "seed": ps.seed,
        "parents": [_nullable(r) for r in ps.parents],
        "times": [_nullable(r) for r in ps.times],
        "strengths": ps.strengths,
        "iterations": ps.iterations,
        "log_posterior": ps.log_posterior,
        "anchors": None if ps.anchors is None else ps.anchors,
        "acceptance_rate": ps.acceptance_rate,
    }


def particles_from_dict(d) -> ParticleSet:
    b = d["block"]
    return ParticleSet(
        np.stack([_unnull(r) for r in d["parents"]]),
        np.stack([_unnull(r) for r in d["times"]]),
        np.asarray(d["strengths"], dtype=float),
        BlockIndex(b["b"], b["start"], b["end"]),
        int(d["seed"]),
        np.asarray(d["iterations"], dtype=np.int64),
        np.array([_lp(v) for v in d["log_posterior"]], dtype=float),
        None if d.get("anchors") is None else np.asarray(d["anchors"], dtype=np.int64),
        d.get("acceptance_rate"),
    )


def _lp(v):
    if isinstance(v, str):
        return float(v)
    return math.nan if v is None else float(v)


def hyper_to_dict(h: ModelHyperparams) -> dict:
    return {
        "potential_parents": [list(p) for p in h.potential_parents],
        "kappa": h.kappa, "theta": h.theta, "proposal_rate": h.proposal_rate,
        "delays": h.delays, "clamped": {str(k): (None if v == NULL else v) for k, v in h.clamped.items()},
    }


def hyper_from_dict(d) -> ModelHyperparams:
    pp = [tuple(p) for p in d["potential_parents"]]
    n = len(pp)
    return ModelHyperparams(
        pp, np.asarray(d.get("kappa", 1.0), dtype=float), np.asarray(d.get("theta", 1.0), dtype=float),
        np.asarray(d.get("proposal_rate", 0.5), dtype=float),
        None if d.get("delays") is None else np.asarray(d["delays"]).reshape(n, n),
        {int(k): (NULL if v is None else v) for k, v in (d.get("clamped") or {}).items()},
    )


def truth_to_dict(gt: GroundTruth, params=None) -> dict:
    return {
        "potential_parents": [list(p) for p in gt.potential_parents],
        "tree_parents": _nullable(gt.tree_parents),
        "strengths": gt.strengths,
        "parents": _nullable(gt.parents),
        "times": _nullable(gt.times),
        "horizon": gt.horizon,
        "params": params or {},
    }


def truth_from_dict(d) -> GroundTruth:
    return GroundTruth(
        tuple(tuple(p) for p in d["potential_parents"]), _unnull(d["tree_parents"]),
        np.asarray(d["strengths"], dtype=float), _unnull(d["parents"]), _unnull(d["times"]),
        int(d["horizon"]),
    )
