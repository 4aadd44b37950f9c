import numpy as np
import pytest

from diffnet.model import NULL, InfectionState, ModelHyperparams


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def chain_state(times, parents, strengths):
    """State from plain lists (``None`` for null)."""
    conv = lambda xs: np.array([NULL if v is None else v for v in xs], dtype=np.int64)
    return InfectionState(conv(parents), conv(times), np.asarray(strengths, dtype=float))


def small_hyper(pp, kappa=1.0, theta=1.0, rate=0.5, **kw):
    return ModelHyperparams.uniform(pp, kappa, theta, rate, **kw)


def tv_distance(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = sorted(getattr(mod, "RESULTS", []), key=lambda s: int(s.split()[1].rstrip(":")))
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
