import numpy as np
import pytest

from pjmp.config import load_config
from pjmp.model import validate_model
from pjmp.statespace import build_rate_matrix, enumerate_reachable
from pjmp.verify import Certifier


def affine_model(weights, a=1.0, b=1.0, ceiling=1, **intensity):
    return validate_model(
        {"weights": weights, "intensity": {"family": "affine", "a": a, "b": b, **intensity}, "ceiling": ceiling}
    )


@pytest.fixture(scope="session")
def single():
    """One neuron with constant unit intensity, started at the ceiling."""
    model = affine_model([[0]], a=1.0, b=0.0)
    return Certifier.build(model, [1])


@pytest.fixture(scope="session")
def pair():
    cfg = load_config("pair_symmetric")
    return Certifier.build(cfg.network, cfg.initial_state)


@pytest.fixture(scope="session")
def triple():
    cfg = load_config("triple_chain")
    return Certifier.build(cfg.network, cfg.initial_state)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_Q(model, space):
    return build_rate_matrix(model, space).toarray()


def reachable(weights, x0, **kw):
    model = affine_model(weights, **kw)
    return model, enumerate_reachable(model, x0)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import ACCEPTANCE

    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
