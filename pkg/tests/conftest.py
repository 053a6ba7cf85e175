import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from divtest.simplex import Distribution, make_distribution

settings.register_profile("divtest", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("divtest")

P_FIG = (0.15, 0.6, 0.25)
Q_A = (0.45, 0.15, 0.4)
Q_B = (0.6, 0.3, 0.1)


@st.composite
def distributions(draw, k=None, min_k=2, max_k=6, floor=0.02):
    """Interior distributions with every entry at least ``floor / k``."""
    if k is None:
        k = draw(st.integers(min_k, max_k))
    raw = draw(st.lists(st.floats(0.05, 1.0), min_size=k, max_size=k))
    p = np.asarray(raw) / np.sum(raw)
    p = (1 - floor) * p + floor / k
    return Distribution(p / p.sum())


@st.composite
def distribution_pairs(draw, min_k=2, max_k=6, floor=0.02):
    k = draw(st.integers(min_k, max_k))
    P = draw(distributions(k=k, floor=floor))
    Q = draw(distributions(k=k, floor=floor))
    return P, Q


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture
def p_fig():
    return make_distribution(P_FIG)


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
