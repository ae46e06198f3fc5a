import time

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nscongestion.game import Affine, GameSpec, MixedProfile
from nscongestion.grid import build_congestion_game, default_network, reduce_grid
from nscongestion.learning import LearnerConfig, run

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile("default")

FULL_N = 1500
FULL_SEEDS = 20

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []
TIMINGS = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_symmetric_game(rng, n_max=4, m_max=3, n_min=1, m_min=1, max_profiles=None):
    while True:
        n = int(rng.integers(n_min, n_max + 1))
        m = int(rng.integers(m_min, m_max + 1))
        if max_profiles is None or m**n <= max_profiles:
            break
    alpha = rng.uniform(0.1, 5.0, size=m)
    lam = Affine(float(rng.uniform(0.0, 2.0)), float(rng.uniform(0.1, 3.0)))
    return GameSpec.symmetric(alpha, n, lam, float(rng.uniform(0.0, 2.0)))


@pytest.fixture(scope="session")
def default_net():
    return default_network()


@pytest.fixture(scope="session")
def default_reduction(default_net):
    return reduce_grid(default_net, default_net.pricing, FULL_N * default_net.pricing.rho_kwh)


@pytest.fixture(scope="session")
def feeder_game(default_net, default_reduction):
    return build_congestion_game(default_net, default_net.pricing, default_reduction, FULL_N)


@pytest.fixture(scope="session")
def feeder_runs(feeder_game):
    """The 20 seeded synchronous runs of the full-scale experiment."""
    init = MixedProfile.uniform(FULL_N, feeder_game.n_resources)
    start = time.perf_counter()
    out = []
    for seed in range(FULL_SEEDS):
        cfg = LearnerConfig.for_game(feeder_game, delta=0.5, mode="sync", max_iterations=5000,
                                     seed=seed, snapshot_stride=10**9)
        out.append(run(feeder_game, cfg, init))
    TIMINGS["feeder_runs"] = time.perf_counter() - start
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
