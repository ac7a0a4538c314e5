import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from jmh.model import Instance
from jmh.scenario import ScenarioConfig, generate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_instance(rng, K, N, cap=None, cost_weight=0.5, rate_range=(1e5, 2e7)):
    """Synthetic instance with log-uniform rates and the standard cost classes."""
    rate = np.exp(rng.uniform(*np.log(rate_range), size=(K, N)))
    f = rng.uniform(0.5e7, 2e7, size=(K, N))
    initial = rng.integers(0, N, size=K)
    w = rng.choice([1e5, 2e5, 5e5], size=K)
    cost = np.where(np.arange(N)[None, :] == initial[:, None], 0.0, 1e5 + w[:, None])
    return Instance(rate=rate, isolation_rate=f, degradation=0.25, vm_cap=K if cap is None else cap,
                    cost=cost, cost_weight=cost_weight, rate_weight=1.0, initial=initial)


def oracle_instance(seed):
    """The small generated instances used for exhaustive comparisons."""
    K = [4, 6, 8][seed % 3]
    N = [3, 4][(seed // 3) % 2]
    return generate(ScenarioConfig(n_bs=N, n_users=K, trials=1), seed).instance


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
