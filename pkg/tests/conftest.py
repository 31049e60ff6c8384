import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from prefdist import ContextDist, random_softmax_policy, sample_dataset

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_instance(rng):
    """A 4x5 target, reference and dataset used across objective tests."""
    pi_star = random_softmax_policy(4, 5, 0.7, rng)
    pi0 = random_softmax_policy(4, 5, 0.7, rng)
    d = ContextDist.uniform(4)
    ds = sample_dataset(d, pi0, pi_star, 0.8, 400, rng)
    return pi_star, pi0, d, ds


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    def record(number: int, title: str, passed: bool, detail: str) -> None:
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} | {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
