import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from beliefcal.datamodel import validate_dataset

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def active_records(prior, posterior, signal, outcome, arms, **extra):
    recs = []
    for i, (x0, x, s, y, z) in enumerate(zip(prior, posterior, signal, outcome, arms)):
        rec = dict(id=f"r{i}", arm=z, prior=x0, posterior=x, signal=s, outcome_post=y)
        for key, vals in extra.items():
            rec[key] = vals[i]
        recs.append(rec)
    return recs


def panel_dataset(delta_x, delta_y, prior=None):
    n = len(delta_x)
    prior = np.zeros(n) if prior is None else prior
    recs = [
        dict(
            id=f"p{i}",
            prior=float(prior[i]),
            posterior=float(prior[i] + delta_x[i]),
            outcome_pre=0.0,
            outcome_post=float(delta_y[i]),
        )
        for i in range(n)
    ]
    return validate_dataset(recs, "panel")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
