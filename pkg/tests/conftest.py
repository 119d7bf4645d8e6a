import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def pytest_terminal_summary(terminalreporter):
    import acceptance_log

    if acceptance_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_log.LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def single_run():
    """Canonical single-strain run; also returns wall time of simulate + analyze."""
    import time

    from multisir.experiments import single_strain_scenario
    from multisir.metrics import analyze
    from multisir.sequence import compute_sequence
    from multisir.sim import simulate

    sc = single_strain_scenario()
    start = time.perf_counter()
    traj = simulate(sc.sim, sc.model, sc.init)
    outcome = compute_sequence(sc.model)
    report = analyze(traj, outcome, sc.measure)
    return sc, traj, outcome, report, time.perf_counter() - start


@pytest.fixture(scope="session")
def terrace_verification():
    from multisir.experiments import terrace_scenario, verify_prediction

    return verify_prediction(terrace_scenario(), keep_trajectory=True)


@pytest.fixture(scope="session")
def cross_immunity_verification():
    from multisir.experiments import r0_counterexample_scenario, verify_prediction

    return verify_prediction(r0_counterexample_scenario(), keep_trajectory=True)
