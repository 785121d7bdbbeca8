import numpy as np
import pytest

import convbf.wpd as wpd_module

ACCEPTANCE_LINES = []
SOLVE_RESIDUALS = []

_solve_weights = wpd_module.solve_weights


def _recording_solve_weights(cov, v, layout, G=None):
    w = _solve_weights(cov, v, layout, G)
    SOLVE_RESIDUALS.append(w.constraint_residual(
        v if isinstance(v, wpd_module.SteeringVector) else wpd_module.SteeringVector(v)))
    return w


wpd_module.solve_weights = _recording_solve_weights


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_pd(rng, n, cond_floor=0.1):
    a = crandn(rng, n, n)
    return a @ a.conj().T + cond_floor * n * np.eye(n)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
    if SOLVE_RESIDUALS:
        worst = max(SOLVE_RESIDUALS)
        status = "PASS" if worst < 1e-8 else "FAIL"
        terminalreporter.write_line(
            f"[{status}] suite-wide distortionless residual: {len(SOLVE_RESIDUALS)} "
            f"solve_weights calls, max {worst:.2e} (< 1e-8)")


def pytest_sessionfinish(session, exitstatus):
    if SOLVE_RESIDUALS and max(SOLVE_RESIDUALS) >= 1e-8 and exitstatus == 0:
        session.exitstatus = 1
