import numpy as np
import pytest

from expectation_pinn.network import ArchitectureSpec, ParameterSet, init_xavier

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        passed, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")


def random_params(spec: ArchitectureSpec, seed: int, bias_scale: float = 0.1) -> ParameterSet:
    """Xavier weights plus random biases, so no layer is special."""
    rng = np.random.default_rng(seed + 10_000)
    p = init_xavier(spec, seed)
    return ParameterSet(p.weights, [rng.normal(0.0, bias_scale, b.shape) for b in p.biases])


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
