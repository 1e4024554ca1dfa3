import numpy as np
import pytest

from gravlasov.initial_data import Ensemble

# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict = {}


def record_acceptance(number: int, name: str, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number} {name}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def point_masses(x, w, v=None) -> Ensemble:
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    v = np.zeros_like(x) if v is None else np.asarray(v, dtype=float).reshape(-1, 3)
    return Ensemble(x, v, np.asarray(w, dtype=float).reshape(-1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
