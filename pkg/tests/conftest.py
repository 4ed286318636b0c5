import pytest

from eomp import RngSpec, gaussian_ensemble, k_sparse_gaussian_signal, synthesize

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def record_criterion():
    def record(number, passed, detail):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def planted(n, m, k, seed):
    """Gaussian dictionary, planted signal and its observation for one seed."""
    d = gaussian_ensemble(n, m, RngSpec(seed))
    s = k_sparse_gaussian_signal(m, k, RngSpec(seed).child("signal"))
    return d, s, synthesize(d, s)
