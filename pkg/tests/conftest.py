import pytest

# criterion id -> (passed, detail), filled by the acceptance module
ACCEPTANCE_RESULTS = {}


def record(cid: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_RESULTS[cid] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE_RESULTS, key=lambda c: int(c.split()[0])):
        ok, detail = ACCEPTANCE_RESULTS[cid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {cid}: {detail}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(12345)
