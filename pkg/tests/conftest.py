import pytest

from ustatbound import rng


@pytest.fixture(autouse=True)
def _single_thread():
    rng.set_threads(1)
    yield
    rng.set_threads(1)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, label, passed, detail in sorted(RESULTS, key=lambda r: r[0]):
        suffix = f"  [{detail}]" if detail else ""
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {label}{suffix}")
