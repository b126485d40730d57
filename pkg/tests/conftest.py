import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lbflats import kernels  # noqa: E402

ACCEPTANCE_LINES = []


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


def report(criterion: str, passed: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
