import os

os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import pytest  # noqa: E402

from degreelevel import Resources, default_taxonomy, load_db  # noqa: E402


@pytest.fixture(scope="session")
def tx():
    return default_taxonomy()


@pytest.fixture(scope="session")
def db(tx):
    return load_db(taxonomy=tx)


@pytest.fixture(scope="session")
def res(tx):
    return Resources.default(tx)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
