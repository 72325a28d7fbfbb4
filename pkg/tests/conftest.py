import pytest

from gradsem.church import WorldModel
from gradsem.harness import bundled_manifest_path, load_manifest


@pytest.fixture(scope="session")
def e1_model():
    return WorldModel.bundled("E1")


@pytest.fixture(scope="session")
def e2_model():
    return WorldModel.bundled("E2")


@pytest.fixture(scope="session")
def e1_manifest():
    return load_manifest(bundled_manifest_path("E1"))


@pytest.fixture(scope="session")
def e2_manifest():
    return load_manifest(bundled_manifest_path("E2"))


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda l: int(l.split()[1][1:-1])):
            terminalreporter.write_line(line)
