import pytest

from jitroute.workflow import ConfigSpace


@pytest.fixture
def chain3():
    return ConfigSpace.of_size(3, 3)


@pytest.fixture(scope="session")
def reference():
    from jitroute.scenario import load_scenario
    return load_scenario("self_refine")


@pytest.fixture(scope="session")
def reference_comparison(reference):
    """Every policy swept over the reference scenario's rates and seeds."""
    from jitroute.metrics import compare_policies
    return compare_policies(reference)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one verdict line per acceptance criterion."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
