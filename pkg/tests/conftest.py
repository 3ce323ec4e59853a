import pytest

from evbehave import features, synth


@pytest.fixture(scope="session")
def labeled_default():
    return synth.generate(synth.default_archetypes(), seed=0)


@pytest.fixture(scope="session")
def default_matrix(labeled_default):
    return features.build_matrix(labeled_default.dataset)


@pytest.fixture(scope="session")
def labeled_small():
    return synth.generate(synth.default_archetypes(n_users=24, sessions_per_user=30), seed=3)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
