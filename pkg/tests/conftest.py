from importlib import resources

import pytest

from vassterm.model import build, parse_model


def bundled(name):
    return parse_model(resources.files("vassterm.models").joinpath(name + ".json").read_text("utf-8"))


@pytest.fixture(scope="session")
def a1():
    return bundled("a1")


@pytest.fixture(scope="session")
def a2():
    return bundled("a2")


@pytest.fixture(scope="session")
def fig4():
    return bundled("fig4")


@pytest.fixture(scope="session")
def countdown():
    return bundled("countdown")


def self_loop(update, kind="n"):
    prob = [1] if kind == "p" else []
    return build(len(update), [("s", kind)], [("s", update, "s", *prob)])


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
