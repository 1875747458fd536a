import socket

import pytest

from ragloop.corpus import KnowledgeUnit, UnitKind
from ragloop.embedder import mock_config
from ragloop.vecstore import build_kb


@pytest.fixture
def no_network(monkeypatch):
    """Make any socket connection attempt raise, proving a path is offline."""

    def _blocked(*args, **kwargs):
        raise AssertionError("network access attempted during an offline test")

    monkeypatch.setattr(socket.socket, "connect", _blocked)
    monkeypatch.setattr(socket, "create_connection", _blocked)


def make_units(contents: list[str], doc_prefix: str = "doc") -> list[KnowledgeUnit]:
    return [
        KnowledgeUnit(
            unit_id=f"{doc_prefix}{i}:text_chunk:0",
            doc_id=f"{doc_prefix}{i}",
            kind=UnitKind.TEXT_CHUNK,
            ordinal=0,
            content=content,
            char_span=(0, len(content)),
        )
        for i, content in enumerate(contents)
    ]


@pytest.fixture
def small_kb():
    contents = [f"subject {i} alpha{i} bravo{i} charlie{i}" for i in range(6)]
    return build_kb(make_units(contents), mock_config(dim=64, seed=3))


# Acceptance suite reporting: one PASS/FAIL line per criterion at the end of
# the run, keyed off the marker set in test_acceptance.py.


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): top-level acceptance criterion with a summary line"
    )


_acceptance_results: dict[str, str] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0] if marker.args else item.name
    # keep the worst outcome if a criterion spans multiple tests
    prior = _acceptance_results.get(name)
    status = "PASS" if report.passed else "FAIL"
    if prior != "FAIL":
        _acceptance_results[name] = status


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _acceptance_results.items():
        terminalreporter.write_line(f"{status}  {name}")
