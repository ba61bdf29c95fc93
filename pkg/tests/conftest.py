from __future__ import annotations

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cui_gateway.providers.registry import default_registry  # noqa: E402
from cui_gateway.server import GatewayServer, ServerConfig  # noqa: E402
from cui_gateway.session import TurnLogWriter  # noqa: E402

MOCK = {"stt": {"provider": "mock"}, "llm": {"provider": "mock"}, "tts": {"provider": "mock"}}


def mock_config(**extra) -> dict:
    return {**json.loads(json.dumps(MOCK)), **extra}


@pytest.fixture
def registry():
    return default_registry()


@pytest.fixture
def turn_log_path(tmp_path):
    return tmp_path / "turns.jsonl"


@pytest.fixture
def gateway(turn_log_path):
    """A running loopback server on an ephemeral port."""
    log = TurnLogWriter(turn_log_path)
    server = GatewayServer(ServerConfig(bind_address="127.0.0.1:0"), turn_log=log)
    server.start()
    yield server
    server.shutdown()
    log.close()


# Acceptance bookkeeping: one PASS/FAIL line per numbered criterion.

_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "ok": True, "ran": False})
    if report.when == "call":
        entry["ran"] = True
    if report.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["ok"] and entry["ran"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status}  {entry['title']}")
