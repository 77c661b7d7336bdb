from __future__ import annotations

import numpy as np
import pytest

from pirledger.peer import Peer
from pirledger.peer.server import PeerServer


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def live_peer(tmp_path):
    """A persisted peer behind a real HTTP server on an ephemeral port."""
    peer = Peer(data_dir=tmp_path / "peer")
    server = PeerServer(("127.0.0.1", 0), peer)
    server.start_background()
    try:
        yield peer, server.url
    finally:
        server.shutdown()
        server.server_close()


# acceptance reporting: one PASS/FAIL line per criterion after the run

_ACCEPTANCE = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    criterion, summary = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    item.config.stash[_ACCEPTANCE][criterion] = (rep.passed, summary, detail)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_ACCEPTANCE]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results, key=lambda c: int(c[2:])):
        passed, summary, detail = results[criterion]
        line = f"{criterion} {'PASS' if passed else 'FAIL'}  {summary}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
