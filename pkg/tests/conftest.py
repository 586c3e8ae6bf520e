import logging
import socket
import threading
import time

import pytest
import torch
import uvicorn

from server import create_app

UNREACHABLE_ENDPOINT = "http://127.0.0.1:9/analyze"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow training tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _isolated_environment(monkeypatch):
    for name in ("SMARTEDIT_SEED", "SMARTEDIT_OUTPUT_DIR", "SMARTEDIT_TAU", "SMARTEDIT_DATABASE_URL"):
        monkeypatch.delenv(name, raising=False)
    torch.manual_seed(0)


@pytest.fixture(autouse=True)
def _restore_root_logging():
    root = logging.getLogger()
    handlers, level = root.handlers[:], root.level
    yield
    root.handlers[:] = handlers
    root.setLevel(level)


def _free_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture
def unreachable_endpoint() -> str:
    return UNREACHABLE_ENDPOINT


@pytest.fixture
def serve():
    """Start ``create_app(analyzer)`` on a free port; yields a function returning the /analyze URL"""
    servers = []

    def start(analyzer=None) -> str:
        port = _free_port()
        server = uvicorn.Server(uvicorn.Config(create_app(analyzer), host="127.0.0.1", port=port, log_level="warning"))
        thread = threading.Thread(target=server.run, daemon=True)
        thread.start()
        deadline = time.monotonic() + 10
        while not server.started:
            if time.monotonic() > deadline:
                raise RuntimeError("mock endpoint did not start")
            time.sleep(0.02)
        servers.append((server, thread))
        return f"http://127.0.0.1:{port}/analyze"

    yield start
    for server, thread in servers:
        server.should_exit = True
        thread.join(timeout=5)
