import threading
import time

import pytest
import uvicorn

from logitserve.app import ModelBackend, create_app
from logitserve.tinymodel import build_tiny_model


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    return build_tiny_model(tmp_path_factory.mktemp("tinylm"), seed=0, steps=400)


@pytest.fixture(scope="session")
def backend(checkpoint):
    return ModelBackend(str(checkpoint))


@pytest.fixture(scope="session")
def live_server(backend):
    config = uvicorn.Config(create_app(backend), host="127.0.0.1", port=0, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 30
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.02)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)
