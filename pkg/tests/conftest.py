"""Shared fixtures: in-process HTTP stubs standing in for model servers."""

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from prunerank.scorer import LexicalScorer, encode_score_result


class StubServer:
    """Tiny JSON server; ``routes`` maps a path to ``fn(payload) -> (status, body)``."""

    def __init__(self, routes):
        self.routes = routes
        self.calls = []
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                n = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(n) or b"null")
                stub.calls.append((self.path, payload))
                route = stub.routes.get(self.path)
                if route is None:
                    status, body = 404, {"error": "no route"}
                else:
                    status, body = route(payload)
                data = body if isinstance(body, bytes) else json.dumps(body).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.url = "http://127.0.0.1:%d" % self.httpd.server_address[1]
        self.thread = threading.Thread(target=self.httpd.serve_forever, args=(0.05,), daemon=True)

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


def lexical_score_route(payload):
    """A model server that answers /v1/score with the lexical scorer."""
    scorer = LexicalScorer()
    results = [encode_score_result(scorer.score(payload["query"], p)) for p in payload["passages"]]
    return 200, {"results": results}


@pytest.fixture
def stub_server():
    servers = []

    def start(routes):
        s = StubServer(routes).__enter__()
        servers.append(s)
        return s

    yield start
    for s in servers:
        s.__exit__(None, None, None)


@pytest.fixture
def dead_url():
    """A URL on a port nothing listens on."""
    httpd = ThreadingHTTPServer(("127.0.0.1", 0), BaseHTTPRequestHandler)
    port = httpd.server_address[1]
    httpd.server_close()
    return "http://127.0.0.1:%d" % port


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
