import json
import random
import threading
import urllib.error
import urllib.request
from concurrent.futures import ThreadPoolExecutor

import pytest

from prunerank.config import ServiceConfig
from prunerank.errors import BindError
from prunerank.scorer import LexicalScorer, ScorerConfig, encode_score_result
from prunerank.service import PruneService, make_server, serve

from conftest import lexical_score_route


def request(base, path, payload=None, raw=None):
    data = raw if raw is not None else (None if payload is None else json.dumps(payload).encode())
    req = urllib.request.Request(base + path, data=data, method="POST" if data is not None else "GET")
    req.add_header("Content-Type", "application/json")
    try:
        with urllib.request.urlopen(req, timeout=10) as resp:
            return resp.status, json.loads(resp.read())
    except urllib.error.HTTPError as exc:
        return exc.code, json.loads(exc.read())


@pytest.fixture
def running():
    servers = []

    def start(config=None, scorer=None):
        server = make_server(config or ServiceConfig("127.0.0.1:0", max_batch=4), scorer)
        t = threading.Thread(target=server.serve_forever, args=(0.05,), daemon=True)
        t.start()
        servers.append(server)
        return "http://127.0.0.1:%d" % server.server_address[1]

    yield start
    for s in servers:
        s.shutdown()
        s.server_close()


P1 = "Capital France. Bananas are yellow."
P2 = "Paris is the capital of France."


def test_healthz(running):
    base = running()
    assert request(base, "/healthz") == (200, {"status": "ok"})
    assert request(base, "/nope")[0] == 404


def test_prune_order_and_shape(running):
    base = running()
    status, body = request(base, "/v1/prune", {"query": "capital france", "passages": [P1, P2]})
    assert status == 200
    results = body["results"]
    assert [r["index"] for r in results] == [0, 1]
    assert results[0]["kept"] == [0] and results[0]["pruned_text"] == "Capital France."
    assert set(results[0]) == {"index", "score", "kept", "pruned_text", "compression"}
    assert body["model_info"] == {"backend": "lexical", "threshold": 0.5, "basis": "characters"}


def test_prune_threshold_override(running):
    base = running()
    _, body = request(base, "/v1/prune", {"query": "capital france", "passages": [P2], "threshold": 0.0})
    assert body["results"][0]["compression"] == 0.0


def test_prune_top_k(running):
    base = running()
    passages = ["Bananas are yellow.", P1, "Capital France capital.", P2]
    _, body = request(base, "/v1/prune", {"query": "capital france", "passages": passages, "top_k": 2})
    res = body["results"]
    assert [r["index"] for r in res] == sorted(r["index"] for r in res)
    assert sorted(r["rank"] for r in res) == [1, 2]
    assert {r["index"] for r in res} == {1, 2}


def test_batch_limit(running):
    base = running()
    status, body = request(base, "/v1/prune", {"query": "q", "passages": ["a."] * 5})
    assert status == 413
    assert body["error"]["code"] == "batch_too_large" and body["error"]["max_batch"] == 4


@pytest.mark.parametrize(
    "payload",
    [
        {"passages": ["a"]},
        {"query": "q", "passages": "a"},
        {"query": "q", "passages": [1]},
        {"query": "q", "passages": ["a"], "threshold": 2},
        {"query": "q", "passages": ["a"], "threshold": True},
        {"query": "q", "passages": ["a"], "top_k": 0},
        ["not", "an", "object"],
    ],
)
def test_bad_requests(running, payload):
    status, body = request(running(), "/v1/prune", payload)
    assert status == 400 and body["error"]["code"] == "bad_request"


def test_invalid_json(running):
    status, body = request(running(), "/v1/prune", raw=b"{nope")
    assert status == 400


def test_score_endpoint(running):
    base = running()
    _, body = request(base, "/v1/score", {"query": "capital", "passages": [P1, P2], "return_tokens": True})
    want = [encode_score_result(LexicalScorer().score("capital", p)) for p in (P1, P2)]
    assert body["results"] == json.loads(json.dumps(want))
    _, body = request(base, "/v1/score", {"query": "capital", "passages": [P1], "return_tokens": False})
    assert set(body["results"][0]) == {"score"}


def test_remote_backend_proxy(running, stub_server):
    model = stub_server({"/v1/score": lexical_score_route})
    config = ServiceConfig("127.0.0.1:0", scorer=ScorerConfig("remote", endpoint=model.url))
    base = running(config)
    local = running()
    payload = {"query": "capital france", "passages": [P1, P2]}
    assert request(base, "/v1/prune", payload)[1]["results"] == request(local, "/v1/prune", payload)[1]["results"]
    _, body = request(base, "/v1/score", payload)
    assert len(body["results"]) == 2


def test_remote_backend_down(running, dead_url):
    config = ServiceConfig("127.0.0.1:0", scorer=ScorerConfig("remote", endpoint=dead_url, timeout=1))
    status, body = request(running(config), "/v1/prune", {"query": "q", "passages": ["a."]})
    assert status == 502


def test_stateless_replay(running):
    base = running(ServiceConfig("127.0.0.1:0", max_batch=16))
    rng = random.Random(5)
    words = "capital france paris bananas yellow river city the of is".split()
    log = []
    for _ in range(25):
        passages = [
            " ".join(rng.choice(words) for _ in range(rng.randint(2, 8))) + ". " + " ".join(rng.choice(words) for _ in range(3)) + "."
            for _ in range(rng.randint(1, 4))
        ]
        log.append({"query": " ".join(rng.sample(words, 2)), "passages": passages, "threshold": rng.choice([0.2, 0.5, 0.9])})
    first = [request(base, "/v1/prune", p)[1] for p in log]
    order = list(range(len(log)))
    rng.shuffle(order)
    with ThreadPoolExecutor(4) as pool:
        replay = list(pool.map(lambda i: request(base, "/v1/prune", log[i])[1], order))
    for i, body in zip(order, replay):
        assert body == first[i]


def test_bind_error():
    server = make_server(ServiceConfig("127.0.0.1:0"))
    try:
        port = server.server_address[1]
        with pytest.raises(BindError):
            make_server(ServiceConfig(f"127.0.0.1:{port}"))
    finally:
        server.server_close()


def test_serve_health_check_failure(dead_url):
    config = ServiceConfig("127.0.0.1:0", scorer=ScorerConfig("remote", endpoint=dead_url, timeout=1))
    assert serve(config) == 2


def test_service_object_direct():
    svc = PruneService(ServiceConfig("127.0.0.1:0"))
    out = svc.prune({"query": "capital france", "passages": [P1]})
    assert out["results"][0]["kept"] == [0]
