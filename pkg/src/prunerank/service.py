"""HTTP pruning service.

Endpoints:

* ``GET /healthz`` -> ``{"status": "ok"}``
* ``POST /v1/prune`` -> pruned passages, one result per input passage in order
* ``POST /v1/score`` -> the scorer wire format, answered by the configured backend

The request handlers are stateless; all per-request work goes through the
thread-safe engine functions.
"""

from __future__ import annotations

import json
import logging
import signal
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Optional

from .config import ServiceConfig
from .errors import BindError, InputError, PruneRankError, RemoteError
from .pruner import PruningOptions, prune_scored
from .scorer import RemoteScorer, Scorer, as_scorer, encode_score_result
from .segmenter import segment

logger = logging.getLogger(__name__)

MAX_BODY_BYTES = 16 * 1024 * 1024


class RequestError(Exception):
    def __init__(self, status: int, code: str, message: str, **extra):
        super().__init__(message)
        self.status = status
        self.body = {"error": {"code": code, "message": message, **extra}}


def _require_passages(payload: Any, max_batch: int) -> tuple[str, list[str]]:
    if not isinstance(payload, dict):
        raise RequestError(400, "bad_request", "body must be a JSON object")
    query = payload.get("query")
    passages = payload.get("passages")
    if not isinstance(query, str) or not query.strip():
        raise RequestError(400, "bad_request", "query must be a non-empty string")
    if not isinstance(passages, list) or not all(isinstance(p, str) for p in passages):
        raise RequestError(400, "bad_request", "passages must be a list of strings")
    if len(passages) > max_batch:
        raise RequestError(
            413, "batch_too_large", f"{len(passages)} passages exceed the limit of {max_batch}", max_batch=max_batch
        )
    return query, passages


class PruneService:
    def __init__(self, config: ServiceConfig, scorer: Optional[Scorer] = None):
        self.config = config
        self.scorer = scorer if scorer is not None else as_scorer(config.scorer)

    def model_info(self, threshold: float) -> dict:
        return {
            "backend": getattr(self.scorer, "name", type(self.scorer).__name__),
            "threshold": threshold,
            "basis": self.config.basis,
        }

    def health_check(self) -> None:
        """Score a probe passage; raises if the backend is unusable."""
        self.scorer.score("health check", "health check probe.")

    def prune(self, payload: Any) -> dict:
        query, passages = _require_passages(payload, self.config.max_batch)
        threshold = payload.get("threshold", self.config.default_threshold)
        top_k = payload.get("top_k")
        language = payload.get("language")
        if isinstance(threshold, bool) or not isinstance(threshold, (int, float)) or not 0 <= threshold <= 1:
            raise RequestError(400, "bad_request", "threshold must be a number in [0, 1]")
        if top_k is not None and (isinstance(top_k, bool) or not isinstance(top_k, int) or top_k < 1):
            raise RequestError(400, "bad_request", "top_k must be a positive integer")
        opts = PruningOptions(float(threshold), self.config.always_keep_first, self.config.basis)
        results = []
        for i, text in enumerate(passages):
            seg = segment(text, language)
            pruned = prune_scored(self.scorer.score(query, seg), seg, opts)
            results.append({"index": i, **pruned.to_dict()})
        if top_k is not None:
            order = sorted(range(len(results)), key=lambda i: (-results[i]["score"], i))
            for rank, i in enumerate(order, 1):
                results[i]["rank"] = rank
            results = [r for r in results if r["rank"] <= top_k]
        return {"results": results, "model_info": self.model_info(float(threshold))}

    def score(self, payload: Any) -> dict:
        query, passages = _require_passages(payload, self.config.max_batch)
        return_tokens = payload.get("return_tokens", True)
        if isinstance(self.scorer, RemoteScorer):
            scored = self.scorer.score_many(query, passages)
        else:
            scored = [self.scorer.score(query, p) for p in passages]
        results = [encode_score_result(s) for s in scored]
        if not return_tokens:
            results = [{"score": r["score"]} for r in results]
        return {"results": results}


class _Server(ThreadingHTTPServer):
    # Worker threads are joined on server_close, which drains in-flight requests.
    daemon_threads = False
    block_on_close = True


def _make_handler(service: PruneService, slots: threading.BoundedSemaphore):
    config = service.config

    class Handler(BaseHTTPRequestHandler):
        timeout = config.request_timeout
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            logger.debug("%s " + fmt, self.address_string(), *args)

        def _send(self, status: int, body: dict) -> None:
            data = json.dumps(body, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self):
            if self.path == "/healthz":
                self._send(200, {"status": "ok"})
            else:
                self._send(404, {"error": {"code": "not_found", "message": self.path}})

        def do_POST(self):
            routes = {"/v1/prune": service.prune, "/v1/score": service.score}
            route = routes.get(self.path)
            try:
                length = int(self.headers.get("Content-Length", "0"))
            except ValueError:
                length = -1
            if route is None:
                self._discard(length)
                self._send(404, {"error": {"code": "not_found", "message": self.path}})
                return
            if length < 0 or length > MAX_BODY_BYTES:
                self.close_connection = True
                self._send(413, {"error": {"code": "body_too_large", "message": "request body too large"}})
                return
            if not slots.acquire(timeout=config.request_timeout):
                self._discard(length)
                self._send(503, {"error": {"code": "busy", "message": "too many concurrent requests"}})
                return
            try:
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
                self._send(200, route(payload))
            except RequestError as exc:
                self._send(exc.status, exc.body)
            except (UnicodeDecodeError, json.JSONDecodeError):
                self._send(400, {"error": {"code": "bad_request", "message": "body is not valid JSON"}})
            except RemoteError as exc:
                self._send(502, {"error": {"code": "scorer_unavailable", "message": str(exc)}})
            except (InputError, ValueError) as exc:
                self._send(400, {"error": {"code": "bad_request", "message": str(exc)}})
            finally:
                slots.release()

        def _discard(self, length: int) -> None:
            if length > 0:
                self.rfile.read(min(length, MAX_BODY_BYTES))

    return Handler


def make_server(config: ServiceConfig, scorer: Optional[Scorer] = None) -> ThreadingHTTPServer:
    """Bind a server without starting it; port 0 picks a free port."""
    service = PruneService(config, scorer)
    host, port = config.host_port()
    handler = _make_handler(service, threading.BoundedSemaphore(config.max_concurrency))
    try:
        server = _Server((host, port), handler)
    except OSError as exc:
        raise BindError(f"cannot bind {host}:{port}: {exc}") from exc
    server.service = service
    return server


def serve(config: ServiceConfig, scorer: Optional[Scorer] = None) -> int:
    """Run until SIGINT/SIGTERM; returns a process exit code."""
    server = make_server(config, scorer)
    try:
        server.service.health_check()
    except PruneRankError as exc:
        logger.error("startup health check failed: %s", exc)
        server.server_close()
        return 2

    def stop(signum, _frame):
        logger.info("signal %d received, draining", signum)
        threading.Thread(target=server.shutdown, daemon=True).start()

    previous = {s: signal.signal(s, stop) for s in (signal.SIGINT, signal.SIGTERM)}
    host, port = server.server_address[:2]
    logger.info("serving on %s:%d", host, port)
    try:
        server.serve_forever()
    finally:
        server.server_close()
        for s, h in previous.items():
            signal.signal(s, h)
    return 0
