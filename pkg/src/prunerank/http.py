"""Minimal JSON-over-HTTP helper shared by the remote clients."""

from __future__ import annotations

import json
import socket
import urllib.error
import urllib.request
from typing import Any

from .errors import MalformedResponse, RemoteUnavailable


def post_json(url: str, payload: Any, timeout: float, unavailable=RemoteUnavailable) -> Any:
    """POST ``payload`` as JSON and return the decoded reply.

    Connection failures, timeouts and HTTP 5xx raise ``unavailable``;
    HTTP 4xx and undecodable bodies raise ``MalformedResponse``.
    """
    body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
    req = urllib.request.Request(url, data=body, headers={"Content-Type": "application/json"}, method="POST")
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            raw = resp.read()
    except urllib.error.HTTPError as exc:
        if exc.code >= 500:
            raise unavailable(f"{url}: HTTP {exc.code}") from exc
        raise MalformedResponse(f"{url}: HTTP {exc.code}") from exc
    except (urllib.error.URLError, socket.timeout, ConnectionError, TimeoutError) as exc:
        raise unavailable(f"{url}: {exc}") from exc
    try:
        return json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedResponse(f"{url}: reply is not JSON") from exc
