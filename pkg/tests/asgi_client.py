"""In-process ASGI requests against the detector app; no server, no sockets."""

import asyncio
import json
from dataclasses import dataclass, field
from typing import Any
from urllib.parse import urlencode


@dataclass
class RawResponse:
    status: int | None = None
    headers: dict[str, str] = field(default_factory=dict)
    body: bytes = b""

    @property
    def content_type(self) -> str:
        return self.headers.get("content-type", "")

    def json(self) -> Any:
        return json.loads(self.body) if self.body else None


def request_raw(app, method: str, path: str, payload: Any | None = None, query: dict[str, Any] | None = None) -> RawResponse:
    return asyncio.run(_request(app, method, path, payload, query))


def request_json(app, method: str, path: str, payload: Any | None = None, query: dict[str, Any] | None = None) -> tuple[int, Any]:
    response = request_raw(app, method, path, payload, query)
    return response.status, response.json()


async def _request(app, method: str, path: str, payload: Any | None, query: dict[str, Any] | None) -> RawResponse:
    pending: bytes | None = b"" if payload is None else json.dumps(payload).encode("utf-8")
    headers = [(b"host", b"testserver")]
    if payload is not None:
        headers += [(b"content-type", b"application/json"), (b"content-length", str(len(pending)).encode("ascii"))]
    scope = {
        "type": "http",
        "asgi": {"spec_version": "2.1"},
        "http_version": "1.1",
        "method": method.upper(),
        "scheme": "http",
        "path": path,
        "raw_path": path.encode("utf-8"),
        "query_string": urlencode(query or {}).encode("ascii"),
        "headers": headers,
    }
    response = RawResponse()
    chunks: list[bytes] = []

    async def receive():
        nonlocal pending
        data, pending = pending or b"", None
        return {"type": "http.request", "body": data, "more_body": False}

    async def send(message):
        if message["type"] == "http.response.start":
            response.status = message["status"]
            response.headers = {k.decode("latin-1").lower(): v.decode("latin-1") for k, v in message.get("headers", [])}
        elif message["type"] == "http.response.body":
            chunks.append(message.get("body", b""))

    await app(scope, receive, send)
    response.body = b"".join(chunks)
    return response
