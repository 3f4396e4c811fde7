"""Scriptable local chat-completions server for offline tests."""
from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Any, Sequence


@dataclass
class StubReply:
    content: str = ""
    status: int = 200
    # sent verbatim instead of a completion payload when set
    raw_body: str | None = None
    usage: dict[str, int] | None = None


class StubServer:
    """Serves canned replies in order and records every request body.

    Once the script runs out every request gets HTTP 500.
    """

    def __init__(self, script: Sequence[StubReply | str]):
        if not script:
            raise ValueError("stub script must not be empty")
        self._script = [s if isinstance(s, StubReply) else StubReply(content=s) for s in script]
        self.requests: list[dict[str, Any]] = []
        self.headers: list[dict[str, str]] = []
        self._lock = threading.Lock()
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}/v1"

    def _next(self) -> StubReply | None:
        with self._lock:
            return self._script.pop(0) if self._script else None

    def _handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args: Any) -> None:
                pass

            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                try:
                    body = json.loads(raw)
                except ValueError:
                    body = {"_raw": raw.decode("utf-8", "replace")}
                with server._lock:
                    server.requests.append(body)
                    server.headers.append(dict(self.headers))
                reply = server._next()
                if reply is None:
                    self._send(500, json.dumps({"error": "script exhausted"}))
                    return
                if reply.raw_body is not None:
                    self._send(reply.status, reply.raw_body)
                    return
                if reply.status != 200:
                    self._send(reply.status, json.dumps({"error": f"status {reply.status}"}))
                    return
                payload = {
                    "id": f"stub-{len(server.requests)}",
                    "object": "chat.completion",
                    "model": body.get("model", "stub"),
                    "choices": [
                        {"index": 0, "message": {"role": "assistant", "content": reply.content}, "finish_reason": "stop"}
                    ],
                }
                if reply.usage is not None:
                    payload["usage"] = reply.usage
                self._send(200, json.dumps(payload))

            def _send(self, status: int, text: str) -> None:
                data = text.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

        return Handler

    def start(self) -> "StubServer":
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()

    def __enter__(self) -> "StubServer":
        return self.start()

    def __exit__(self, *exc: object) -> None:
        self.stop()


def stub_server(script: Sequence[StubReply | str]) -> StubServer:
    return StubServer(script).start()
