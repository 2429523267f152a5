"""Local stub web service for adapter contract tests.

The stub answers every POST with the next scripted reply and records the
request bodies it received::

    with StubServer([StubReply(body=chat_body("ACTION: SUPPORT"))]) as stub:
        backend = ChatBackend(model="m", base_url=stub.url)
        ...
"""
from __future__ import annotations

import json
import logging
import threading
import time
import typing as t
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from attrs import define, field, frozen

logger = logging.getLogger(__name__)


@frozen
class StubReply:
    """Scripted reply: HTTP status, body (JSON-encoded unless a string) and
    a delay [s] before answering."""

    body: t.Any = None
    status: int = 200
    delay: float = 0.0


def chat_body(text: str, tokens: t.Optional[int] = None) -> t.Dict[str, t.Any]:
    """Chat-completions response body carrying `text`."""
    body: t.Dict[str, t.Any] = {"choices": [{"message": {"content": text}}]}
    if tokens is not None:
        body["usage"] = {"completion_tokens": tokens}
    return body


def responses_body(text: str, tokens: t.Optional[int] = None) -> t.Dict[str, t.Any]:
    """Responses-style response body carrying `text`."""
    body: t.Dict[str, t.Any] = {
        "output": [{"content": [{"type": "output_text", "text": text}]}]
    }
    if tokens is not None:
        body["usage"] = {"output_tokens": tokens}
    return body


@define
class StubServer:
    """Threaded HTTP stub bound to an ephemeral localhost port.

    Replies are consumed in order; the last one repeats once the list is
    exhausted.
    """

    replies: t.List[StubReply] = field(converter=list)
    requests: t.List[t.Dict[str, t.Any]] = field(factory=list, init=False)
    _lock: threading.Lock = field(factory=threading.Lock, init=False)
    _server: t.Optional[ThreadingHTTPServer] = field(default=None, init=False)
    _thread: t.Optional[threading.Thread] = field(default=None, init=False)

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def next_reply(self, path: str, body: t.Any) -> StubReply:
        with self._lock:
            self.requests.append({"path": path, "body": body})
            index = min(len(self.requests), len(self.replies)) - 1
            return self.replies[index]

    def start(self) -> StubServer:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length).decode("utf-8")
                try:
                    body = json.loads(raw)
                except ValueError:
                    body = raw
                reply = stub.next_reply(self.path, body)
                if reply.delay:
                    time.sleep(reply.delay)
                payload = (
                    reply.body if isinstance(reply.body, str) else json.dumps(reply.body)
                ).encode("utf-8")
                try:
                    self.send_response(reply.status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(payload)))
                    self.end_headers()
                    self.wfile.write(payload)
                except OSError:
                    logger.debug("stub client went away before the reply")

            def log_message(self, format, *args):
                logger.debug(format, *args)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._server.daemon_threads = True
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        logger.debug("stub server listening on %s", self.url)
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> StubServer:
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()
