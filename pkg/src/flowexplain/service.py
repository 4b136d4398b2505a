"""Explain-on-demand HTTP endpoint.

A small synchronous service wrapping the same runtime the CLI uses: POST a
dataset-shaped flow record plus a prompt mode, get the explanation record
back. Intended as the integration surface for an upstream detector that
pushes flagged flows.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .gateway import BackendError
from .pipeline import FieldValidationError, PipelineError, Runtime
from .prompts import BudgetInfeasibleError


class ExplainService:
    """HTTP front end over a :class:`~flowexplain.pipeline.Runtime`.

    Routes: ``GET /health`` and ``POST /explain`` with a JSON body
    ``{"flow": {column: value, ...}, "mode": "basic"|"augmented"}``.
    Explained flows are appended to the history store so later requests
    see them as connection history.
    """

    def __init__(self, runtime: Runtime, host: str = "127.0.0.1", port: int = 0):
        self.runtime = runtime
        self._counter = 0
        self._counter_lock = threading.Lock()
        service = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, fmt, *args):  # quiet; the CLI reports the bind address
                pass

            def do_GET(self) -> None:
                if self.path == "/health":
                    _send(self, 200, {"status": "ok"})
                else:
                    _send(self, 404, {"error": "unknown path"})

            def do_POST(self) -> None:
                if self.path != "/explain":
                    _send(self, 404, {"error": "unknown path"})
                    return
                try:
                    length = int(self.headers.get("Content-Length", "0"))
                    body = json.loads(self.rfile.read(length) or b"{}")
                except (ValueError, json.JSONDecodeError):
                    _send(self, 400, {"error": "request body is not valid JSON"})
                    return
                service._handle_explain(self, body)

        self._server = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    def _next_id(self) -> str:
        with self._counter_lock:
            self._counter += 1
            return f"service-{self._counter:06d}"

    def _handle_explain(self, handler: BaseHTTPRequestHandler, body: dict) -> None:
        flow = body.get("flow")
        mode = body.get("mode", "augmented")
        if not isinstance(flow, dict):
            _send(handler, 400, {"error": "body must carry a 'flow' object"})
            return
        if mode not in ("basic", "augmented"):
            _send(handler, 400, {"error": f"mode must be basic or augmented, got {mode!r}"})
            return
        explanation_id = self._next_id()
        flow_id = str(body.get("flow_id") or explanation_id)
        try:
            record = self.runtime.record_from_row(flow, flow_id=flow_id)
        except FieldValidationError as exc:
            _send(handler, 400, {"error": "invalid flow", "fields": exc.errors})
            return
        if record.label != "malicious":
            _send(handler, 422, {"error": "only malicious flows are explained"})
            return
        try:
            result = self.runtime.explain_record(
                record, mode, explanation_id, append_history=True
            )
        except BudgetInfeasibleError as exc:
            _send(handler, 422, {"error": str(exc)})
            return
        except BackendError as exc:
            handler.send_response(503)
            handler.send_header("Content-Type", "application/json")
            handler.send_header("Retry-After", "1")
            payload = json.dumps({"error": f"backend exhausted: {exc}"}).encode("utf-8")
            handler.send_header("Content-Length", str(len(payload)))
            handler.end_headers()
            handler.wfile.write(payload)
            return
        except PipelineError as exc:
            _send(handler, 422, {"error": str(exc)})
            return
        _send(handler, 200, result)

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)


def _send(handler: BaseHTTPRequestHandler, status: int, payload: dict) -> None:
    body = json.dumps(payload).encode("utf-8")
    handler.send_response(status)
    handler.send_header("Content-Type", "application/json")
    handler.send_header("Content-Length", str(len(body)))
    handler.end_headers()
    handler.wfile.write(body)
