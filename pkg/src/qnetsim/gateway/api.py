"""HTTP/JSON gateway with server-sent event streams.

The API is a thin shell over a live simulation session. Handlers never
touch controller state directly: reads and writes are posted onto the
event loop and awaited, preserving the single-writer model. Event
streams are fan-out readers of the append-only trace.

Endpoints:
    POST /api/v1/requests                submit a request
    GET  /api/v1/requests/{id}           lifecycle record
    GET  /api/v1/requests/{id}/events    SSE stream (replay + follow)
    GET  /api/v1/topology                live topology with occupancy
    GET  /api/v1/status                  controller status summary
    GET  /api/v1/results/{id}            terminal result record

Auth: when a token is configured (QNET_TOKEN), mutating requests must
carry ``Authorization: Bearer <token>``.
"""

from __future__ import annotations

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from ..controlplane import EntanglementRequest, QubitType, ServiceType
from ..controlplane.messages import TERMINAL_STATES, RequestState
from .results import ResultRecord
from .scenario import Scenario, build_scenario_system


class ApiError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


class LiveSession:
    """A live control plane advanced by a dedicated engine thread.

    Virtual time runs as fast as the event queue allows; ``pace`` > 0
    throttles it for human viewing (wall seconds per virtual second).
    """

    def __init__(self, scenario: Scenario, pace: float = 0.0):
        self.system = build_scenario_system(scenario)
        self.scenario = scenario
        self.pace = pace
        self._wake = threading.Condition()
        self._stop = False
        self._req_seq = 0
        self._thread = threading.Thread(target=self._loop, daemon=True,
                                        name="engine-loop")

    def start(self) -> None:
        self._thread.start()

    def shutdown(self) -> None:
        self._stop = True
        with self._wake:
            self._wake.notify_all()
        self._thread.join(timeout=5.0)

    @property
    def trace(self):
        return self.system.engine.trace

    def _loop(self) -> None:
        import time as _time

        engine = self.system.engine
        while not self._stop:
            before = engine.now_ns
            progressed = engine.step()
            if not progressed:
                with self._wake:
                    self._wake.wait(timeout=0.05)
                continue
            if self.pace > 0 and engine.now_ns > before:
                _time.sleep(min((engine.now_ns - before) / 1e9 * self.pace, 1.0))

    def call(self, fn, timeout: float = 10.0):
        """Run a closure on the engine loop and wait for its result."""
        done = threading.Event()
        box: dict = {}

        def wrapped(ev):
            try:
                box["value"] = fn()
            except Exception as exc:  # surfaced to the API caller
                box["error"] = exc
            done.set()

        self.system.engine.post(wrapped)
        with self._wake:
            self._wake.notify_all()
        if not done.wait(timeout):
            raise ApiError(504, "engine loop unresponsive")
        if "error" in box:
            raise box["error"]
        return box.get("value")

    # -- operations ------------------------------------------------------

    def submit(self, payload: dict) -> dict:
        request = self._parse_request(payload)

        def do():
            return self.system.controller.submit(
                request, idempotency_key=payload.get("idempotency_key"))

        rid = self.call(do)
        return {"id": rid, "state": RequestState.RECEIVED.value}

    def _parse_request(self, payload: dict) -> EntanglementRequest:
        if not isinstance(payload, dict):
            raise ApiError(400, "request body must be a JSON object")
        for key in ("requester", "qubit_type", "node_pair", "end_s"):
            if key not in payload:
                raise ApiError(400, f"missing required field {key!r}")
        pair = payload["node_pair"]
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ApiError(400, "node_pair must be a two-element list")
        graph = self.system.graph
        for node in pair:
            if node not in graph.nodes:
                raise ApiError(400, f"unknown node id {node!r}")
        try:
            qt = QubitType(payload["qubit_type"])
        except ValueError:
            raise ApiError(400, f"unknown qubit_type {payload['qubit_type']!r}")
        try:
            service = ServiceType(payload.get("service", "entanglement"))
        except ValueError:
            raise ApiError(400, f"unknown service {payload['service']!r}")
        rid = payload.get("id") or self.call(
            lambda: self.system.controller.next_request_id())
        try:
            return EntanglementRequest(
                id=str(rid),
                requester=str(payload["requester"]),
                qubit_type=qt,
                node_pair=(str(pair[0]), str(pair[1])),
                start_time_s=float(payload.get("start_s", 0.0)),
                end_time_s=float(payload["end_s"]),
                calibration_basis=str(payload.get("calibration_basis", "hv")),
                target_ebits=int(payload.get("target_ebits", 1)),
                service=service,
            )
        except ValueError as exc:
            raise ApiError(400, str(exc))

    def request_payload(self, rid: str) -> dict:
        def do():
            rec = self.system.controller.records.get(rid)
            return rec.to_payload() if rec else None

        payload = self.call(do)
        if payload is None:
            raise ApiError(404, f"no request {rid!r}")
        return payload

    def result_payload(self, rid: str) -> dict:
        def do():
            rec = self.system.controller.records.get(rid)
            if rec is None:
                return None
            if rec.state not in TERMINAL_STATES:
                return {"pending": rec.state.value}
            return ResultRecord.from_record(rec).to_dict()

        payload = self.call(do)
        if payload is None:
            raise ApiError(404, f"no request {rid!r}")
        if "pending" in payload:
            raise ApiError(409, f"request {rid} still {payload['pending']}")
        return payload

    def topology_payload(self) -> dict:
        def do():
            controller = self.system.controller
            doc = self.system.graph.to_document()
            occupancy = {lid: sorted(link.occupancy)
                         for lid, link in sorted(self.system.graph.links.items())}
            resources = {
                rid: {"schedulable": e.schedulable, "quarantined": e.quarantined,
                      "online": e.online}
                for rid, e in sorted(controller.registry.items())}
            return {"t_ns": self.system.engine.now_ns, "topology": doc,
                    "occupancy": occupancy, "resources": resources}

        return self.call(do)

    def status_payload(self) -> dict:
        return self.call(self.system.controller.status_summary)


def _sse_format(record) -> bytes:
    return (f"id: {record.seq}\nevent: {record.kind}\n"
            f"data: {record.to_json()}\n\n").encode()


class GatewayServer:
    """Threaded HTTP server bound to a live session."""

    def __init__(self, session: LiveSession, host: str = "127.0.0.1",
                 port: int = 0, token: str | None = None,
                 portal_dir: str | None = None):
        self.session = session
        self.token = token if token is not None else os.environ.get("QNET_TOKEN")
        self.portal_dir = Path(portal_dir) if portal_dir else None
        handler = self._make_handler()

        class _Server(ThreadingHTTPServer):
            daemon_threads = True

            def handle_error(self, request, client_address):
                import sys
                exc = sys.exc_info()[1]
                if isinstance(exc, (BrokenPipeError, ConnectionResetError)):
                    return  # client hung up mid-stream; not an error
                super().handle_error(request, client_address)

        self.httpd = _Server((host, port), handler)

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[:2]

    def serve_forever(self) -> None:
        self.session.start()
        try:
            self.httpd.serve_forever()
        finally:
            self.session.shutdown()

    def start_background(self) -> threading.Thread:
        self.session.start()
        t = threading.Thread(target=self.httpd.serve_forever, daemon=True,
                             name="gateway-http")
        t.start()
        return t

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.session.shutdown()

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass

            # -- plumbing ------------------------------------------------

            def _send_json(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                self.wfile.write(body)

            def _auth_ok(self) -> bool:
                if not server.token:
                    return True
                got = self.headers.get("Authorization", "")
                return got == f"Bearer {server.token}"

            def _read_body(self) -> dict:
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length) if length else b"{}"
                try:
                    return json.loads(raw or b"{}")
                except json.JSONDecodeError:
                    raise ApiError(400, "request body is not valid JSON")

            # -- routes ---------------------------------------------------

            def do_OPTIONS(self):
                self.send_response(204)
                self.send_header("Access-Control-Allow-Origin", "*")
                self.send_header("Access-Control-Allow-Methods",
                                 "GET, POST, OPTIONS")
                self.send_header("Access-Control-Allow-Headers",
                                 "Authorization, Content-Type, Last-Event-ID")
                self.send_header("Content-Length", "0")
                self.end_headers()

            def do_POST(self):
                try:
                    if self.path.rstrip("/") != "/api/v1/requests":
                        raise ApiError(404, "unknown endpoint")
                    if not self._auth_ok():
                        raise ApiError(401, "missing or invalid bearer token")
                    result = server.session.submit(self._read_body())
                    self._send_json(201, result)
                except ApiError as exc:
                    self._send_json(exc.status, {"error": exc.message})
                except ValueError as exc:
                    self._send_json(400, {"error": str(exc)})

            def do_GET(self):
                try:
                    path = self.path.split("?")[0].rstrip("/")
                    if path == "/api/v1/topology":
                        self._send_json(200, server.session.topology_payload())
                    elif path == "/api/v1/status":
                        self._send_json(200, server.session.status_payload())
                    elif path.startswith("/api/v1/requests/") and \
                            path.endswith("/events"):
                        rid = path.split("/")[4]
                        self._stream_events(rid)
                    elif path.startswith("/api/v1/requests/"):
                        rid = path.split("/")[4]
                        self._send_json(200, server.session.request_payload(rid))
                    elif path.startswith("/api/v1/results/"):
                        rid = path.split("/")[4]
                        self._send_json(200, server.session.result_payload(rid))
                    elif server.portal_dir is not None:
                        self._serve_static(path)
                    else:
                        raise ApiError(404, "unknown endpoint")
                except ApiError as exc:
                    self._send_json(exc.status, {"error": exc.message})
                except (BrokenPipeError, ConnectionResetError):
                    pass

            def _stream_events(self, rid: str) -> None:
                # Ensure the request exists before opening the stream.
                server.session.request_payload(rid)
                last = int(self.headers.get("Last-Event-ID", "-1"))
                if "?" in self.path and "from=" in self.path:
                    for piece in self.path.split("?", 1)[1].split("&"):
                        if piece.startswith("from="):
                            last = int(piece.split("=", 1)[1])
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                trace = server.session.trace
                terminal_values = {s.value for s in TERMINAL_STATES}
                cursor = last
                terminal_seen = False
                while not terminal_seen:
                    batch = trace.since(cursor)
                    if batch:
                        cursor = batch[-1].seq
                        wrote = False
                        for rec in batch:
                            if rec.correlation_id != rid:
                                continue
                            self.wfile.write(_sse_format(rec))
                            wrote = True
                            if rec.kind == "state" and \
                                    rec.payload.get("state") in terminal_values:
                                terminal_seen = True
                        if wrote:
                            self.wfile.flush()
                    else:
                        got = trace.wait_for_more(cursor, timeout=0.5)
                        if not got and not server.session._thread.is_alive():
                            break

            def _serve_static(self, path: str) -> None:
                rel = path.lstrip("/") or "index.html"
                target = (server.portal_dir / rel).resolve()
                if not str(target).startswith(str(server.portal_dir.resolve())) \
                        or not target.is_file():
                    raise ApiError(404, f"no such file {rel}")
                body = target.read_bytes()
                ctype = {
                    ".html": "text/html", ".js": "text/javascript",
                    ".css": "text/css", ".json": "application/json",
                    ".svg": "image/svg+xml",
                }.get(target.suffix, "application/octet-stream")
                self.send_response(200)
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

        return Handler
