"""Console-facing HTTP API, served while a scenario runs paced in real time.

Endpoints (JSON bodies; field names documented in docs/api.md):

    GET  /api/snapshot            full console view
    GET  /api/events              server-sent event stream of trace records
    POST /api/alarm               {"region": ["light:0", ...], "cause": "operator"}
    POST /api/revoke              {"region": [...]}
    POST /api/guidance            {"light": "light:0", "state": "safe"}
    POST /api/failure             {"kind": "server-down" | "cut" | "partition" | "heal", ...}
    POST /api/pair                {"a": "device:0", "b": "device:1"}

Anything else is served from the static console directory when one is
configured. Commands are validated synchronously against the live engine
and applied by the engine loop at the next simulated millisecond.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .core import CityMeshError, GuidanceState, NodeId
from .engine import Engine, TraceRecord, snapshot_json
from .light import CrisisCause
from .network import LinkKind
from .scenario import (
    Action,
    HealAction,
    IssueAlarmAction,
    LinkCutAction,
    PairDevicesAction,
    PartitionAction,
    RevokeAlarmAction,
    ServerDownAction,
    SetGuidanceAction,
)

_CAUSES = {c.value: c for c in CrisisCause}
_GUIDANCE = {g.value: g for g in GuidanceState}
_LINK_KINDS = {k.value: k for k in LinkKind}

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".ico": "image/x-icon",
}


class ApiError(CityMeshError):
    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(message)


def parse_command(path: str, body: dict) -> Action:
    """Translate an API request into a scripted action."""
    try:
        if path == "/api/alarm":
            region = frozenset(NodeId.parse(n) for n in body["region"])
            cause = _CAUSES.get(body.get("cause", "operator"))
            if cause is None:
                raise ApiError(400, f"unknown cause {body.get('cause')!r}")
            return IssueAlarmAction(region=region, cause=cause)
        if path == "/api/revoke":
            return RevokeAlarmAction(
                region=frozenset(NodeId.parse(n) for n in body["region"])
            )
        if path == "/api/guidance":
            state = _GUIDANCE.get(body.get("state", ""))
            if state is None:
                raise ApiError(400, f"unknown guidance state {body.get('state')!r}")
            return SetGuidanceAction(light=NodeId.parse(body["light"]), state=state)
        if path == "/api/pair":
            return PairDevicesAction(a=NodeId.parse(body["a"]), b=NodeId.parse(body["b"]))
        if path == "/api/failure":
            kind = body.get("kind")
            if kind == "server-down":
                return ServerDownAction()
            if kind == "heal":
                return HealAction()
            if kind == "cut":
                link_kind = _LINK_KINDS.get(body.get("link", ""))
                if link_kind is None:
                    raise ApiError(400, f"unknown link kind {body.get('link')!r}")
                return LinkCutAction(
                    a=NodeId.parse(body["a"]), b=NodeId.parse(body["b"]), kind=link_kind
                )
            if kind == "partition":
                return PartitionAction(
                    side=frozenset(NodeId.parse(n) for n in body["nodes"])
                )
            raise ApiError(400, f"unknown failure kind {kind!r}")
    except ApiError:
        raise
    except (KeyError, TypeError) as exc:
        raise ApiError(400, f"malformed request body: missing {exc}") from None
    except ValueError as exc:
        raise ApiError(400, str(exc)) from None
    raise ApiError(404, f"no such endpoint {path}")


class ConsoleServer:
    """Paces the engine against the wall clock and serves the console API."""

    def __init__(
        self,
        engine: Engine,
        port: int = 8127,
        speed: float = 1.0,
        console_dir: str | Path | None = None,
    ):
        self.engine = engine
        self.speed = speed
        self.console_dir = Path(console_dir) if console_dir else None
        self._subscribers: list[queue.Queue] = []
        self._subscribers_lock = threading.Lock()
        self._stop = threading.Event()
        engine.on_record = self._broadcast

        handler = _build_handler(self)
        self.httpd = ThreadingHTTPServer(("127.0.0.1", port), handler)
        self.port = self.httpd.server_address[1]

    # --- event stream ----------------------------------------------------

    def _broadcast(self, record: TraceRecord) -> None:
        payload = record.to_json()
        with self._subscribers_lock:
            for q in self._subscribers:
                try:
                    q.put_nowait(payload)
                except queue.Full:
                    pass

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue(maxsize=10_000)
        with self._subscribers_lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._subscribers_lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    # --- lifecycle ----------------------------------------------------------

    def run(self) -> None:
        """Serve requests and pace the simulation until it completes (then
        keep serving the final state until stopped)."""
        server_thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        server_thread.start()
        try:
            self._pace()
            while not self._stop.is_set():
                time.sleep(0.2)
        finally:
            self.shutdown()

    def _pace(self) -> None:
        engine = self.engine
        with engine.lock:
            engine._start()
        wall_start = time.monotonic()
        while not self._stop.is_set():
            with engine.lock:
                nxt = engine.next_time()
            if nxt is None:
                break
            target = wall_start + (nxt / 1000.0) / self.speed
            while not self._stop.is_set():
                delay = target - time.monotonic()
                if delay <= 0:
                    break
                time.sleep(min(delay, 0.05))
                with engine.lock:
                    upcoming = engine.next_time()
                if upcoming is not None and upcoming < nxt:
                    nxt = upcoming
                    target = wall_start + (nxt / 1000.0) / self.speed
            if self._stop.is_set():
                break
            with engine.lock:
                engine.process_due(nxt)
        with engine.lock:
            engine._finalize()

    def shutdown(self) -> None:
        self._stop.set()
        self.httpd.shutdown()

    def stop(self) -> None:
        self._stop.set()


def _build_handler(server: ConsoleServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # quiet by default
            pass

        def _json(self, status: int, payload: dict | str) -> None:
            body = payload if isinstance(payload, str) else json.dumps(payload)
            data = body.encode()
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.send_header("Access-Control-Allow-Origin", "*")
            self.end_headers()
            self.wfile.write(data)

        def do_GET(self) -> None:
            if self.path == "/api/snapshot":
                self._json(200, snapshot_json(server.engine.snapshot()))
                return
            if self.path == "/api/info":
                self._json(
                    200,
                    {
                        "speed": server.speed,
                        "duration_ms": server.engine.scenario.duration_ms,
                        "seed": server.engine.scenario.seed,
                    },
                )
                return
            if self.path == "/api/events":
                self._stream_events()
                return
            self._static()

        def _stream_events(self) -> None:
            q = server.subscribe()
            try:
                self.send_response(200)
                self.send_header("Content-Type", "text/event-stream")
                self.send_header("Cache-Control", "no-cache")
                self.send_header("Access-Control-Allow-Origin", "*")
                self.end_headers()
                while not server._stop.is_set():
                    try:
                        payload = q.get(timeout=5.0)
                    except queue.Empty:
                        self.wfile.write(b": keepalive\n\n")
                        self.wfile.flush()
                        continue
                    self.wfile.write(f"data: {payload}\n\n".encode())
                    self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                pass
            finally:
                server.unsubscribe(q)
                self.close_connection = True

        def _static(self) -> None:
            root = server.console_dir
            if root is None:
                self._json(404, {"error": "no console bundle configured"})
                return
            name = self.path.split("?", 1)[0]
            if name in ("", "/"):
                name = "/index.html"
            target = (root / name.lstrip("/")).resolve()
            if not str(target).startswith(str(root.resolve())) or not target.is_file():
                self._json(404, {"error": f"not found: {name}"})
                return
            data = target.read_bytes()
            self.send_response(200)
            ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self) -> None:
            length = int(self.headers.get("Content-Length", "0") or 0)
            raw = self.rfile.read(length) if length else b"{}"
            try:
                body = json.loads(raw or b"{}")
            except json.JSONDecodeError:
                self._json(400, {"error": "request body is not valid JSON"})
                return
            try:
                action = parse_command(self.path, body)
            except ApiError as exc:
                self._json(exc.status, {"error": str(exc)})
                return
            try:
                at = server.engine.submit(action)
            except CityMeshError as exc:
                self._json(409, {"error": str(exc)})
                return
            self._json(202, {"accepted": True, "at_ms": at})

    return Handler
