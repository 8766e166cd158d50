"""Network service exposing the stateless handler.

Primary transport: TCP with length-prefixed documents (see jamloop.wire),
one persistent bidirectional connection per client, requests answered in
order. Each connection must send strictly increasing target_frames; an
overlapping target is rejected without generation (sessions are expected
to keep at most their own pipeline per connection).

Optional transport: WebSocket carrying the identical documents one per
message (browsers cannot open raw TCP sockets). Requires the `websockets`
package; only imported when a WS listen address is given.

Configuration comes from a flat key-value file (same line grammar as the
wire format) overridden by command-line flags:

    listen 127.0.0.1:7380
    ws 127.0.0.1:7381
    seed 0
    models markov-online,naive-online,rule-offline
"""

from __future__ import annotations

import socketserver
import threading
from dataclasses import dataclass, field, replace
from typing import Optional

from . import wire
from .agents import KNOWN_MODELS
from .server import INCONSISTENT_HISTORY, UNKNOWN_MODEL, JamRequest, WireError, handle_request


@dataclass
class ServiceConfig:
    listen: str = "127.0.0.1:7380"
    ws: str = ""
    seed: int = 0
    models: tuple[str, ...] = KNOWN_MODELS

    @classmethod
    def load(cls, path: Optional[str] = None, **overrides) -> "ServiceConfig":
        cfg = cls()
        if path:
            with open(path, "r", encoding="utf-8") as fh:
                doc = wire.parse_lines(fh.read())
            if "listen" in doc:
                cfg = replace(cfg, listen=doc["listen"])
            if "ws" in doc:
                cfg = replace(cfg, ws=doc["ws"])
            if "seed" in doc:
                cfg = replace(cfg, seed=int(doc["seed"]))
            if "models" in doc:
                cfg = replace(cfg, models=tuple(m for m in doc["models"].split(",") if m))
        clean = {k: v for k, v in overrides.items() if v is not None}
        if "models" in clean and isinstance(clean["models"], str):
            clean["models"] = tuple(m for m in clean["models"].split(",") if m)
        return replace(cfg, **clean)


def parse_hostport(s: str) -> tuple[str, int]:
    host, _, port = s.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"expected HOST:PORT, got {s!r}")
    return host, int(port)


class _SessionGuard:
    """Per-connection protocol state: targets must strictly increase."""

    def __init__(self, allowed_models: tuple[str, ...], default_seed: int):
        self.allowed = allowed_models
        self.default_seed = default_seed
        self.last_target = -1

    def handle(self, payload: str) -> str:
        req = wire.decode_request(payload)
        if isinstance(req, WireError):
            return wire.encode_error(req)
        if req.settings.model_id not in self.allowed:
            return wire.encode_error(WireError(
                UNKNOWN_MODEL, f"model_id {req.settings.model_id!r} not served here"))
        if req.target_frame <= self.last_target:
            return wire.encode_error(WireError(
                INCONSISTENT_HISTORY,
                f"target_frame {req.target_frame} does not advance past {self.last_target} "
                "on this connection"))
        result = handle_request(req)
        if isinstance(result, WireError):
            return wire.encode_error(result)
        self.last_target = req.target_frame
        return wire.encode_response(result)


class _Handler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        guard = _SessionGuard(self.server.config.models, self.server.config.seed)
        reader = wire.MessageReader()
        sock = self.request
        while True:
            try:
                data = sock.recv(65536)
            except (ConnectionError, OSError):
                return
            if not data:
                return
            try:
                payloads = reader.feed(data)
            except wire.FramingError as e:
                sock.sendall(wire.frame_message(
                    wire.encode_error(WireError("MALFORMED", f"framing: {e}"))))
                return
            for payload in payloads:
                sock.sendall(wire.frame_message(guard.handle(payload)))


class JamServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, config: ServiceConfig):
        self.config = config
        super().__init__(parse_hostport(config.listen), _Handler)

    @property
    def bound_address(self) -> tuple[str, int]:
        return self.server_address[:2]


@dataclass
class RunningService:
    server: JamServer
    thread: threading.Thread
    ws_server: Optional[object] = None
    ws_thread: Optional[threading.Thread] = None
    extra: dict = field(default_factory=dict)

    @property
    def address(self) -> tuple[str, int]:
        return self.server.bound_address

    def shutdown(self) -> None:
        self.server.shutdown()
        self.server.server_close()
        if self.ws_server is not None:
            self.ws_server.shutdown()
        if self.ws_thread is not None:
            self.ws_thread.join(timeout=5)
        self.thread.join(timeout=5)


def start_service(config: ServiceConfig) -> RunningService:
    """Start the TCP (and optional WS) listeners on background threads.
    Kernels are JIT-warmed first so the first request is served fast."""
    from . import kernels

    kernels.warmup()
    server = JamServer(config)
    thread = threading.Thread(target=server.serve_forever, name="jamserve-tcp", daemon=True)
    thread.start()
    svc = RunningService(server, thread)
    if config.ws:
        svc.ws_server, svc.ws_thread = _start_ws(config)
    return svc


def _start_ws(config: ServiceConfig):
    try:
        from websockets.sync.server import serve
    except ImportError as e:
        raise RuntimeError(
            "WebSocket transport needs the 'websockets' package "
            "(pip install jamloop[ws])") from e
    host, port = parse_hostport(config.ws)

    def ws_handler(conn):
        guard = _SessionGuard(config.models, config.seed)
        for message in conn:
            if isinstance(message, bytes):
                message = message.decode("utf-8")
            conn.send(guard.handle(message))

    ws_server = serve(ws_handler, host, port)
    thread = threading.Thread(target=ws_server.serve_forever, name="jamserve-ws", daemon=True)
    thread.start()
    return ws_server, thread


class JamClient:
    """Blocking TCP client speaking the wire protocol; used by tests and
    the headless tools."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        import socket

        self._sock = socket.create_connection((host, port), timeout=timeout)
        self._reader = wire.MessageReader()

    def roundtrip(self, req: JamRequest) -> "object":
        self._sock.sendall(wire.frame_message(wire.encode_request(req)))
        return self._read()

    def send_raw(self, payload: str) -> "object":
        self._sock.sendall(wire.frame_message(payload))
        return self._read()

    def _read(self):
        while True:
            data = self._sock.recv(65536)
            if not data:
                raise ConnectionError("server closed the connection")
            msgs = self._reader.feed(data)
            if msgs:
                return wire.decode_response(msgs[0])

    def close(self) -> None:
        self._sock.close()
