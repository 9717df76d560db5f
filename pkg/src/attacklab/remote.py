"""Newline-delimited JSON sign-query protocol over TCP.

Client -> server::

    {"hello":{"dim":m}}                 handshake, must come first
    {"id":<uint64>,"x":[<m doubles>]}   one sign query

Server -> client::

    {"ok":{"dim":m}} | {"err":"dim_mismatch"}
    {"id":<same>,"sign":1} | {"id":<same>,"sign":-1}
    {"err":"bad_request"}               malformed line; the connection stays open

Floats are written with ``repr`` precision, so vectors round-trip exactly.
"""
from __future__ import annotations

import json
import logging
import socket
import socketserver
import threading

import numpy as np

from .victims import DifferenceOracle, VictimSpec, build_victim

log = logging.getLogger(__name__)

__all__ = [
    "TransportError",
    "HandshakeError",
    "VictimServer",
    "serve_victim",
    "connect_remote_victim",
    "RemoteOracle",
    "parse_address",
]

_MAX_ID = 2**64 - 1


class TransportError(OSError):
    pass


class HandshakeError(TransportError):
    pass


def _dumps(obj) -> bytes:
    return (json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n").encode("utf-8")


def parse_address(address: str) -> tuple[str, int]:
    if address.startswith("tcp://"):
        address = address[len("tcp://"):]
    host, _, port = address.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad address {address!r}, expected host:port")
    return host, int(port)


def _answer(line: bytes, oracle: DifferenceOracle, state: dict) -> dict:
    try:
        msg = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return {"err": "bad_request"}
    if not isinstance(msg, dict):
        return {"err": "bad_request"}
    if "hello" in msg:
        hello = msg["hello"]
        if not isinstance(hello, dict) or not isinstance(hello.get("dim"), int):
            return {"err": "bad_request"}
        if hello["dim"] != oracle.dim:
            return {"err": "dim_mismatch"}
        state["ready"] = True
        return {"ok": {"dim": oracle.dim}}
    qid, x = msg.get("id"), msg.get("x")
    if (not state.get("ready") or set(msg) != {"id", "x"}
            or not isinstance(qid, int) or isinstance(qid, bool) or not 0 <= qid <= _MAX_ID
            or not isinstance(x, list) or len(x) != oracle.dim
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x)):
        return {"err": "bad_request"}
    vec = np.array(x, dtype=float)
    if not np.all(np.isfinite(vec)):
        return {"err": "bad_request"}
    return {"id": qid, "sign": oracle.query_sign(vec)}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        peer = "%s:%s" % self.client_address[:2]
        log.info("connection from %s", peer)
        state: dict = {}
        oracle = self.server.oracle
        for line in self.rfile:
            if not line.endswith(b"\n"):
                break
            self.wfile.write(_dumps(_answer(line[:-1], oracle, state)))
            self.wfile.flush()
        log.info("connection closed %s", peer)


class VictimServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, oracle: DifferenceOracle, address: tuple[str, int]):
        self.oracle = oracle
        super().__init__(address, _Handler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return f"{host}:{port}"

    def start_background(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, daemon=True)
        t.start()
        return t


def serve_victim(spec: VictimSpec, listen_address: str = "127.0.0.1:0") -> VictimServer:
    """Bind a server for a local victim spec. Call ``serve_forever`` or ``start_background``."""
    if spec.kind == "remote":
        raise ValueError("cannot serve a remote victim")
    oracle, _ = build_victim(spec)
    try:
        return VictimServer(oracle, parse_address(listen_address))
    except OSError as exc:
        raise TransportError(f"cannot bind {listen_address}: {exc}") from exc


class RemoteOracle(DifferenceOracle):
    """DifferenceOracle whose queries are round-trips to a ``VictimServer``.

    Requests are serialized on the single connection; use one instance per worker.
    """

    def __init__(self, sock: socket.socket, dim: int):
        super().__init__(dim, self._remote_values)
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._next_id = 0
        self._io_lock = threading.Lock()

    def _roundtrip(self, msg: dict) -> dict:
        try:
            self._sock.sendall(_dumps(msg))
            line = self._rfile.readline()
        except (socket.timeout, OSError) as exc:
            raise TransportError(f"victim connection failed: {exc}") from exc
        if not line.endswith(b"\n"):
            raise TransportError("victim closed the connection")
        return json.loads(line)

    def _remote_values(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(len(X))
        with self._io_lock:
            for k, x in enumerate(X):
                qid = self._next_id
                self._next_id += 1
                reply = self._roundtrip({"id": qid, "x": [float(v) for v in x]})
                if reply.get("id") != qid or reply.get("sign") not in (1, -1):
                    raise TransportError(f"unexpected reply {reply!r}")
                out[k] = reply["sign"]
                self._bump(1)
        return out

    # counting happens per round-trip inside _remote_values so a transport error
    # mid-batch leaves query_count at the number of answered queries
    def query_sign(self, x):
        x = self._check(x)
        return int(self._remote_values(x[None, :])[0])

    def query_signs(self, X):
        X = self._check(X)
        if X.ndim == 1:
            X = X[None, :]
        return self._remote_values(X).astype(np.int64)

    def close(self) -> None:
        try:
            self._rfile.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect_remote_victim(address: str, m: int, timeout_ms: int = 5000) -> RemoteOracle:
    host, port = parse_address(address)
    try:
        sock = socket.create_connection((host, port), timeout=timeout_ms / 1000.0)
    except OSError as exc:
        raise TransportError(f"cannot connect to {address}: {exc}") from exc
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    oracle = RemoteOracle(sock, m)
    try:
        reply = oracle._roundtrip({"hello": {"dim": int(m)}})
    except TransportError:
        oracle.close()
        raise
    if reply != {"ok": {"dim": int(m)}}:
        oracle.close()
        raise HandshakeError(f"handshake rejected: {reply!r}")
    return oracle
