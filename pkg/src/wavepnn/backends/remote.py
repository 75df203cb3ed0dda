"""Hardware-in-the-loop wire protocol: newline-delimited JSON over TCP.

Requests carry a u64 ``id`` and an ``op`` ("info" or "forward"); every
response echoes the id with ``ok`` true/false. A malformed frame produces an
error response but never tears the connection down, so a flaky client cannot
wedge the instrument server.
"""

import json
import socket
import socketserver
import threading

import numpy as np


class BackendError(RuntimeError):
    """A remote backend returned an error or the transport failed."""


def _error_frame(req_id, message):
    return {"id": req_id, "ok": False, "error": str(message)}


def _handle_request(backend, line):
    try:
        req = json.loads(line)
    except json.JSONDecodeError as e:
        return _error_frame(None, f"malformed JSON frame: {e}")
    if not isinstance(req, dict):
        return _error_frame(None, "request must be a JSON object")
    req_id = req.get("id")
    op = req.get("op")
    if op == "info":
        return {"id": req_id, "ok": True,
                "input_dim": backend.input_dim, "output_dim": backend.output_dim}
    if op == "forward":
        data = req.get("data")
        try:
            x = np.asarray(data, dtype=np.float64)
            if x.ndim != 2 or x.shape[1] != backend.input_dim:
                raise ValueError(
                    f"expected rows of width {backend.input_dim}, got {x.shape}")
            out = backend.forward(x)
        except Exception as e:
            return _error_frame(req_id, e)
        return {"id": req_id, "ok": True, "data": out.tolist()}
    return _error_frame(req_id, f"unknown op {op!r}")


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        while True:
            line = self.rfile.readline()
            if not line:
                return
            line = line.strip()
            if not line:
                continue
            resp = _handle_request(self.server.backend, line)
            self.wfile.write(json.dumps(resp).encode() + b"\n")
            self.wfile.flush()


class BackendServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, backend, address):
        self.backend = backend
        super().__init__(address, _Handler)


def serve_backend(backend, address=("127.0.0.1", 0), block=True):
    """Serve a backend over TCP. With block=False, runs in a daemon thread and
    returns the server (its bound address is ``server.server_address``)."""
    server = BackendServer(backend, address)
    if block:
        try:
            server.serve_forever()
        finally:
            server.server_close()
        return None
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


class RemoteSystem:
    """Client handle for a served backend; dims come from the info handshake.

    Satisfies the forward-backend contract. No vjp and no perturbation: the
    remote side is opaque hardware as far as the trainer is concerned.
    """

    def __init__(self, address, timeout=30.0):
        if isinstance(address, str):
            host, _, port = address.rpartition(":")
            address = (host or "127.0.0.1", int(port))
        self.address = address
        self.timeout = timeout
        self._next_id = 0
        self._sock = socket.create_connection(address, timeout=timeout)
        self._file = self._sock.makefile("rwb")
        info = self._request({"op": "info"})
        self.input_dim = int(info["input_dim"])
        self.output_dim = int(info["output_dim"])

    def _request(self, payload):
        req_id = self._next_id
        self._next_id += 1
        payload = {"id": req_id, **payload}
        try:
            self._file.write(json.dumps(payload).encode() + b"\n")
            self._file.flush()
            line = self._file.readline()
        except OSError as e:
            raise BackendError(f"request {req_id}: transport failure: {e}") from e
        if not line:
            raise BackendError(f"request {req_id}: connection closed by server")
        try:
            resp = json.loads(line)
        except json.JSONDecodeError as e:
            raise BackendError(f"request {req_id}: malformed response: {e}") from e
        if resp.get("id") != req_id:
            raise BackendError(
                f"request {req_id}: response id mismatch ({resp.get('id')})")
        if not resp.get("ok"):
            raise BackendError(f"request {req_id}: {resp.get('error', 'unknown error')}")
        return resp

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ValueError(
                f"expected (B, {self.input_dim}) input, got {x.shape}")
        resp = self._request({"op": "forward", "data": x.tolist()})
        out = np.asarray(resp["data"], dtype=np.float64)
        if out.shape != (len(x), self.output_dim):
            raise BackendError(
                f"server returned shape {out.shape}, expected {(len(x), self.output_dim)}")
        return out

    def close(self):
        try:
            self._file.close()
        finally:
            self._sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def remote_forward(remote: RemoteSystem, batch):
    """Module-level alias for RemoteSystem.forward."""
    return remote.forward(batch)
