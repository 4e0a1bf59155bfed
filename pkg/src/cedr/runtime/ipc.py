"""Local-socket IPC: newline-delimited JSON requests and replies.

Requests::

    {"cmd": "submit", "app": "wifi_tx", "mode": "API", "params": {...}} -> {"app_id": 3}
    {"cmd": "status"}                                                    -> {...}
    {"cmd": "shutdown", "drain_timeout_s": 5}                            -> {"ok": true, ...}

Errors come back as ``{"error": "...", "kind": "..."}``.
"""

from __future__ import annotations

import json
import logging
import os
import selectors
import socket
import threading
import time
from typing import Optional

from ..errors import EndpointBusy, RuntimeNotRunning
from .daemon import raise_reply

log = logging.getLogger(__name__)


def endpoint_in_use(path: str) -> bool:
    if not os.path.exists(path):
        return False
    s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
    try:
        s.connect(path)
        return True
    except OSError:
        return False
    finally:
        s.close()


class _Conn:
    def __init__(self, sock: socket.socket):
        self.sock = sock
        self.buf = b""
        self.lock = threading.Lock()
        self.closed = False

    def send(self, obj: dict):
        data = (json.dumps(obj, default=str) + "\n").encode()
        with self.lock:
            if self.closed:
                return
            try:
                self.sock.sendall(data)
            except OSError:
                self.closed = True


class IpcServer:
    """Acceptor thread forwarding requests to a :class:`Runtime`."""

    def __init__(self, path: str, runtime):
        self.path = str(path)
        self.runtime = runtime
        self._sock: Optional[socket.socket] = None
        self._sel = selectors.DefaultSelector()
        self._thread: Optional[threading.Thread] = None
        self._stop = threading.Event()

    def bind(self):
        if endpoint_in_use(self.path):
            raise EndpointBusy(f"IPC endpoint {self.path} is already served by another daemon")
        if os.path.exists(self.path):
            os.unlink(self.path)
        os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
        self._sock = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        self._sock.bind(self.path)
        self._sock.listen(64)
        self._sock.setblocking(False)
        self._sel.register(self._sock, selectors.EVENT_READ, None)

    def start(self):
        self._thread = threading.Thread(target=self._serve, name="cedr-ipc", daemon=True)
        self._thread.start()

    def stop(self):
        self._stop.set()
        if self._thread is not None and self._thread is not threading.current_thread():
            self._thread.join(2.0)

    def _serve(self):
        try:
            while not self._stop.is_set() and not self.runtime.wait_stopped(0):
                for key, _ in self._sel.select(timeout=0.05):
                    if key.data is None:
                        self._accept()
                    else:
                        self._read(key.data)
        finally:
            for key in list(self._sel.get_map().values()):
                key.fileobj.close()
            self._sel.close()
            try:
                os.unlink(self.path)
            except OSError:
                pass

    def _accept(self):
        try:
            sock, _ = self._sock.accept()
        except BlockingIOError:
            return
        sock.setblocking(True)
        self._sel.register(sock, selectors.EVENT_READ, _Conn(sock))

    def _read(self, conn: _Conn):
        start = time.thread_time_ns()
        try:
            data = conn.sock.recv(65536)
        except OSError:
            data = b""
        if not data:
            self._sel.unregister(conn.sock)
            conn.closed = True
            conn.sock.close()
            return
        conn.buf += data
        while b"\n" in conn.buf:
            line, conn.buf = conn.buf.split(b"\n", 1)
            if line.strip():
                self._dispatch(conn, line, start)
                start = time.thread_time_ns()

    def _dispatch(self, conn: _Conn, line: bytes, start: int):
        try:
            msg = json.loads(line)
            cmd = msg["cmd"]
        except (ValueError, KeyError, TypeError):
            conn.send({"error": "malformed request", "kind": "invalid_argument"})
            return
        if cmd == "status":
            conn.send(self.runtime.status())
        elif cmd == "submit":
            payload = {"app": msg.get("app"), "mode": msg.get("mode", "API"), "params": msg.get("params") or {}}
            recv_ns = time.thread_time_ns() - start
            self.runtime.post(("submit", payload, conn.send, recv_ns))
        elif cmd == "shutdown":
            self.runtime.post(("shutdown", {"drain_timeout_s": msg.get("drain_timeout_s")}, conn.send, 0))
        else:
            conn.send({"error": f"unknown command {cmd!r}", "kind": "invalid_argument"})


class IpcClient:
    """Blocking client; one connection per request."""

    def __init__(self, path: str, timeout: Optional[float] = 60.0):
        self.path = str(path)
        self.timeout = timeout

    def request(self, msg: dict, timeout: Optional[float] = -1) -> dict:
        timeout = self.timeout if timeout == -1 else timeout
        s = socket.socket(socket.AF_UNIX, socket.SOCK_STREAM)
        s.settimeout(timeout)
        try:
            try:
                s.connect(self.path)
            except OSError as exc:
                raise RuntimeNotRunning(f"no daemon at {self.path}: {exc}") from None
            s.sendall((json.dumps(msg) + "\n").encode())
            buf = b""
            while b"\n" not in buf:
                chunk = s.recv(65536)
                if not chunk:
                    raise RuntimeNotRunning("daemon closed the connection without replying")
                buf += chunk
        finally:
            s.close()
        return json.loads(buf.split(b"\n", 1)[0])

    def submit(self, app: str, mode: str = "API", params: Optional[dict] = None) -> int:
        reply = raise_reply(self.request({"cmd": "submit", "app": app, "mode": mode, "params": params or {}}))
        return reply["app_id"]

    def status(self) -> dict:
        return raise_reply(self.request({"cmd": "status"}))

    def shutdown(self, drain_timeout_s: Optional[float] = None, timeout: Optional[float] = None) -> dict:
        return raise_reply(self.request({"cmd": "shutdown", "drain_timeout_s": drain_timeout_s}, timeout=timeout))

    def wait_ready(self, timeout: float = 10.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if endpoint_in_use(self.path):
                return
            time.sleep(0.01)
        raise RuntimeNotRunning(f"daemon did not come up at {self.path} within {timeout}s")


def submit(endpoint: str, app_name: str, mode: str = "API", params: Optional[dict] = None) -> int:
    return IpcClient(endpoint).submit(app_name, mode, params)
