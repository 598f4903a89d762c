"""Message transports between clients and the aggregation server.

Both transports move opaque framed byte strings and meter them in a
TrafficLedger keyed by (round, client). MemTransport is queue-based and used
for experiments by default; SocketTransport runs the same traffic over
loopback TCP so the byte accounting can be checked against a real socket
path. Connection handshakes are transport plumbing and are not metered; the
ledger counts exactly the framed protocol messages handed to send calls.
"""

from __future__ import annotations

import queue
import selectors
import socket
import struct
import threading
from collections import defaultdict

from .errors import ProtocolError
from .wire import HEADER_SIZE, MAGIC


class TrafficLedger:
    """Byte counts per (round, client), split by direction."""

    def __init__(self):
        self._lock = threading.Lock()
        self._up = defaultdict(int)
        self._down = defaultdict(int)

    def add_upload(self, round_no: int, client_id: int, nbytes: int):
        with self._lock:
            self._up[(round_no, client_id)] += nbytes

    def add_download(self, round_no: int, client_id: int, nbytes: int):
        with self._lock:
            self._down[(round_no, client_id)] += nbytes

    def upload_bytes(self, round_no: int, client_id: int) -> int:
        return self._up.get((round_no, client_id), 0)

    def download_bytes(self, round_no: int, client_id: int) -> int:
        return self._down.get((round_no, client_id), 0)

    def round_upload(self, round_no: int) -> int:
        return sum(v for (r, _), v in self._up.items() if r == round_no)

    def round_download(self, round_no: int) -> int:
        return sum(v for (r, _), v in self._down.items() if r == round_no)

    def client_total(self, client_id: int) -> tuple[int, int]:
        up = sum(v for (_, c), v in self._up.items() if c == client_id)
        down = sum(v for (_, c), v in self._down.items() if c == client_id)
        return up, down

    def total(self) -> tuple[int, int]:
        return sum(self._up.values()), sum(self._down.values())


class MemTransport:
    """In-process transport: one server inbox, one queue per client."""

    def __init__(self, client_ids):
        self.client_ids = list(client_ids)
        self.ledger = TrafficLedger()
        self.round_no = 0
        self._to_server: queue.Queue = queue.Queue()
        self._to_client = {cid: queue.Queue() for cid in self.client_ids}

    def begin_round(self, round_no: int):
        self.round_no = round_no

    def send_to_server(self, client_id: int, data: bytes):
        self.ledger.add_upload(self.round_no, client_id, len(data))
        self._to_server.put(data)

    def recv_at_server(self, timeout: float | None = None) -> bytes:
        try:
            return self._to_server.get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError("no client message arrived in time") from None

    def send_to_client(self, client_id: int, data: bytes):
        self.ledger.add_download(self.round_no, client_id, len(data))
        self._to_client[client_id].put(data)

    def recv_at_client(self, client_id: int, timeout: float | None = None) -> bytes:
        try:
            return self._to_client[client_id].get(timeout=timeout)
        except queue.Empty:
            raise TimeoutError(f"client {client_id} received no message in time") from None

    def close(self):
        pass


def _read_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ProtocolError("peer closed the connection mid-frame")
        buf += chunk
    return bytes(buf)


def _read_frame(sock: socket.socket) -> bytes:
    header = _read_exact(sock, HEADER_SIZE)
    if header[:4] != MAGIC:
        raise ProtocolError(f"bad frame magic {header[:4]!r}")
    (length,) = struct.unpack("<Q", header[5:13])
    return header + _read_exact(sock, length)


class SocketTransport:
    """Same interface as MemTransport over loopback TCP.

    One bidirectional connection per client: updates flow client-to-server
    and broadcasts server-to-client on the same socket. The accept handshake
    is an 8-byte client id.
    """

    def __init__(self, client_ids, host: str = "127.0.0.1"):
        self.client_ids = list(client_ids)
        self.ledger = TrafficLedger()
        self.round_no = 0
        self._listener = socket.create_server((host, 0))
        port = self._listener.getsockname()[1]

        self._client_socks = {}
        self._server_socks = {}
        threads = []
        for cid in self.client_ids:
            t = threading.Thread(target=self._connect_client, args=(cid, host, port))
            t.start()
            threads.append(t)
        for _ in self.client_ids:
            conn, _ = self._listener.accept()
            (cid,) = struct.unpack("<Q", _read_exact(conn, 8))
            if cid not in self._to_set():
                raise ProtocolError(f"handshake from unknown client {cid}")
            self._server_socks[cid] = conn
        for t in threads:
            t.join()

        self._selector = selectors.DefaultSelector()
        for cid, conn in self._server_socks.items():
            self._selector.register(conn, selectors.EVENT_READ, cid)
        self._ready: queue.Queue = queue.Queue()
        self._send_lock = threading.Lock()

    def _to_set(self):
        return set(self.client_ids)

    def _connect_client(self, cid: int, host: str, port: int):
        sock = socket.create_connection((host, port))
        sock.sendall(struct.pack("<Q", cid))
        self._client_socks[cid] = sock

    def begin_round(self, round_no: int):
        self.round_no = round_no

    def send_to_server(self, client_id: int, data: bytes):
        self.ledger.add_upload(self.round_no, client_id, len(data))
        self._client_socks[client_id].sendall(data)

    def recv_at_server(self, timeout: float | None = None) -> bytes:
        # one ready socket may hold several frames; drain queue first
        try:
            return self._ready.get_nowait()
        except queue.Empty:
            pass
        events = self._selector.select(timeout)
        if not events:
            raise TimeoutError("no client message arrived in time")
        for key, _ in events:
            self._ready.put(_read_frame(key.fileobj))
        return self._ready.get_nowait()

    def send_to_client(self, client_id: int, data: bytes):
        self.ledger.add_download(self.round_no, client_id, len(data))
        with self._send_lock:
            self._server_socks[client_id].sendall(data)

    def recv_at_client(self, client_id: int, timeout: float | None = None) -> bytes:
        sock = self._client_socks[client_id]
        sock.settimeout(timeout)
        try:
            return _read_frame(sock)
        except socket.timeout:
            raise TimeoutError(f"client {client_id} received no message in time") from None
        finally:
            sock.settimeout(None)

    def close(self):
        for sock in self._client_socks.values():
            sock.close()
        for sock in self._server_socks.values():
            self._selector.unregister(sock)
            sock.close()
        self._selector.close()
        self._listener.close()
