"""Duplex byte channels with two interchangeable backends.

Everything above this layer is transport-agnostic: a channel is an ordered,
reliable, bidirectional byte pipe with non-blocking reads. The simulated
backend keeps byte queues in process (and lets a harness sever links); the
TCP backend wraps real sockets, with endpoints given as host:port strings.
"""

from __future__ import annotations

import socket


class TransportError(OSError):
    pass


class UnknownEndpointError(TransportError):
    pass


class ChannelClosedError(TransportError):
    pass


class SimChannelEnd:
    """One end of an in-process duplex channel."""

    def __init__(self) -> None:
        self._rx = bytearray()
        self.closed = False
        self.peer: "SimChannelEnd" | None = None

    def send(self, data: bytes) -> None:
        if self.closed or self.peer is None or self.peer.closed:
            raise ChannelClosedError("send on closed channel")
        self.peer._rx.extend(data)

    def try_recv(self, limit: int = 1 << 20) -> bytes:
        if not self._rx:
            if self.closed:
                raise ChannelClosedError("recv on closed channel")
            return b""
        data = bytes(self._rx[:limit])
        del self._rx[:limit]
        return data

    @property
    def pending(self) -> int:
        return len(self._rx)

    def close(self) -> None:
        self.closed = True
        if self.peer is not None:
            self.peer.closed = True


def sim_channel_pair() -> tuple[SimChannelEnd, SimChannelEnd]:
    a, b = SimChannelEnd(), SimChannelEnd()
    a.peer, b.peer = b, a
    return a, b


class SimListener:
    def __init__(self, endpoint: str) -> None:
        self.endpoint = endpoint
        self.backlog: list[SimChannelEnd] = []

    def accept(self) -> SimChannelEnd | None:
        return self.backlog.pop(0) if self.backlog else None


class SimTransport:
    """Endpoint registry for simulated channels."""

    def __init__(self) -> None:
        self._listeners: dict[str, SimListener] = {}

    def listen(self, endpoint: str) -> SimListener:
        if endpoint in self._listeners:
            raise TransportError(f"endpoint {endpoint!r} already registered")
        listener = SimListener(endpoint)
        self._listeners[endpoint] = listener
        return listener

    def connect(self, endpoint: str) -> SimChannelEnd:
        listener = self._listeners.get(endpoint)
        if listener is None:
            raise UnknownEndpointError(f"unknown endpoint {endpoint!r}")
        near, far = sim_channel_pair()
        listener.backlog.append(far)
        return near


class TcpChannel:
    """Non-blocking channel over a connected TCP socket."""

    def __init__(self, sock: socket.socket) -> None:
        sock.setblocking(False)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._sock = sock
        self.closed = False

    def send(self, data: bytes) -> None:
        if self.closed:
            raise ChannelClosedError("send on closed channel")
        view = memoryview(data)
        while view:
            try:
                sent = self._sock.send(view)
            except BlockingIOError:
                continue
            except OSError as exc:
                raise ChannelClosedError(str(exc)) from exc
            view = view[sent:]

    def try_recv(self, limit: int = 1 << 16) -> bytes:
        if self.closed:
            raise ChannelClosedError("recv on closed channel")
        try:
            data = self._sock.recv(limit)
        except BlockingIOError:
            return b""
        except OSError as exc:
            raise ChannelClosedError(str(exc)) from exc
        if data == b"":
            self.closed = True
            raise ChannelClosedError("peer closed the connection")
        return data

    def fileno(self) -> int:
        return self._sock.fileno()

    def close(self) -> None:
        self.closed = True
        try:
            self._sock.close()
        except OSError:
            pass


class TcpListener:
    def __init__(self, host: str, port: int) -> None:
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(64)
        self._sock.setblocking(False)
        self.endpoint = f"{host}:{self._sock.getsockname()[1]}"

    def accept(self) -> TcpChannel | None:
        try:
            sock, _addr = self._sock.accept()
        except BlockingIOError:
            return None
        return TcpChannel(sock)

    def fileno(self) -> int:
        return self._sock.fileno()

    def close(self) -> None:
        self._sock.close()


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise TransportError(f"bad tcp endpoint {endpoint!r}, want host:port")
    return host, int(port)


def transport_connect(endpoint: str, kind: str = "tcp",
                      sim: SimTransport | None = None,
                      timeout: float = 5.0):
    """Open a duplex channel to ``endpoint`` over the chosen transport."""
    if kind == "simulated":
        if sim is None:
            raise TransportError("simulated transport requires a registry")
        return sim.connect(endpoint)
    if kind != "tcp":
        raise TransportError(f"unknown transport kind {kind!r}")
    host, port = parse_endpoint(endpoint)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as exc:
        raise TransportError(f"connect to {endpoint} failed: {exc}") from exc
    return TcpChannel(sock)
