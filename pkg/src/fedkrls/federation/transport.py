"""Message channels: in-process queues and length-prefixed TCP sockets.

Both bindings carry the same encoded frames, so a protocol run is
byte-identical regardless of the transport.
"""

from __future__ import annotations

import queue
import socket
import threading

from fedkrls.federation.messages import ProtocolMessage, decode_message, encode_message, frame, read_frame


class TransportError(RuntimeError):
    pass


class Channel:
    def send(self, msg: ProtocolMessage) -> None:
        raise NotImplementedError

    def recv(self, timeout: float | None = None) -> ProtocolMessage:
        raise NotImplementedError

    def close(self) -> None:
        pass


class QueueChannel(Channel):
    """One endpoint of an in-process duplex queue pair.

    Messages still round-trip through the wire encoding so the bus and TCP
    transports exercise identical bytes.
    """

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue):
        self._inbox = inbox
        self._outbox = outbox

    def send(self, msg: ProtocolMessage) -> None:
        self._outbox.put(encode_message(msg))

    def recv(self, timeout: float | None = None) -> ProtocolMessage:
        try:
            body = self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportError("timed out waiting for a message") from None
        return decode_message(body)


def queue_pair() -> tuple[QueueChannel, QueueChannel]:
    a, b = queue.Queue(), queue.Queue()
    return QueueChannel(a, b), QueueChannel(b, a)


class SocketChannel(Channel):
    def __init__(self, sock: socket.socket):
        self._sock = sock

    def _read_exactly(self, n: int) -> bytes:
        buf = bytearray()
        while len(buf) < n:
            chunk = self._sock.recv(n - len(buf))
            if not chunk:
                raise TransportError("peer closed the connection")
            buf.extend(chunk)
        return bytes(buf)

    def send(self, msg: ProtocolMessage) -> None:
        self._sock.sendall(frame(encode_message(msg)))

    def recv(self, timeout: float | None = None) -> ProtocolMessage:
        self._sock.settimeout(timeout)
        return decode_message(read_frame(self._read_exactly))

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class TcpHub:
    """Server-side listener that hands out one SocketChannel per peer.

    Peers identify themselves with the first frame's sender field.
    """

    def __init__(self, n_peers: int, host: str = "127.0.0.1"):
        self._listener = socket.create_server((host, 0))
        self.address = self._listener.getsockname()
        self._n_peers = n_peers
        self.channels: dict[str, SocketChannel] = {}
        self.hello: dict[str, ProtocolMessage] = {}

    def accept_all(self, timeout: float = 30.0) -> None:
        self._listener.settimeout(timeout)
        for _ in range(self._n_peers):
            conn, _ = self._listener.accept()
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            chan = SocketChannel(conn)
            hello = chan.recv(timeout=timeout)
            self.channels[hello.sender] = chan
            self.hello[hello.sender] = hello
        self._listener.close()

    def close(self) -> None:
        for chan in self.channels.values():
            chan.close()


def connect(address, sender_hello: ProtocolMessage, timeout: float = 30.0) -> SocketChannel:
    sock = socket.create_connection(address, timeout=timeout)
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    chan = SocketChannel(sock)
    chan.send(sender_hello)
    return chan


def run_peer_thread(target, *args) -> threading.Thread:
    t = threading.Thread(target=target, args=args, daemon=True)
    t.start()
    return t
