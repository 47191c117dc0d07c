"""Protocol messages and their binary wire encoding.

A frame is a little-endian u32 length prefix followed by the body:

    version  u8 (currently 1)
    kind     u8
    sender   u16 length + utf-8 bytes
    epoch    u32
    n_arrays u8, then per array:
        name  u8 length + utf-8 bytes
        ndim  u8
        dims  u32 each
        data  row-major float64, little-endian

Scalars travel as 0-d arrays.  The same encoding backs both the TCP
transport and the transcript digests, so the two transports are
byte-compatible.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

import numpy as np

WIRE_VERSION = 1


class ProtocolError(RuntimeError):
    pass


class MessageKind(enum.IntEnum):
    LANDMARK_SEED = 1
    MASKED_RESIDUAL = 2
    NOISY_GRAD_TERM = 3
    DENOISE_TERM = 4
    PARTIAL_KTKP = 5
    PARTIAL_SCALAR = 6
    BROADCAST = 7
    NAIVE_KERNEL_BLOCK = 8
    MASKED_LABELS = 9
    STOP = 10


@dataclass
class ProtocolMessage:
    kind: MessageKind
    sender: str
    epoch: int
    payload: dict[str, np.ndarray] = field(default_factory=dict)

    def scalar(self, name: str) -> float:
        arr = np.asarray(self.payload[name])
        if arr.size != 1:
            raise ProtocolError(f"payload field {name!r} is not a scalar")
        return float(arr.item())


def _pack_str(s: str, width: str) -> bytes:
    raw = s.encode()
    return struct.pack(f"<{width}", len(raw)) + raw


def encode_message(msg: ProtocolMessage) -> bytes:
    parts = [struct.pack("<BB", WIRE_VERSION, int(msg.kind))]
    parts.append(_pack_str(msg.sender, "H"))
    parts.append(struct.pack("<I", msg.epoch))
    parts.append(struct.pack("<B", len(msg.payload)))
    for name, value in msg.payload.items():
        arr = np.asarray(value, dtype=np.float64)
        parts.append(_pack_str(name, "B"))
        parts.append(struct.pack("<B", arr.ndim))
        for dim in arr.shape:
            parts.append(struct.pack("<I", dim))
        parts.append(np.ascontiguousarray(arr).astype("<f8", copy=False).tobytes())
    return b"".join(parts)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ProtocolError("truncated frame")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_message(body: bytes) -> ProtocolMessage:
    cur = _Cursor(body)
    version, kind = cur.unpack("<BB")
    if version != WIRE_VERSION:
        raise ProtocolError(f"unsupported wire version {version}")
    (slen,) = cur.unpack("<H")
    sender = cur.take(slen).decode()
    (epoch,) = cur.unpack("<I")
    (n_arrays,) = cur.unpack("<B")
    payload: dict[str, np.ndarray] = {}
    for _ in range(n_arrays):
        (nlen,) = cur.unpack("<B")
        name = cur.take(nlen).decode()
        (ndim,) = cur.unpack("<B")
        shape = tuple(cur.unpack("<I")[0] for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(cur.take(8 * count), dtype="<f8").reshape(shape)
        payload[name] = data.astype(np.float64).reshape(shape)
    if cur.pos != len(body):
        raise ProtocolError("trailing bytes in frame")
    return ProtocolMessage(MessageKind(kind), sender, epoch, payload)


def frame(body: bytes) -> bytes:
    return struct.pack("<I", len(body)) + body


def read_frame(read_exactly) -> bytes:
    """Read one length-prefixed frame via a read_exactly(n) callable."""
    (length,) = struct.unpack("<I", read_exactly(4))
    return read_exactly(length)
