"""Message transcript for reproducibility and the privacy audit."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from fedkrls.federation.messages import MessageKind, ProtocolMessage, encode_message


@dataclass
class Record:
    kind: MessageKind
    sender: str
    epoch: int
    digest: str
    payload: dict[str, np.ndarray]


@dataclass
class Transcript:
    """Keeps one record per message; payloads retained for auditing."""

    records: list[Record] = field(default_factory=list)

    def log(self, msg: ProtocolMessage) -> None:
        digest = hashlib.sha256(encode_message(msg)).hexdigest()
        self.records.append(
            Record(msg.kind, msg.sender, msg.epoch, digest, {k: np.array(v) for k, v in msg.payload.items()})
        )

    def counts(self) -> dict[MessageKind, int]:
        out: dict[MessageKind, int] = {}
        for rec in self.records:
            out[rec.kind] = out.get(rec.kind, 0) + 1
        return out

    def write(self, path) -> None:
        """One JSON line per message: kind, sender, epoch, payload digest."""
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(
                    json.dumps(
                        {"kind": rec.kind.name, "sender": rec.sender, "epoch": rec.epoch, "digest": rec.digest}
                    )
                    + "\n"
                )


def _arrays_in(rec: Record):
    for value in rec.payload.values():
        arr = np.atleast_1d(np.asarray(value, dtype=np.float64))
        if arr.ndim == 1:
            yield arr
        else:
            yield from arr  # rows of matrices


def audit_privacy(transcript: Transcript, X: np.ndarray, y_vectors: list[np.ndarray], forbid_kernel_blocks: bool = True) -> None:
    """Assert no payload leaks a raw sample row or a raw label vector.

    Comparison is bit-exact, matching the threat of verbatim data leaving a
    client.  With forbid_kernel_blocks, any NAIVE_KERNEL_BLOCK message is a
    violation (they belong to the one-shot protocol only).
    """
    raw_rows = {np.ascontiguousarray(row, dtype=np.float64).tobytes() for row in np.atleast_2d(X)}
    raw_rows |= {np.ascontiguousarray(yv, dtype=np.float64).tobytes() for yv in y_vectors}
    for rec in transcript.records:
        if forbid_kernel_blocks and rec.kind == MessageKind.NAIVE_KERNEL_BLOCK:
            raise AssertionError(f"kernel block message from {rec.sender} in a run that forbids them")
        for arr in _arrays_in(rec):
            if np.ascontiguousarray(arr).tobytes() in raw_rows:
                raise AssertionError(
                    f"payload of {rec.kind.name} from {rec.sender} (epoch {rec.epoch}) equals raw private data"
                )
