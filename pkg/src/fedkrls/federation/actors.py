"""Federated actors and the two training protocols.

The federator server coordinates hospitals over a message channel; each
hospital pulls kernel blocks from the omics providers that serve its
patients.  FedCG runs synchronized conjugate-gradient epochs where server
and hospitals apply bit-identical state updates; the naive protocol ships
masked kernel blocks and labels to the server in one shot.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from fedkrls.data import PartitionedDataset
from fedkrls.kernel import KernelBlock, KernelSpec, hadamard_compose, rbf_block
from fedkrls.landmarks import LandmarkSet, SharedSeed, noise_stream, permutation_stream
from fedkrls.federation.messages import MessageKind, ProtocolError, ProtocolMessage
from fedkrls.federation.transcript import Transcript
from fedkrls.federation.transport import Channel, TcpHub, connect, queue_pair, run_peer_thread
from fedkrls.solver import CGTrace, FedState, RRLSProblem, cg_step, solve_rrls_cg


def config_checksum(seed: SharedSeed, spec: KernelSpec, m: int, lam: float, toll: float) -> np.ndarray:
    """Two-float64 fingerprint of the shared run configuration.

    Parties compare it during the handshake; a mismatch means the
    synchronized randomness would diverge, so the run aborts.
    """
    h = hashlib.sha256()
    h.update(seed.seed.to_bytes(8, "little"))
    h.update(seed.stream_label.encode())
    widths = (spec.gamma,) if spec.is_shared else spec.gammas
    h.update(struct.pack(f"<{len(widths)}d", *widths))
    h.update(struct.pack("<qdd", m, lam, toll))
    lo, hi = struct.unpack("<II", h.digest()[:8])
    return np.array([float(lo), float(hi)])


class OmicsProvider:
    """Feature provider: computes kernel blocks on its feature slice."""

    def __init__(self, provider_id: str, blocks: dict[str, np.ndarray], features: dict[str, tuple[int, ...]]):
        self.provider_id = provider_id
        self._blocks = blocks  # hospital id -> samples x own-features
        self._features = features  # hospital id -> feature indices served

    def features_for(self, hospital_id: str) -> tuple[int, ...]:
        return self._features[hospital_id]

    def kernel_block(self, hospital_id: str, landmarks: LandmarkSet, spec: KernelSpec) -> KernelBlock:
        feats = self._features[hospital_id]
        W_sub = landmarks.W[:, list(feats)]
        return rbf_block(self._blocks[hospital_id], W_sub, spec, feature_subset=feats)


class HospitalActor:
    """A hospital: owns labels for its patients, queries providers for blocks,
    and mirrors the server's CG state epoch by epoch."""

    def __init__(
        self,
        hospital_id: str,
        y: np.ndarray,
        providers: list[OmicsProvider],
        landmarks: LandmarkSet,
        spec: KernelSpec,
        lam: float,
        n_hospitals: int,
        seed: SharedSeed,
        mask: bool = True,
    ):
        self.hospital_id = hospital_id
        self.y = np.asarray(y, dtype=np.float64)
        self.providers = sorted(providers, key=lambda p: p.provider_id)
        self.landmarks = landmarks
        self.spec = spec
        self.lam = lam
        self.n_hospitals = n_hospitals
        self.seed = seed
        self.mask = mask
        self.state: FedState | None = None
        self.state_digests: list[str] = []
        self._kernel: np.ndarray | None = None

    @property
    def n_samples(self) -> int:
        return self.y.shape[0]

    def eta(self) -> np.ndarray:
        if not self.mask:
            return np.zeros(self.n_samples)
        return noise_stream(self.seed.derive(f"noise/{self.hospital_id}"), self.n_samples)

    def kernel(self) -> np.ndarray:
        """Hadamard composition of the per-provider blocks for this hospital."""
        if self._kernel is None:
            blocks = [p.kernel_block(self.hospital_id, self.landmarks, self.spec) for p in self.providers]
            self._kernel = hadamard_compose(blocks).values
        return self._kernel

    def federated_gradient(self, alpha: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Local CG quantities: (K_h^T K_h p + (lam/N_h) p,  K_h alpha - y + eta)."""
        K = self.kernel()
        v = K @ alpha - self.y + self.eta()
        KtKp = K.T @ (K @ p) + (self.lam / self.n_hospitals) * p
        return KtKp, v

    # -- FedCG client side ------------------------------------------------

    def hello(self, checksum: np.ndarray) -> ProtocolMessage:
        return ProtocolMessage(MessageKind.LANDMARK_SEED, self.hospital_id, 0, {"checksum": checksum})

    def serve_fedcg(self, channel: Channel, checksum: np.ndarray, alpha0: np.ndarray, toll: float, max_epochs: int) -> None:
        ack = channel.recv(timeout=60.0)
        if ack.kind == MessageKind.STOP:
            raise ProtocolError(f"{self.hospital_id}: server aborted during handshake")
        if ack.kind != MessageKind.LANDMARK_SEED or not np.array_equal(ack.payload["checksum"], checksum):
            raise ProtocolError(f"{self.hospital_id}: seed checksum mismatch")

        K = self.kernel()
        _, v = self.federated_gradient(alpha0, np.zeros_like(alpha0))
        channel.send(ProtocolMessage(MessageKind.MASKED_RESIDUAL, self.hospital_id, 0, {"v": v}))
        channel.send(ProtocolMessage(MessageKind.NOISY_GRAD_TERM, self.hospital_id, 0, {"g": K.T @ v}))
        channel.send(ProtocolMessage(MessageKind.DENOISE_TERM, self.hospital_id, 0, {"g": K.T @ self.eta()}))

        bcast = channel.recv(timeout=60.0)
        if bcast.kind != MessageKind.BROADCAST:
            raise ProtocolError(f"{self.hospital_id}: expected gradient broadcast, got {bcast.kind.name}")
        self.state = FedState.from_gradient(alpha0, bcast.payload["G"].copy())
        self.state_digests.append(self.state.digest())
        if self.state.err < toll:
            self._expect_stop(channel)
            return
        for epoch in range(1, max_epochs + 1):
            KtKp_h, _ = self.federated_gradient(self.state.alpha, self.state.p)
            channel.send(ProtocolMessage(MessageKind.PARTIAL_KTKP, self.hospital_id, epoch, {"g": KtKp_h}))
            channel.send(
                ProtocolMessage(
                    MessageKind.PARTIAL_SCALAR, self.hospital_id, epoch, {"s": float(self.state.p @ KtKp_h)}
                )
            )
            bcast = channel.recv(timeout=60.0)
            if bcast.kind != MessageKind.BROADCAST:
                raise ProtocolError(f"{self.hospital_id}: expected epoch broadcast, got {bcast.kind.name}")
            cg_step(self.state, bcast.payload["KtKp"].copy(), bcast.scalar("pKtKp"))
            self.state_digests.append(self.state.digest())
            if self.state.err < toll or epoch == max_epochs:
                self._expect_stop(channel)
                return

    def _expect_stop(self, channel: Channel) -> None:
        stop = channel.recv(timeout=60.0)
        if stop.kind != MessageKind.STOP:
            raise ProtocolError(f"{self.hospital_id}: expected STOP, got {stop.kind.name}")

    # -- naive client side ------------------------------------------------

    def serve_naive(self, channel: Channel, checksum: np.ndarray) -> None:
        ack = channel.recv(timeout=60.0)
        if ack.kind != MessageKind.LANDMARK_SEED or not np.array_equal(ack.payload["checksum"], checksum):
            raise ProtocolError(f"{self.hospital_id}: seed checksum mismatch")
        for provider in self.providers:
            block = provider.kernel_block(self.hospital_id, self.landmarks, self.spec)
            channel.send(
                ProtocolMessage(
                    MessageKind.NAIVE_KERNEL_BLOCK,
                    f"{provider.provider_id}@{self.hospital_id}",
                    0,
                    {"K": block.values},
                )
            )
        perm = permutation_stream(self.seed.derive(f"shuffle/{self.hospital_id}"), self.n_samples)
        eta = noise_stream(self.seed.derive(f"labelnoise/{self.hospital_id}"), self.n_samples)
        masked = self.y[perm] + eta
        channel.send(ProtocolMessage(MessageKind.MASKED_LABELS, self.hospital_id, 0, {"v": masked}))


def build_actors(
    part: PartitionedDataset,
    landmarks: LandmarkSet,
    spec: KernelSpec,
    lam: float,
    seed: SharedSeed,
    mask: bool = True,
) -> list[HospitalActor]:
    topo = part.topology
    providers: dict[str, OmicsProvider] = {}
    for pid in topo.provider_ids:
        blocks = {h: part.blocks[(h, pid)] for h in topo.hospitals if (h, pid) in part.blocks}
        feats = {h: topo.serving[h][pid] for h in topo.hospitals if pid in topo.serving[h]}
        providers[pid] = OmicsProvider(pid, blocks, feats)
    hospitals = []
    for h in topo.hospital_ids:
        serving = [providers[pid] for pid in sorted(topo.serving[h])]
        hospitals.append(
            HospitalActor(h, part.labels[h], serving, landmarks, spec, lam, topo.n_hospitals, seed, mask)
        )
    return hospitals


@dataclass
class FedRunResult:
    alpha: np.ndarray
    trace: CGTrace
    state: FedState | None
    transcript: Transcript
    hospital_digests: dict[str, list[str]] = field(default_factory=dict)
    server_digests: list[str] = field(default_factory=list)


class _ServerChannels:
    """Per-hospital channels plus the transcript hook, for either transport."""

    def __init__(self, hospitals: list[HospitalActor], transport: str, checksum: np.ndarray, client, transcript: Transcript):
        self.transcript = transcript
        self.threads = []
        self.errors: list[BaseException] = []
        self.channels: dict[str, Channel] = {}
        self.hellos: dict[str, ProtocolMessage] = {}

        def guarded(fn):
            def run():
                try:
                    fn()
                except BaseException as exc:  # surfaced after join
                    self.errors.append(exc)

            return run

        if transport == "bus":
            for hosp in hospitals:
                server_end, client_end = queue_pair()
                client_end.send(hosp.hello(checksum))
                hello = server_end.recv(timeout=60.0)
                transcript.log(hello)
                self.channels[hello.sender] = server_end
                self.hellos[hello.sender] = hello
                self.threads.append(run_peer_thread(guarded(lambda h=hosp, ch=client_end: client(h, ch))))
        elif transport == "tcp":
            hub = TcpHub(len(hospitals))
            for hosp in hospitals:
                def connect_and_serve(h=hosp):
                    chan = connect(hub.address, h.hello(checksum))
                    try:
                        client(h, chan)
                    finally:
                        chan.close()

                self.threads.append(run_peer_thread(guarded(connect_and_serve)))
            hub.accept_all()
            for sender, chan in hub.channels.items():
                transcript.log(hub.hello[sender])
                self.channels[sender] = chan
                self.hellos[sender] = hub.hello[sender]
        else:
            raise ValueError(f"unknown transport {transport!r}")

    def send(self, hospital_id: str, msg: ProtocolMessage) -> None:
        self.transcript.log(msg)
        self.channels[hospital_id].send(msg)

    def broadcast(self, msg: ProtocolMessage) -> None:
        self.transcript.log(msg)
        for chan in self.channels.values():
            chan.send(msg)

    def recv(self, hospital_id: str, expected: MessageKind) -> ProtocolMessage:
        msg = self.channels[hospital_id].recv(timeout=60.0)
        self.transcript.log(msg)
        if msg.kind != expected:
            raise ProtocolError(f"expected {expected.name} from {hospital_id}, got {msg.kind.name}")
        return msg

    def join(self) -> None:
        for t in self.threads:
            t.join(timeout=60.0)
        if self.errors:
            raise self.errors[0]


def run_fedcg(
    part: PartitionedDataset,
    landmarks: LandmarkSet,
    spec: KernelSpec,
    lam: float,
    seed: SharedSeed,
    alpha0: np.ndarray | None = None,
    toll: float = 1e-6,
    max_epochs: int = 500,
    mask: bool = True,
    transport: str = "bus",
    transcript: Transcript | None = None,
) -> FedRunResult:
    """Train by the secure iterative protocol; server and clients stay in lock step."""
    if alpha0 is None:
        alpha0 = seed.derive("alpha0").generator().standard_normal(landmarks.m)
    alpha0 = np.asarray(alpha0, dtype=np.float64)
    transcript = transcript if transcript is not None else Transcript()
    checksum = config_checksum(seed, spec, landmarks.m, lam, toll)
    hospitals = build_actors(part, landmarks, spec, lam, seed, mask=mask)
    order = [h.hospital_id for h in hospitals]  # already ascending

    def client(hosp: HospitalActor, chan: Channel) -> None:
        hosp.serve_fedcg(chan, checksum, alpha0, toll, max_epochs)

    chans = _ServerChannels(hospitals, transport, checksum, client, transcript)
    try:
        for hid in order:
            if not np.array_equal(chans.hellos[hid].payload["checksum"], checksum):
                chans.broadcast(ProtocolMessage(MessageKind.STOP, "server", 0, {"converged": 0.0, "abort": 1.0}))
                raise ProtocolError(f"seed checksum mismatch from hospital {hid}; aborting")
            chans.send(hid, ProtocolMessage(MessageKind.LANDMARK_SEED, "server", 0, {"checksum": checksum}))

        # initialization: aggregate the noise-masked gradient, denoise exactly
        noisy: dict[str, np.ndarray] = {}
        denoise: dict[str, np.ndarray] = {}
        for hid in order:
            chans.recv(hid, MessageKind.MASKED_RESIDUAL)
            noisy[hid] = chans.recv(hid, MessageKind.NOISY_GRAD_TERM).payload["g"]
            denoise[hid] = chans.recv(hid, MessageKind.DENOISE_TERM).payload["g"]
        G = np.zeros(landmarks.m)
        for hid in order:
            G = G + noisy[hid]
        for hid in order:
            G = G - denoise[hid]
        G = G + lam * alpha0
        chans.broadcast(ProtocolMessage(MessageKind.BROADCAST, "server", 0, {"G": G}))

        state = FedState.from_gradient(alpha0, G)
        server_digests = [state.digest()]
        trace = CGTrace()
        trace.records.append((0, state.err, 0.0, 0.0))
        if state.err < toll:
            trace.converged = True
            chans.broadcast(ProtocolMessage(MessageKind.STOP, "server", 0, {"converged": 1.0}))
        else:
            for epoch in range(1, max_epochs + 1):
                partial: dict[str, np.ndarray] = {}
                partial_s: dict[str, float] = {}
                for hid in order:
                    partial[hid] = chans.recv(hid, MessageKind.PARTIAL_KTKP).payload["g"]
                    partial_s[hid] = chans.recv(hid, MessageKind.PARTIAL_SCALAR).scalar("s")
                KtKp = np.zeros(landmarks.m)
                pKtKp = 0.0
                for hid in order:
                    KtKp = KtKp + partial[hid]
                    pKtKp = pKtKp + partial_s[hid]
                chans.broadcast(
                    ProtocolMessage(MessageKind.BROADCAST, "server", epoch, {"KtKp": KtKp, "pKtKp": pKtKp})
                )
                a, beta = cg_step(state, KtKp, pKtKp)
                server_digests.append(state.digest())
                trace.records.append((state.epoch, state.err, a, beta))
                trace.stop_epoch = state.epoch
                if state.err < toll:
                    trace.converged = True
                if state.err < toll or epoch == max_epochs:
                    chans.broadcast(
                        ProtocolMessage(MessageKind.STOP, "server", epoch, {"converged": float(trace.converged)})
                    )
                    break
        chans.join()
    finally:
        for chan in chans.channels.values():
            chan.close()
    return FedRunResult(
        state.alpha.copy(),
        trace,
        state,
        transcript,
        {h.hospital_id: h.state_digests for h in hospitals},
        server_digests,
    )


def run_naive(
    part: PartitionedDataset,
    landmarks: LandmarkSet,
    spec: KernelSpec,
    lam: float,
    seed: SharedSeed,
    alpha0: np.ndarray | None = None,
    toll: float = 1e-6,
    max_epochs: int = 500,
    transport: str = "bus",
    transcript: Transcript | None = None,
) -> FedRunResult:
    """One-shot protocol: masked blocks and labels to the server, then central CG."""
    if alpha0 is None:
        alpha0 = seed.derive("alpha0").generator().standard_normal(landmarks.m)
    transcript = transcript if transcript is not None else Transcript()
    checksum = config_checksum(seed, spec, landmarks.m, lam, toll)
    hospitals = build_actors(part, landmarks, spec, lam, seed, mask=True)
    order = [h.hospital_id for h in hospitals]

    def client(hosp: HospitalActor, chan: Channel) -> None:
        hosp.serve_naive(chan, checksum)

    chans = _ServerChannels(hospitals, transport, checksum, client, transcript)
    try:
        for hid in order:
            chans.send(hid, ProtocolMessage(MessageKind.LANDMARK_SEED, "server", 0, {"checksum": checksum}))
        per_hospital_K: dict[str, np.ndarray] = {}
        per_hospital_y: dict[str, np.ndarray] = {}
        for hosp in hospitals:
            hid = hosp.hospital_id
            stack = None
            for _ in hosp.providers:
                block = chans.recv(hid, MessageKind.NAIVE_KERNEL_BLOCK).payload["K"]
                stack = block if stack is None else stack * block
            per_hospital_K[hid] = stack
            masked = chans.recv(hid, MessageKind.MASKED_LABELS).payload["v"]
            perm = permutation_stream(seed.derive(f"shuffle/{hid}"), hosp.n_samples)
            eta = noise_stream(seed.derive(f"labelnoise/{hid}"), hosp.n_samples)
            unmasked = np.empty_like(masked)
            unmasked[perm] = masked - eta
            per_hospital_y[hid] = unmasked
        chans.join()
    finally:
        for chan in chans.channels.values():
            chan.close()
    K = np.vstack([per_hospital_K[hid] for hid in order])
    y = np.concatenate([per_hospital_y[hid] for hid in order])
    alpha, trace = solve_rrls_cg(RRLSProblem(K, y, lam), alpha0, toll, max_epochs)
    return FedRunResult(alpha, trace, None, transcript)


def predict(alpha: np.ndarray, X_query: np.ndarray, landmarks: LandmarkSet, spec: KernelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Scores sum_j alpha_j k(w_j, x) and hard labels (ties go to +1)."""
    scores = rbf_block(X_query, landmarks.W, spec).values @ np.asarray(alpha, dtype=np.float64)
    classes = np.where(scores >= 0, 1.0, -1.0)
    return scores, classes
