from fedkrls.federation.messages import MessageKind, ProtocolMessage
from fedkrls.federation.actors import (
    FedRunResult,
    HospitalActor,
    OmicsProvider,
    build_actors,
    predict,
    run_fedcg,
    run_naive,
)
from fedkrls.federation.transcript import Transcript, audit_privacy

__all__ = [
    "MessageKind",
    "ProtocolMessage",
    "FedRunResult",
    "HospitalActor",
    "OmicsProvider",
    "build_actors",
    "predict",
    "run_fedcg",
    "run_naive",
    "Transcript",
    "audit_privacy",
]
