"""Hybrid-federated kernel regularized least squares.

Training data is split horizontally (samples across hospitals) and
vertically (features across omics centers).  The model is an RBF kernel
least-squares classifier over random Nystrom-like landmarks, trained
either centrally, by a one-shot naive protocol, or by a synchronized
federated conjugate-gradient protocol whose solution is identical to the
centralized one.
"""

from fedkrls.kernel import KernelBlock, KernelSpec, hadamard_compose, neg_log_to_distances, rbf_block
from fedkrls.landmarks import LandmarkSet, SharedSeed, noise_stream, sample_landmarks
from fedkrls.solver import CGTrace, FedState, RRLSProblem, solve_krls_closed_form, solve_rrls_cg, solve_rrls_direct

__all__ = [
    "KernelBlock",
    "KernelSpec",
    "hadamard_compose",
    "neg_log_to_distances",
    "rbf_block",
    "LandmarkSet",
    "SharedSeed",
    "noise_stream",
    "sample_landmarks",
    "CGTrace",
    "FedState",
    "RRLSProblem",
    "solve_krls_closed_form",
    "solve_rrls_cg",
    "solve_rrls_direct",
]

__version__ = "0.1.0"
