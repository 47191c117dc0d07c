"""Centralized solvers for the kernel least-squares problem.

Three routes: the full closed-form solve on the n-by-n kernel, a direct
solve of the landmark normal equations, and conjugate gradient on the same
normal equations.  The CG step is factored out so the federated protocol
performs bit-identical state updates.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

DEFAULT_TOLL = 1e-6  # on the residual squared sum
DEFAULT_MAX_EPOCHS = 500
DEFAULT_LAMBDA = 1e-3


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class RRLSProblem:
    """Least squares on an n-by-m landmark kernel block with ridge weight lam.

    Minimizes ||y - K_m alpha||^2 + lam * ||alpha||^2.  The 1/n data-fit
    factor is folded into lam.
    """

    K_m: np.ndarray
    y: np.ndarray
    lam: float

    def __post_init__(self):
        K = np.asarray(self.K_m, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        object.__setattr__(self, "K_m", K)
        object.__setattr__(self, "y", y)
        if K.ndim != 2 or K.shape[0] < 1 or K.shape[1] < 1:
            raise ValueError(f"K_m must be a nonempty matrix, got shape {K.shape}")
        if y.shape != (K.shape[0],):
            raise ValueError(f"y has shape {y.shape}, expected ({K.shape[0]},)")
        if not np.isfinite(y).all():
            raise ValueError("non-finite labels")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")

    @property
    def n(self) -> int:
        return self.K_m.shape[0]

    @property
    def m(self) -> int:
        return self.K_m.shape[1]

    def objective(self, alpha: np.ndarray) -> float:
        r = self.y - self.K_m @ alpha
        return float(r @ r + self.lam * (alpha @ alpha))

    def gradient(self, alpha: np.ndarray) -> np.ndarray:
        """Gradient of the objective up to the constant factor 2.

        CG is invariant to the factor, so it is dropped throughout.
        """
        return self.K_m.T @ (self.K_m @ alpha - self.y) + self.lam * alpha


@dataclass
class FedState:
    """Conjugate-gradient state replicated at the server and every hospital."""

    alpha: np.ndarray
    p: np.ndarray
    r: np.ndarray
    G: np.ndarray
    epoch: int = 0
    err: float = np.inf

    @classmethod
    def from_gradient(cls, alpha0: np.ndarray, G: np.ndarray) -> "FedState":
        p = -G
        r = p.copy()
        return cls(alpha=alpha0.copy(), p=p, r=r, G=G, epoch=0, err=float(r @ r))

    def digest(self) -> str:
        h = hashlib.sha256()
        for v in (self.alpha, self.p, self.r):
            h.update(np.ascontiguousarray(v).tobytes())
        h.update(np.float64(self.err).tobytes())
        h.update(self.epoch.to_bytes(8, "little"))
        return h.hexdigest()


@dataclass
class CGTrace:
    """Per-epoch convergence record: (epoch, residual squared sum, step, beta)."""

    records: list[tuple[int, float, float, float]] = field(default_factory=list)
    stop_epoch: int = 0
    converged: bool = False


def cg_step(state: FedState, KtKp: np.ndarray, pKtKp: float) -> tuple[float, float]:
    """One synchronous CG update applied in place; returns (step a, beta).

    Every party runs this with the same broadcast (KtKp, pKtKp), so the
    replicated states stay bit-identical.
    """
    if not np.isfinite(pKtKp) or pKtKp <= 0:
        raise SolverError(f"indefinite or degenerate system: p.KtKp = {pKtKp}")
    rr = state.r @ state.r
    a = rr / pKtKp
    state.alpha = state.alpha + a * state.p
    r_old_rr = rr
    state.r = state.r - a * KtKp
    state.err = float(state.r @ state.r)
    if not np.isfinite(state.err):
        raise SolverError("residual diverged to non-finite values")
    beta = (state.r @ state.r) / r_old_rr
    state.p = state.r + beta * state.p
    state.epoch += 1
    return float(a), float(beta)


def solve_krls_closed_form(K: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Solve (K + lam*I) alpha = y for the full kernel formulation."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = K.shape[0]
    alpha = scipy.linalg.solve(K + lam * np.eye(n), y, assume_a="sym")
    resid = np.linalg.norm((K + lam * np.eye(n)) @ alpha - y)
    if resid > 1e-10 * max(np.linalg.norm(y), 1.0):
        raise SolverError(f"closed-form solve inaccurate: relative residual {resid:.3e}")
    return alpha


def solve_krls_cg(K: np.ndarray, y: np.ndarray, lam: float, toll: float = DEFAULT_TOLL, max_epochs: int = DEFAULT_MAX_EPOCHS) -> tuple[np.ndarray, CGTrace]:
    """CG directly on (K + lam*I) alpha = y; baseline for the sweep plots."""
    K = np.asarray(K, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = K.shape[0]
    alpha = np.zeros(n)
    r = y - (K @ alpha + lam * alpha)
    p = r.copy()
    trace = CGTrace()
    err = float(r @ r)
    trace.records.append((0, err, 0.0, 0.0))
    if err < toll:
        trace.converged = True
        return alpha, trace
    for epoch in range(1, max_epochs + 1):
        Ap = K @ p + lam * p
        pAp = float(p @ Ap)
        if pAp <= 0:
            raise SolverError(f"indefinite system in full-kernel CG: pAp = {pAp}")
        rr = r @ r
        a = rr / pAp
        alpha = alpha + a * p
        r = r - a * Ap
        err = float(r @ r)
        beta = (r @ r) / rr
        trace.records.append((epoch, err, float(a), float(beta)))
        trace.stop_epoch = epoch
        if err < toll:
            trace.converged = True
            break
        p = r + beta * p
    return alpha, trace


def solve_rrls_direct(problem: RRLSProblem) -> np.ndarray:
    """Direct solve of the normal equations (K^T K + lam I) alpha = K^T y.

    At lam = 0 returns the minimum-norm least-squares solution.
    """
    K, y, lam = problem.K_m, problem.y, problem.lam
    if lam == 0.0:
        alpha, *_ = np.linalg.lstsq(K, y, rcond=None)
        return alpha
    A = K.T @ K + lam * np.eye(problem.m)
    return scipy.linalg.solve(A, K.T @ y, assume_a="pos")


def solve_rrls_cg(
    problem: RRLSProblem,
    alpha0: np.ndarray,
    toll: float = DEFAULT_TOLL,
    max_epochs: int = DEFAULT_MAX_EPOCHS,
) -> tuple[np.ndarray, CGTrace]:
    """Classical CG on the normal equations, starting from alpha0.

    Arithmetic matches the federated epoch exactly, so running the
    federated protocol with one hospital reproduces this trace verbatim.
    """
    if toll <= 0:
        raise ValueError("toll must be > 0")
    alpha0 = np.asarray(alpha0, dtype=np.float64)
    if alpha0.shape != (problem.m,):
        raise ValueError(f"alpha0 has shape {alpha0.shape}, expected ({problem.m},)")
    K = problem.K_m
    G = problem.gradient(alpha0)
    state = FedState.from_gradient(alpha0, G)
    trace = CGTrace()
    trace.records.append((0, state.err, 0.0, 0.0))
    if state.err < toll:
        trace.converged = True
        return state.alpha, trace
    for _ in range(max_epochs):
        KtKp = K.T @ (K @ state.p) + problem.lam * state.p
        pKtKp = float(state.p @ KtKp)
        a, beta = cg_step(state, KtKp, pKtKp)
        trace.records.append((state.epoch, state.err, a, beta))
        trace.stop_epoch = state.epoch
        if state.err < toll:
            trace.converged = True
            break
    return state.alpha, trace
