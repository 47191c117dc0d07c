"""Distance-matrix leakage bench for the one-shot protocol.

The adversary sees the sample-to-landmark squared distances (recovered
from a leaked kernel block by -log/gamma) and the landmark-to-landmark
distances (landmarks are reproducible from the shared seed).  It then
tries to complete the hidden sample-to-sample block of the stacked
Euclidean distance matrix with three completion algorithms and we score
the reconstruction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from fedkrls.kernel import KernelSpec, NotInvertibleError, neg_log_to_distances, rbf_block
from fedkrls.landmarks import SharedSeed, sample_landmarks


@dataclass(frozen=True)
class EDMInstance:
    """Stacked squared-distance matrix with the sample block hidden.

    D = [[D_X, D_XW], [D_XW^T, D_W]]; mask is True on observed entries:
    everything except the off-diagonal of D_X.
    """

    D: np.ndarray
    mask: np.ndarray
    embed_dim: int
    n_samples: int

    def __post_init__(self):
        D, mask = np.asarray(self.D, dtype=np.float64), np.asarray(self.mask, dtype=bool)
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "mask", mask)
        if D.shape != mask.shape or D.shape[0] != D.shape[1]:
            raise ValueError("D and mask must be square and congruent")
        if not np.allclose(D, D.T) or not np.array_equal(mask, mask.T):
            raise ValueError("D and mask must be symmetric")
        if np.diag(D).any() or not np.diag(mask).all():
            raise ValueError("diagonal must be zero and observed")
        if (D < 0).any():
            raise ValueError("squared distances must be nonnegative")

    @property
    def size(self) -> int:
        return self.D.shape[0]

    def hidden_block(self, M: np.ndarray) -> np.ndarray:
        return M[: self.n_samples, : self.n_samples]


@dataclass
class CompletionResult:
    D_hat: np.ndarray
    rel_error: float
    iterations: int
    wall_time: float


def squared_distances(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def assemble_edm(X: np.ndarray, W: np.ndarray) -> EDMInstance:
    """Stack [[D_X, D_XW], [D_XW^T, D_W]] and hide the D_X off-diagonal."""
    X = np.asarray(X, dtype=np.float64)
    W = np.asarray(W, dtype=np.float64)
    if X.shape[1] != W.shape[1]:
        raise ValueError("X and W must share the embedding dimension")
    n, m = X.shape[0], W.shape[0]
    D = np.zeros((n + m, n + m))
    D[:n, :n] = squared_distances(X, X)
    D[:n, n:] = squared_distances(X, W)
    D[n:, :n] = D[:n, n:].T
    D[n:, n:] = squared_distances(W, W)
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0.0)
    mask = np.ones_like(D, dtype=bool)
    mask[:n, :n] = False
    np.fill_diagonal(mask, True)
    return EDMInstance(D, mask, embed_dim=X.shape[1], n_samples=n)


def _init_fill(inst: EDMInstance) -> np.ndarray:
    """Hidden entries start at the column means of the observed entries."""
    D = inst.D.copy()
    col_means = np.array(
        [D[inst.mask[:, j], j].mean() if inst.mask[:, j].any() else 0.0 for j in range(inst.size)]
    )
    hidden = ~inst.mask
    D[hidden] = np.broadcast_to(col_means, D.shape)[hidden]
    D = (D + D.T) / 2
    np.fill_diagonal(D, 0.0)
    return D


def _project_structure(M: np.ndarray) -> np.ndarray:
    M = (M + M.T) / 2
    np.fill_diagonal(M, 0.0)
    return np.clip(M, 0.0, None)


def _score(inst: EDMInstance, D_hat: np.ndarray, iterations: int, t0: float) -> CompletionResult:
    truth = inst.hidden_block(inst.D)
    approx = inst.hidden_block(D_hat)
    denom = np.linalg.norm(truth)
    rel = float(np.linalg.norm(approx - truth) / denom) if denom > 0 else 0.0
    return CompletionResult(D_hat, rel, iterations, time.perf_counter() - t0)


def rank_alternation(inst: EDMInstance, max_iters: int = 500, tol: float = 1e-8) -> CompletionResult:
    """Alternate rank-(d+2) spectral truncation with restoring the data.

    Uses the EDM rank property: an EDM of points in R^d has rank at most
    d + 2, regardless of the number of points.
    """
    t0 = time.perf_counter()
    rank = inst.embed_dim + 2
    D_hat = _init_fill(inst)
    iterations = 0
    for iterations in range(1, max_iters + 1):
        prev = D_hat
        U, s, Vt = np.linalg.svd(D_hat, full_matrices=False)
        D_hat = (U[:, :rank] * s[:rank]) @ Vt[:rank]
        D_hat[inst.mask] = inst.D[inst.mask]
        D_hat = _project_structure(D_hat)
        if np.linalg.norm(D_hat - prev) < tol * max(np.linalg.norm(prev), 1.0):
            break
    D_hat[inst.mask] = inst.D[inst.mask]
    return _score(inst, D_hat, iterations, t0)


def soft_impute(inst: EDMInstance, lam_shrink: float = 0.0, max_iters: int = 500, tol: float = 1e-8) -> CompletionResult:
    """Iterative SVD soft-thresholding, warm-started over a decreasing
    shrinkage grid ending at lam_shrink."""
    if lam_shrink < 0:
        raise ValueError("lam_shrink must be >= 0")
    t0 = time.perf_counter()
    observed = inst.mask
    D_hat = _init_fill(inst)
    s_max = np.linalg.svd(D_hat, compute_uv=False)[0]
    grid = [s_max * f for f in (0.3, 0.1, 0.03, 0.01, 0.003)]
    grid = [g for g in grid if g > lam_shrink] + [lam_shrink]
    total_iters = 0
    for lam in grid:
        for _ in range(max_iters // len(grid) + 1):
            total_iters += 1
            filled = np.where(observed, inst.D, D_hat)
            U, s, Vt = np.linalg.svd(filled, full_matrices=False)
            s = np.maximum(s - lam, 0.0)
            new = (U * s) @ Vt
            change = np.linalg.norm(new - D_hat)
            D_hat = new
            if change < tol * max(np.linalg.norm(D_hat), 1.0):
                break
    D_hat = _project_structure(D_hat)
    D_hat[observed] = inst.D[observed]
    return _score(inst, D_hat, total_iters, t0)


def _real_cubic_roots(k3: float, k2: float, k1: float, k0: float) -> np.ndarray:
    """Real roots of k3 t^3 + k2 t^2 + k1 t + k0, k3 != 0 (closed form).

    Equivalent to np.roots restricted to the real axis, but an order of
    magnitude faster, which matters inside the coordinate-descent loop.
    """
    b, c, d = k2 / k3, k1 / k3, k0 / k3
    shift = b / 3.0
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:  # one real root (Cardano)
        sq = np.sqrt(disc)
        s = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq)
        return np.array([s - shift])
    if p == 0.0:  # triple root
        return np.array([np.cbrt(-q) - shift])
    # three real roots (trigonometric form)
    r = np.sqrt(-p / 3.0)
    arg = np.clip(3.0 * q / (2.0 * p * r), -1.0, 1.0)
    phi = np.arccos(arg)
    ks = np.array([0.0, 1.0, 2.0])
    return 2.0 * r * np.cos(phi / 3.0 - 2.0 * np.pi * ks / 3.0) - shift


def _classical_mds(D: np.ndarray, d: int) -> np.ndarray:
    n = D.shape[0]
    J = np.eye(n) - np.ones((n, n)) / n
    G = -0.5 * J @ D @ J
    vals, vecs = np.linalg.eigh(G)
    top = np.argsort(vals)[::-1][:d]
    coords = vecs[:, top] * np.sqrt(np.clip(vals[top], 0.0, None))
    return coords


def alternating_descent(inst: EDMInstance, max_iters: int = 50, tol: float = 1e-8) -> CompletionResult:
    """Coordinate descent on explicit point estimates.

    Each sweep updates one coordinate of one point at a time, minimizing
    the squared misfit over observed entries exactly: the per-coordinate
    cost is quartic, so the minimizer is a root of its cubic derivative.
    """
    t0 = time.perf_counter()
    d = inst.embed_dim
    P = _classical_mds(_init_fill(inst), d)
    N = inst.size
    neighbors = [np.flatnonzero(inst.mask[i] & (np.arange(N) != i)) for i in range(N)]
    sweeps = 0
    for sweeps in range(1, max_iters + 1):
        moved = 0.0
        for i in range(N):
            nb = neighbors[i]
            if nb.size == 0:
                continue
            diffs = P[i] - P[nb]  # (k, d)
            targets = inst.D[i, nb]
            for k in range(d):
                a = P[nb, k]
                # residual with coordinate k removed
                c = targets - (np.sum(diffs**2, axis=1) - diffs[:, k] ** 2)
                # minimize sum_j ((t - a_j)^2 - c_j)^2 over t: cubic derivative
                # poly in t: 4 t^3 - 12 mean(a) t^2 ... assemble via coefficients
                k3 = 4.0 * nb.size
                k2 = -12.0 * np.sum(a)
                k1 = np.sum(12.0 * a**2 - 4.0 * c)
                k0 = np.sum(-4.0 * a**3 + 4.0 * a * c)
                real = _real_cubic_roots(k3, k2, k1, k0)
                costs = [np.sum(((t - a) ** 2 - c) ** 2) for t in real]
                t_best = real[int(np.argmin(costs))]
                moved += abs(t_best - P[i, k])
                diffs[:, k] = t_best - a
                P[i, k] = t_best
        if moved < tol * max(np.abs(P).sum(), 1.0):
            break
    D_hat = squared_distances(P, P)
    D_hat = _project_structure(D_hat)
    return _score(inst, D_hat, sweeps, t0)


ALGORITHMS = {
    "rank_alternation": rank_alternation,
    "alternating_descent": alternating_descent,
    "soft_impute": soft_impute,
}

NOT_INVERTIBLE = "not invertible"


@dataclass
class LeakageRow:
    dataset: str
    sampler: str
    m: int
    algorithm: str
    seed: int
    rel_error: float | str
    iterations: int
    wall_time: float


def leakage_report(
    dataset_name: str,
    X: np.ndarray,
    sampler: str,
    m_grid,
    algorithms=None,
    seeds=(0,),
    spec: KernelSpec | None = None,
    gamma: float = 1.0,
    per_landmark_gamma: bool = False,
) -> list[LeakageRow]:
    """Run the completion attack over a grid of landmark counts and seeds.

    Models the strongest adversary: exact kernel values, known embedding
    dimension, landmarks reproducible from the shared seed.  With the
    random-width countermeasure every cell reports 'not invertible'.
    """
    algorithms = list(algorithms or ALGORITHMS)
    rows: list[LeakageRow] = []
    X = np.asarray(X, dtype=np.float64)
    for seed_val in seeds:
        shared = SharedSeed(int(seed_val))
        for m in m_grid:
            if m == 0:
                for algo in algorithms:
                    rows.append(LeakageRow(dataset_name, sampler, 0, algo, seed_val, 1.0, 0, 0.0))
                continue
            if sampler == "P":
                lm = sample_landmarks("P", m, X, shared)
            elif sampler == "U":
                lm = sample_landmarks("U", m, X.shape[1], shared)
            else:
                lm = sample_landmarks("N", m, (X.mean(axis=0), X.std(axis=0)), shared)
            if per_landmark_gamma:
                from fedkrls.landmarks import random_widths

                run_spec = KernelSpec.per_landmark(random_widths(shared, m, gamma))
            else:
                run_spec = spec or KernelSpec.shared(gamma)
            leaked = rbf_block(X, lm.W, run_spec)
            try:
                d_xw = neg_log_to_distances(leaked, run_spec)
            except NotInvertibleError:
                for algo in algorithms:
                    rows.append(LeakageRow(dataset_name, sampler, m, algo, seed_val, NOT_INVERTIBLE, 0, 0.0))
                continue
            inst = assemble_edm(X, lm.W)
            # sanity: the leak reproduces the observed cross block
            assert np.allclose(d_xw, inst.D[: X.shape[0], X.shape[0]:], atol=1e-8)
            for algo in algorithms:
                res = ALGORITHMS[algo](inst)
                rows.append(
                    LeakageRow(dataset_name, sampler, m, algo, seed_val, res.rel_error, res.iterations, res.wall_time)
                )
    return rows


def write_leakage_csv(rows: list[LeakageRow], path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "sampler", "m", "algorithm", "seed", "rel_error", "iterations", "wall_time_s"])
        for r in rows:
            w.writerow([r.dataset, r.sampler, r.m, r.algorithm, r.seed, r.rel_error, r.iterations, f"{r.wall_time:.4f}"])
