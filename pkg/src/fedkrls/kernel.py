"""RBF kernel blocks and their feature-wise Hadamard composition.

The Gaussian kernel factorizes over features, so each feature provider can
compute a kernel block on its own feature slice and the full n-by-m kernel
is recovered as the element-wise product of the per-provider blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class KernelError(ValueError):
    pass


class NotInvertibleError(KernelError):
    """Raised when distances cannot be recovered from kernel values.

    With one random width per landmark there is no single factor the
    adversary can divide out of -log(K), which is exactly the point of
    the random-width countermeasure.
    """


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel widths: one shared gamma, or one gamma per landmark.

    Widths are in inverse squared feature units: K[i, j] =
    exp(-gamma_j * ||x_i - w_j||^2), with gamma_j == gamma in shared mode.
    """

    gamma: float | None = None
    gammas: tuple[float, ...] | None = None

    def __post_init__(self):
        if (self.gamma is None) == (self.gammas is None):
            raise KernelError("exactly one of gamma / gammas must be set")
        widths = (self.gamma,) if self.gammas is None else self.gammas
        for g in widths:
            if not np.isfinite(g) or g <= 0:
                raise KernelError(f"kernel widths must be positive and finite, got {g}")

    @classmethod
    def shared(cls, gamma: float) -> "KernelSpec":
        return cls(gamma=float(gamma))

    @classmethod
    def per_landmark(cls, gammas) -> "KernelSpec":
        return cls(gammas=tuple(float(g) for g in gammas))

    @property
    def is_shared(self) -> bool:
        return self.gamma is not None

    def width_row(self, m: int) -> np.ndarray:
        """Widths as a length-m row, one entry per landmark column."""
        if self.is_shared:
            return np.full(m, self.gamma)
        if len(self.gammas) != m:
            raise KernelError(f"spec has {len(self.gammas)} widths but m={m} landmarks")
        return np.asarray(self.gammas)


@dataclass(frozen=True)
class KernelBlock:
    """An n-by-m slab of kernel values restricted to a feature subset."""

    values: np.ndarray
    feature_subset: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise KernelError(f"kernel block must be 2-d, got shape {v.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _check_inputs(X_sub: np.ndarray, W_sub: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # contiguous inputs pin the summation order, so every party computing the
    # same block from differently laid-out slices gets bit-identical values
    X_sub = np.ascontiguousarray(X_sub, dtype=np.float64)
    W_sub = np.ascontiguousarray(W_sub, dtype=np.float64)
    if X_sub.ndim != 2 or W_sub.ndim != 2:
        raise KernelError("inputs must be 2-d matrices")
    if X_sub.shape[1] != W_sub.shape[1]:
        raise KernelError(
            f"feature-count mismatch: samples have {X_sub.shape[1]}, landmarks {W_sub.shape[1]}"
        )
    if not (np.isfinite(X_sub).all() and np.isfinite(W_sub).all()):
        raise KernelError("non-finite entries in kernel inputs")
    return X_sub, W_sub


def rbf_block(X_sub, W_sub, spec: KernelSpec, feature_subset=None) -> KernelBlock:
    """Gaussian kernel between sample rows and landmark rows on a feature slice.

    Squared distances are accumulated directly as sum((x - w)^2); the
    norm-expansion shortcut cancels catastrophically near zero distance,
    where the leakage bench needs entries to be exact.
    """
    X_sub, W_sub = _check_inputs(X_sub, W_sub)
    if feature_subset is None:
        feature_subset = tuple(range(X_sub.shape[1]))
    diff = X_sub[:, None, :] - W_sub[None, :, :]
    sq_dist = np.einsum("ijk,ijk->ij", diff, diff)
    widths = spec.width_row(W_sub.shape[0])
    return KernelBlock(np.exp(-sq_dist * widths[None, :]), tuple(feature_subset))


def hadamard_compose(blocks: list[KernelBlock]) -> KernelBlock:
    """Element-wise product of kernel blocks over disjoint feature subsets.

    For a shared width this reproduces the monolithic kernel over the union
    of the subsets (multiplicative separability of the RBF kernel).
    """
    if not blocks:
        raise KernelError("no blocks to compose")
    shape = blocks[0].shape
    seen: set[int] = set()
    values = np.ones(shape)
    subset: list[int] = []
    for b in blocks:
        if b.shape != shape:
            raise KernelError(f"block shape {b.shape} != {shape}")
        overlap = seen.intersection(b.feature_subset)
        if overlap:
            raise KernelError(f"overlapping feature subsets: {sorted(overlap)}")
        seen.update(b.feature_subset)
        subset.extend(b.feature_subset)
        values = values * b.values
    return KernelBlock(values, tuple(sorted(subset)))


def neg_log_to_distances(block: KernelBlock, spec: KernelSpec) -> np.ndarray:
    """Recover squared distances as -log(K)/gamma (the adversary's move).

    Exact only with a shared width; per-landmark widths raise
    NotInvertibleError.
    """
    if not spec.is_shared:
        raise NotInvertibleError("per-landmark widths: -log(K) is not a distance matrix")
    return -np.log(block.values) / spec.gamma
