"""Synchronized randomness and landmark generation.

Every party derives its random numbers from a pre-shared 64-bit seed and a
short stream label.  Streams use the Philox counter-based generator keyed
by SHA-256(seed, label), so regeneration is bit-identical on every party
and platform, and distinct labels give independent streams.  The exact
denoising in the federated protocol depends on this.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

PRNG_ALGORITHM = "philox4x64/sha256-keyed"  # recorded in run configs

Sampler = str  # one of "P", "U", "N"
SAMPLERS = ("P", "U", "N")


@dataclass(frozen=True)
class SharedSeed:
    """A pre-shared seed plus a purpose label namespacing the stream."""

    seed: int
    stream_label: str = ""

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    def derive(self, label: str) -> "SharedSeed":
        """Sub-stream for a purpose, e.g. derive('noise/h0')."""
        joined = f"{self.stream_label}/{label}" if self.stream_label else label
        return SharedSeed(self.seed, joined)

    def generator(self) -> np.random.Generator:
        """Fresh generator for this (seed, label) stream."""
        digest = hashlib.sha256(
            self.seed.to_bytes(8, "little") + self.stream_label.encode()
        ).digest()
        key = np.frombuffer(digest[:16], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class LandmarkSet:
    """The m-by-d landmark matrix W plus the recipe that produced it."""

    W: np.ndarray
    sampler: Sampler
    m: int
    seed: SharedSeed

    def __post_init__(self):
        W = np.asarray(self.W, dtype=np.float64)
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def d(self) -> int:
        return self.W.shape[1]


def sample_landmarks(sampler: Sampler, m: int, stats, seed: SharedSeed) -> LandmarkSet:
    """Generate the landmark matrix W with one of the three samplers.

    P: m distinct rows of the training matrix (classical Nystrom; needs the
       raw training rows, so it is a centralized benchmark baseline only).
       stats = the n-by-d training matrix.
    U: uniform in [0, 1]^d (matches the support of normalized data).
       stats = d, the feature count.
    N: per-feature normal with the training set's mean and std.
       stats = (mean vector, std vector).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    gen = seed.derive("landmarks").generator()
    if sampler == "P":
        X = np.asarray(stats, dtype=np.float64)
        if m > X.shape[0]:
            raise ValueError(f"sampler P: m={m} exceeds n={X.shape[0]} training rows")
        idx = gen.choice(X.shape[0], size=m, replace=False)
        W = X[idx]
    elif sampler == "U":
        d = int(stats)
        W = gen.random((m, d))
    elif sampler == "N":
        mean, std = stats
        mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64)
        if (std < 0).any():
            raise ValueError("sampler N: negative std")
        W = mean + std * gen.standard_normal((m, mean.shape[0]))
    else:
        raise ValueError(f"unknown sampler {sampler!r}; expected one of {SAMPLERS}")
    return LandmarkSet(W, sampler, m, seed)


def noise_stream(seed: SharedSeed, length: int) -> np.ndarray:
    """i.i.d. standard-normal masking noise, reproducible by every party."""
    if length < 0:
        raise ValueError("length must be >= 0")
    return seed.generator().standard_normal(length)


def permutation_stream(seed: SharedSeed, n: int) -> np.ndarray:
    """Shared random permutation used to shuffle labels before masking."""
    return seed.generator().permutation(n)


def random_widths(seed: SharedSeed, m: int, gamma: float, lo_factor: float = 0.5, hi_factor: float = 2.0) -> np.ndarray:
    """Per-landmark kernel widths drawn uniformly from [gamma/2, 2*gamma]."""
    gen = seed.derive("gamma").generator()
    return gen.uniform(lo_factor * gamma, hi_factor * gamma, size=m)
