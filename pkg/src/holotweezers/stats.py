"""Small statistics helpers: keyed random substreams and binomial intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import InvalidParameterError

# Stream tags keep independent uses of one user seed from sharing draws.
STREAM_ENSEMBLE = 0
STREAM_BOOTSTRAP = 1
STREAM_NOISE = 2
STREAM_HOLOGRAM = 3
STREAM_MODEL = 4


def substream(seed: int, *key: int) -> np.random.Generator:
    """Generator keyed by ``(seed, *key)``; independent of creation order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def keyed_normals(seed: int, n: int, dim: int, stream: int = STREAM_ENSEMBLE, start: int = 0) -> np.ndarray:
    """``(n, dim)`` standard normals; row ``i`` depends only on ``(seed, stream, start + i)``."""
    out = np.empty((n, dim))
    for i in range(n):
        out[i] = substream(seed, stream, start + i).standard_normal(dim)
    return out


def wilson_interval(successes: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    if trials <= 0:
        raise ValueError("trials must be positive")
    z = norm.ppf(0.5 + confidence / 2)
    phat = successes / trials
    denom = 1 + z * z / trials
    centre = (phat + z * z / (2 * trials)) / denom
    half = z * math.sqrt(phat * (1 - phat) / trials + z * z / (4 * trials * trials)) / denom
    # clamp to keep the interval containing phat despite rounding at 0 and 1
    return min(max(centre - half, 0.0), phat), max(min(centre + half, 1.0), phat)


@dataclass(frozen=True)
class SurvivalResult:
    n_trials: int
    n_survived: int

    def __post_init__(self):
        if self.n_trials < 1 or not 0 <= self.n_survived <= self.n_trials:
            raise InvalidParameterError(f"need 0 <= n_survived <= n_trials, n_trials >= 1 "
                                        f"(got {self.n_survived}/{self.n_trials})")

    @property
    def probability(self) -> float:
        return self.n_survived / self.n_trials

    @property
    def wilson_interval(self) -> tuple[float, float]:
        return wilson_interval(self.n_survived, self.n_trials)

    @property
    def stderr(self) -> float:
        p = self.probability
        return math.sqrt(p * (1 - p) / self.n_trials)


def count_inversions(values, increasing=False) -> int:
    """Adjacent pairs that violate monotone non-increasing (or non-decreasing) order."""
    v = np.asarray(values, dtype=float)
    d = np.diff(v)
    return int(np.sum(d < 0)) if increasing else int(np.sum(d > 0))
