"""Three-view cropping augmentation.

Given crop boundaries ``m1 < n1 <= m2 <= n2`` (0-based, half-open) the
views are::

    xb = x[m1:m2]                  # left context + overlap
    xc = x[n1:n2]                  # overlap + right context
    xa = perturb(x[n1:m2])         # the overlap itself, jittered

so ``(a, b)`` is a subseries/transformation pair and ``(b, c)`` a
contextual pair, all three sharing the overlap ``[n1, m2)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CropTriplet:
    m1: int
    n1: int
    m2: int
    n2: int

    @property
    def overlap(self) -> int:
        return self.m2 - self.n1

    def is_valid(self, T: int, min_overlap: int = 1) -> bool:
        return 0 <= self.m1 < self.n1 <= self.m2 <= self.n2 <= T and self.overlap >= min_overlap


@dataclass(frozen=True)
class OverlapMap:
    """Where the shared region starts inside each view, and its length."""

    a_start: int
    b_start: int
    c_start: int
    length: int

    @classmethod
    def from_crop(cls, crop: CropTriplet) -> "OverlapMap":
        return cls(a_start=0, b_start=crop.n1 - crop.m1, c_start=0, length=crop.overlap)

    def slice(self, view: str) -> slice:
        start = {"a": self.a_start, "b": self.b_start, "c": self.c_start}[view]
        return slice(start, start + self.length)


@dataclass
class ViewTriple:
    xa: np.ndarray
    xb: np.ndarray
    xc: np.ndarray
    crop: CropTriplet
    overlap: OverlapMap

    def on_overlap(self, view: str) -> np.ndarray:
        return getattr(self, "x" + view)[:, self.overlap.slice(view)]


def sample_crop_boundaries(T: int, min_overlap: int = 1, rng=None) -> CropTriplet:
    """Draw a crop triplet uniformly over all feasible ones.

    A triplet is fixed by the overlap ``[n1, m2)`` plus ``m1 < n1`` and
    ``n2 >= m2``, so ``(n1, m2)`` carries weight ``n1 * (T - m2 + 1)``.
    ``n1`` is drawn from its marginal, then ``m2``, then both outer ends.
    """
    if min_overlap < 1:
        raise ValueError("min_overlap must be >= 1")
    # T = min_overlap + 1 admits a single degenerate triplet; require one spare step
    if T < min_overlap + 2:
        raise ValueError(f"T={T} too short for min_overlap={min_overlap}")
    rng = np.random.default_rng(rng)
    n1_all = np.arange(1, T - min_overlap + 1)
    k = T - n1_all - min_overlap + 1  # admissible m2 values per n1
    cdf = np.cumsum(n1_all * k * (k + 1) // 2)
    u = rng.random(4)
    n1 = int(n1_all[np.searchsorted(cdf, u[0] * cdf[-1], side="right")])
    # given n1, m2 = T - j + 1 for j = 1..k with weight j
    j = np.arange(1, T - n1 - min_overlap + 2)
    cdf = np.cumsum(j)
    m2 = T + 1 - int(j[np.searchsorted(cdf, u[1] * cdf[-1], side="right")])
    m1 = int(u[2] * n1)
    n2 = m2 + int(u[3] * (T - m2 + 1))
    return CropTriplet(m1, n1, m2, n2)


def perturb(segment: np.ndarray, sigma: float = 0.1, rng=None) -> np.ndarray:
    """Additive Gaussian jitter with standard deviation ``sigma``."""
    segment = np.asarray(segment)
    if sigma == 0:
        return segment.copy()
    rng = np.random.default_rng(rng)
    return segment + sigma * rng.standard_normal(segment.shape)


def make_views(batch: np.ndarray, crop: CropTriplet, sigma: float = 0.1, rng=None) -> ViewTriple:
    batch = np.asarray(batch)
    if batch.ndim == 1:
        batch = batch[None, :]
    if not crop.is_valid(batch.shape[1]):
        raise ValueError(f"crop {crop} does not fit series of length {batch.shape[1]}")
    xa = perturb(batch[:, crop.n1:crop.m2], sigma, rng)
    xb = batch[:, crop.m1:crop.m2].copy()
    xc = batch[:, crop.n1:crop.n2].copy()
    return ViewTriple(xa, xb, xc, crop, OverlapMap.from_crop(crop))
