"""Fuzzy c-means over instance representations and cluster-aware positive sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from sklearn.cluster import kmeans_plusplus

from .contrast import PositiveSets

DEFAULT_M = 1.5


class EmptyClusterError(ValueError):
    pass


@dataclass
class MembershipMatrix:
    p: np.ndarray
    centers: np.ndarray
    m: float = DEFAULT_M
    n_iter: int = 0
    objective_history: list = field(default_factory=list)

    @property
    def n_clusters(self) -> int:
        return self.p.shape[1]

    @property
    def degenerate(self) -> bool:
        """Some cluster wins no sample, e.g. the all-1/K fixed point."""
        wins = np.bincount(self.p.argmax(1), minlength=self.n_clusters)
        return bool((wins == 0).any())


def _sq_dists(z, centers):
    d2 = (z * z).sum(1)[:, None] - 2.0 * z @ centers.T + (centers * centers).sum(1)[None, :]
    return np.maximum(d2, 0.0)


def _sq_dists_exact(z, centers):
    return ((z[:, None, :] - centers[None, :, :]) ** 2).sum(-1)


def sq_distances(z, centers) -> np.ndarray:
    # the expanded form loses precision near zero; fall back when it matters
    if z.shape[0] * centers.shape[0] * z.shape[1] <= 2_000_000:
        return _sq_dists_exact(z, centers)
    return _sq_dists(z, centers)


def fcm_objective(z, p, centers, m: float = DEFAULT_M) -> float:
    return float(((p ** m) * sq_distances(z, centers)).sum())


def fcm_update_membership(z, centers, m: float = DEFAULT_M) -> np.ndarray:
    """Memberships proportional to ``d_ij ** (2 / (1 - m))``.

    A sample sitting exactly on a center goes crisply to the first such
    center (the limit of the formula).
    """
    z, centers = np.asarray(z, dtype=np.float64), np.asarray(centers, dtype=np.float64)
    if m <= 1:
        raise ValueError("fuzziness m must exceed 1")
    if centers.shape[0] < 2:
        raise ValueError("need at least 2 clusters")
    if not (np.isfinite(z).all() and np.isfinite(centers).all()):
        raise ValueError("non-finite inputs")
    d2 = sq_distances(z, centers)
    zero = d2 == 0.0
    with np.errstate(divide="ignore"):
        logw = np.log(d2) / (1.0 - m)
    hit = zero.any(axis=1)
    logw[hit] = 0.0
    logw -= logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    p = w / w.sum(axis=1, keepdims=True)
    if hit.any():
        first = np.argmax(zero[hit], axis=1)
        p[hit] = 0.0
        p[np.flatnonzero(hit), first] = 1.0
    return p


def fcm_update_centers(z, p, m: float = DEFAULT_M) -> np.ndarray:
    """Centers as means of ``z`` weighted by ``p ** m``."""
    w = np.asarray(p, dtype=np.float64) ** m
    mass = w.sum(axis=0)
    dead = np.flatnonzero(mass <= 0)
    if len(dead):
        raise EmptyClusterError(f"empty cluster(s): {dead.tolist()}")
    return (w.T @ np.asarray(z, dtype=np.float64)) / mass[:, None]


def _repair(z, p, m, centers):
    """Re-seed dead centers at the currently worst-fitted samples."""
    w = p ** m
    dead = np.flatnonzero(w.sum(axis=0) <= 0)
    alive = np.setdiff1d(np.arange(p.shape[1]), dead)
    new = centers.copy()
    new[alive] = (w[:, alive].T @ z) / w[:, alive].sum(axis=0)[:, None]
    fit = sq_distances(z, new[alive]).min(axis=1)
    for d in dead:
        worst = int(np.argmax(fit))
        new[d] = z[worst]
        fit[worst] = -1.0
    return new


def _fit_once(z, centers, m, tol, max_iter):
    history = []
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        p = fcm_update_membership(z, centers, m)
        try:
            new = fcm_update_centers(z, p, m)
        except EmptyClusterError:
            new = _repair(z, p, m, centers)
        history.append(fcm_objective(z, p, new, m))
        shift = np.abs(new - centers).max()
        centers = new
        if shift < tol:
            break
    p = fcm_update_membership(z, centers, m)
    return MembershipMatrix(p, centers, m, n_iter, history)


def fcm_fit(z, K: int, m: float = DEFAULT_M, tol: float = 1e-6, max_iter: int = 300,
            seed=0, init_centers=None, n_init: int = 1) -> MembershipMatrix:
    """Alternate membership and center updates until centers move less than ``tol``.

    Cold starts use k-means++ seeding; the run with the lowest final
    objective among ``n_init`` starts is kept. ``init_centers`` adds a
    warm-started run to that competition (``n_init=0`` keeps only the warm
    run), so a stale warm start that collapses onto a single center cannot
    win against a fresh seeding.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] < K:
        raise ValueError(f"need at least K={K} samples, got {z.shape[0]}")
    if K < 2:
        raise ValueError("K must be at least 2")
    best = None
    if init_centers is not None:
        res = _fit_once(z, np.array(init_centers, dtype=np.float64), m, tol, max_iter)
        best = (fcm_objective(z, res.p, res.centers, m), res)
    elif n_init < 1:
        raise ValueError("n_init must be >= 1 without init_centers")
    rng = np.random.default_rng(seed)
    for _ in range(n_init):
        centers, _ = kmeans_plusplus(z, K, random_state=int(rng.integers(2 ** 31 - 1)))
        res = _fit_once(z, centers, m, tol, max_iter)
        obj = fcm_objective(z, res.p, res.centers, m)
        if best is None or obj < best[0]:
            best = (obj, res)
    return best[1]


@dataclass
class Projection:
    """Affine map ``(z - mean) @ components.T`` onto leading principal axes.

    ``components=None`` is the identity (no centering either).
    """
    mean: np.ndarray | None = None
    components: np.ndarray | None = None

    @classmethod
    def fit(cls, z, dims: int) -> "Projection":
        z = np.asarray(z, dtype=np.float64)
        if dims <= 0 or dims >= z.shape[1]:
            return cls()
        mean = z.mean(axis=0)
        _, _, vt = np.linalg.svd(z - mean, full_matrices=False)
        vt = vt[:dims]
        # fix the sign so the largest-magnitude loading of each axis is positive
        flip = np.sign(vt[np.arange(dims), np.abs(vt).argmax(axis=1)])
        return cls(mean, vt * flip[:, None])

    @property
    def identity(self) -> bool:
        return self.components is None

    def __call__(self, z):
        if self.identity:
            return z
        if torch.is_tensor(z):
            mean = torch.as_tensor(self.mean, dtype=z.dtype, device=z.device)
            comp = torch.as_tensor(self.components, dtype=z.dtype, device=z.device)
            return (z - mean) @ comp.T
        return (np.asarray(z, dtype=np.float64) - self.mean) @ self.components.T

    def lift(self, y) -> np.ndarray:
        """Map projected points back into the full space (inside the subspace)."""
        if self.identity:
            return np.asarray(y, dtype=np.float64)
        return self.mean + np.asarray(y, dtype=np.float64) @ self.components


CLUSTER_LOSS_SCALES = ("sum", "n", "scatter")


def cluster_loss(z, p, centers, scale: str = "n", power: float = 1.0):
    """``sum_ij p_ij**power * ||z_i - mu_j||^2`` with a choice of scaling.

    ``scale="sum"`` is the raw double sum, ``"n"`` divides by the number of
    rows and ``"scatter"`` further divides by the rows' mean squared
    distance to their own mean. The last is invariant to rescaling ``z``
    (with the centers), so it cannot be lowered by shrinking the
    representation. ``p`` and ``centers`` are constants; gradients flow to
    ``z`` only.
    """
    if scale not in CLUSTER_LOSS_SCALES:
        raise ValueError(f"scale must be one of {CLUSTER_LOSS_SCALES}")
    if not torch.is_tensor(z):
        z = torch.as_tensor(np.asarray(z, dtype=np.float64))
    p = torch.as_tensor(np.asarray(p), dtype=z.dtype, device=z.device)
    mu = torch.as_tensor(np.asarray(centers), dtype=z.dtype, device=z.device)
    if p.ndim == 1:
        p = p[:, None]
    if mu.ndim == 1:
        mu = mu[None, :]
    d2 = ((z[:, None, :] - mu[None, :, :]) ** 2).sum(-1)
    loss = ((p ** power) * d2).sum()
    if scale == "sum":
        return loss
    loss = loss / z.shape[0]
    if scale == "scatter":
        scatter = ((z - z.mean(0)) ** 2).sum(1).mean()
        if z.shape[0] < 2 or float(scatter.detach()) == 0.0:
            raise ValueError("scatter scaling needs at least two distinct rows")
        loss = loss / scatter
    return loss


@dataclass
class ClusterAwareSets:
    p_max: np.ndarray
    assign: np.ndarray
    n_cap: int
    xi: np.ndarray
    sigma: np.ndarray
    sets: list

    @property
    def total(self) -> int:
        return int(sum(len(s) for s in self.sets))

    def aware_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.p_max), dtype=bool)
        for s in self.sets:
            mask[s] = True
        return mask


def compute_cluster_aware_sets(p, r: float = 0.5, theta: float = 0.95) -> ClusterAwareSets:
    """High-confidence members per cluster, capped in number and thresholded.

    For each cluster the cap is ``floor(r * N / K)``; ``xi_k`` is the cap-th
    largest max-membership among its members (the smallest one if the
    cluster is smaller than the cap, 1 if empty or the cap is 0), and
    ``sigma_k = max(xi_k, theta)``. Ties at the cap are resolved by sample
    index so no set exceeds the cap.
    """
    p = np.asarray(p, dtype=np.float64)
    N, K = p.shape
    p_max = p.max(axis=1)
    assign = p.argmax(axis=1)
    n_cap = math.floor(r * N / K)
    xi = np.ones(K)
    sigma = np.empty(K)
    sets = []
    for k in range(K):
        members = np.flatnonzero(assign == k)
        # descending by value, ascending by index among ties
        ranked = members[np.lexsort((members, -p_max[members]))]
        if n_cap > 0 and len(ranked):
            xi[k] = p_max[ranked[min(n_cap, len(ranked)) - 1]]
        sigma[k] = max(xi[k], theta)
        top = ranked[:n_cap]
        sets.append(np.sort(top[p_max[top] >= sigma[k]]))
    return ClusterAwareSets(p_max, assign, n_cap, xi, sigma, sets)


def argmax_sets(p) -> ClusterAwareSets:
    """Every sample admitted to its argmax cluster; no cap, no threshold."""
    p = np.asarray(p, dtype=np.float64)
    N, K = p.shape
    assign = p.argmax(axis=1)
    sets = [np.flatnonzero(assign == k) for k in range(K)]
    return ClusterAwareSets(p.max(axis=1), assign, N, np.zeros(K), np.zeros(K), sets)


def batch_positive_sets(sets: ClusterAwareSets, batch_indices) -> PositiveSets:
    """N+(i) = {i} plus batch members of i's set when i itself is in that set."""
    idx = np.asarray(batch_indices)
    aware = sets.aware_mask()[idx]
    c = sets.assign[idx]
    pos = aware[:, None] & aware[None, :] & (c[:, None] == c[None, :])
    np.fill_diagonal(pos, True)
    return PositiveSets(pos)


def export_memberships(p, path) -> None:
    p = np.asarray(p)
    header = ",".join(f"cluster{k}" for k in range(p.shape[1]))
    np.savetxt(Path(path), p, fmt="%.6f", delimiter=",", header=header, comments="")


def export_aware_sets(sets: ClusterAwareSets, path) -> None:
    with Path(path).open("w") as fh:
        fh.write("cluster,index,p_max\n")
        for k, members in enumerate(sets.sets):
            for i in members:
                fh.write(f"{k},{int(i)},{sets.p_max[i]:.6f}\n")
