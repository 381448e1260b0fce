"""Cluster-aware Universum hard negatives and the time/instance contrastive losses.

All representation arguments are tensors of shape ``(B, L, D)`` already
restricted to the shared overlap region, so index ``t`` means the same
timestamp in every view. Views are named ``"a"``, ``"b"``, ``"c"``; a loss
pair ``"ab"`` anchors on ``a`` and takes its positive from ``b``.

Similarities are raw inner products (no temperature, no normalization);
every log of a sum of exponentials goes through ``torch.logsumexp``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

PAIRS = ("ab", "bc")


@dataclass
class PositiveSets:
    """Boolean ``(B, B)`` matrix: ``pos[i, k]`` iff ``k`` is in N+(i).

    The diagonal is always set; N-(i) is the complement.
    """

    pos: np.ndarray

    def __post_init__(self):
        self.pos = np.asarray(self.pos, dtype=bool)
        if self.pos.ndim != 2 or self.pos.shape[0] != self.pos.shape[1]:
            raise ValueError("positive-set matrix must be square")
        if not self.pos.diagonal().all():
            raise ValueError("every sample must be its own positive")

    @classmethod
    def singletons(cls, batch_size: int) -> "PositiveSets":
        return cls(np.eye(batch_size, dtype=bool))

    @property
    def neg(self) -> np.ndarray:
        return ~self.pos

    def __len__(self):
        return self.pos.shape[0]

    def permuted(self, perm) -> "PositiveSets":
        perm = np.asarray(perm)
        return PositiveSets(self.pos[np.ix_(perm, perm)])


def _mixing_coefficient(lam_max: float, rng) -> float:
    if not 0 < lam_max <= 0.5:
        raise ValueError(f"mixing upper bound must be in (0, 0.5], got {lam_max}")
    # 1 - U with U in [0, 1) lands in (0, 1]
    return float(lam_max * (1.0 - rng.random()))


def _gather_time(z, idx):
    """``out[i, t] = z[i, idx[i, t]]``."""
    return torch.gather(z, 1, idx.unsqueeze(-1).expand(-1, -1, z.shape[-1]))


def _gather_batch(z, idx):
    """``out[i, t] = z[idx[i, t], t]``."""
    return torch.gather(z, 0, idx.unsqueeze(-1).expand(-1, -1, z.shape[-1]))


@dataclass
class HardNegativesTime:
    """Time-level mixes ``h[i,t] = lam*z[i,t] + (1-lam)*z[i,t']`` per view."""

    ha: torch.Tensor | None
    hb: torch.Tensor | None
    hc: torch.Tensor | None
    lam: float
    t_prime: np.ndarray

    def view(self, v: str):
        return getattr(self, "h" + v)


def gen_time_hard_negatives(za, zb, zc, lambda1_max: float = 0.2, rng=None,
                            lam: float | None = None, t_prime=None) -> HardNegativesTime:
    """Mix each timestamp with another timestamp of the same series.

    One ``lam`` per call and one ``t'`` per ``(i, t)``, shared across the
    three views. ``lam`` and ``t_prime`` may be fixed by the caller.
    Views given as ``None`` are skipped.
    """
    rng = np.random.default_rng(rng)
    ref = next(z for z in (za, zb, zc) if z is not None)
    B, L = ref.shape[:2]
    if L < 2:
        raise ValueError("time-level hard negatives need an overlap of at least 2 steps")
    if lam is None:
        lam = _mixing_coefficient(lambda1_max, rng)
    elif not 0 < lam <= 0.5:
        raise ValueError("lam must be in (0, 0.5]")
    if t_prime is None:
        s = rng.integers(0, L - 1, size=(B, L))
        t_prime = s + (s >= np.arange(L)[None, :])
    t_prime = np.asarray(t_prime)
    if (t_prime == np.arange(L)[None, :]).any():
        raise ValueError("t' must differ from t")
    idx = torch.as_tensor(t_prime, device=ref.device)

    def mix(z):
        return None if z is None else lam * z + (1 - lam) * _gather_time(z, idx)

    return HardNegativesTime(mix(za), mix(zb), mix(zc), lam, t_prime)


@dataclass
class HardNegativesInstance:
    """Instance-level Universum mixes built from same-cluster positives.

    For anchor ``i`` at timestamp ``t`` a positive ``k = k_idx[i, t]`` is
    drawn from N+(i). The mix against negative ``j`` is
    ``lam * z[k, t] + (1 - lam) * z[j, t]``; the losses use that mix for
    every ``j`` in N-(i). ``ha/hb/hc`` hold one concrete sample per
    ``(i, t)`` using the drawn partner ``j_idx[i, t]``.
    ``sources`` are the per-view tensors the mixes were built from.
    """

    ha: torch.Tensor | None
    hb: torch.Tensor | None
    hc: torch.Tensor | None
    lam: float
    k_idx: np.ndarray
    j_idx: np.ndarray
    sources: dict

    def view(self, v: str):
        return getattr(self, "h" + v)

    def pairwise(self, v: str) -> torch.Tensor:
        """Materialize ``h[i, j, t]`` for all anchors ``i`` and partners ``j``."""
        z = self.sources[v]
        zk = _gather_batch(z, torch.as_tensor(self.k_idx, device=z.device))  # B x L x D
        return self.lam * zk[:, None] + (1 - self.lam) * z[None, :]

    @classmethod
    def from_indices(cls, za, zb, zc, k_idx, j_idx, lam: float) -> "HardNegativesInstance":
        k_idx, j_idx = np.asarray(k_idx), np.asarray(j_idx)
        sources = {v: z for v, z in zip("abc", (za, zb, zc)) if z is not None}

        ref = next(iter(sources.values()))
        k = torch.as_tensor(k_idx, device=ref.device)
        j = torch.as_tensor(j_idx, device=ref.device)

        def mix(z):
            return None if z is None else lam * _gather_batch(z, k) + (1 - lam) * _gather_batch(z, j)

        return cls(mix(za), mix(zb), mix(zc), lam, k_idx, j_idx, sources)


def gen_instance_hard_negatives(za, zb, zc, pos_sets: PositiveSets, lambda2_max: float = 0.2,
                                rng=None, lam: float | None = None) -> HardNegativesInstance:
    """Draw ``k`` uniformly from N+(i) and ``j`` uniformly from N-(i) per ``(i, t)``.

    With N+(i) = {i} this is the plain mixed universe ``lam*z_i + (1-lam)*z_j``.
    If N-(i) is empty (whole batch positive) ``j`` falls back to ``i``; such
    anchors contribute nothing to the instance loss anyway.
    """
    rng = np.random.default_rng(rng)
    ref = next(z for z in (za, zb, zc) if z is not None)
    B, L = ref.shape[:2]
    if B < 2:
        raise ValueError("instance-level hard negatives need a batch of at least 2")
    if len(pos_sets) != B:
        raise ValueError("positive sets do not match the batch")
    if lam is None:
        lam = _mixing_coefficient(lambda2_max, rng)
    elif not 0 < lam <= 0.5:
        raise ValueError("lam must be in (0, 0.5]")
    u = rng.random((2, B, L))
    k_idx = _uniform_member(pos_sets.pos, u[0])
    has_neg = pos_sets.neg.any(1)
    j_idx = np.where(has_neg[:, None], _uniform_member(pos_sets.neg, u[1]), np.arange(B)[:, None])
    return HardNegativesInstance.from_indices(za, zb, zc, k_idx, j_idx, lam)


def _uniform_member(mask, u):
    """Column of the ``floor(u * count)``-th True entry of each row of ``mask``.

    ``u`` is ``rows x L`` uniform on [0, 1); rows without a True entry give 0.
    """
    count = mask.sum(1)[:, None]
    rank = np.minimum(np.floor(u * count), np.maximum(count - 1, 0)).astype(np.int64)
    cum = np.cumsum(mask, axis=1)
    return (cum[:, None, :] > rank[:, :, None]).argmax(-1)


def _views(za, zb, zc):
    return {"a": za, "b": zb, "c": zc}


def _check_finite(*zs):
    for z in zs:
        if z is not None and not torch.isfinite(z).all():
            raise ValueError("non-finite representations")


def time_pair_logits(anchor, positive, h_anchor=None, h_positive=None):
    """Denominator logits for one view pair, shape ``(B, L, F*L)``.

    Families, in order: cross-view ``z_x[t].z_y[t']``, same-view
    ``z_x[t].z_x[t']`` (``t' = t`` masked to ``-inf``), then the two
    hard-negative streams when given. Returns ``(logits, positive_logit)``.
    """
    L = anchor.shape[1]
    cross = anchor @ positive.transpose(1, 2)
    same = anchor @ anchor.transpose(1, 2)
    eye = torch.eye(L, dtype=torch.bool, device=anchor.device)
    same = same.masked_fill(eye, float("-inf"))
    families = [cross, same]
    if h_anchor is not None:
        families += [anchor @ h_anchor.transpose(1, 2), anchor @ h_positive.transpose(1, 2)]
    return torch.cat(families, dim=-1), torch.diagonal(cross, dim1=1, dim2=2)


def time_contrastive_loss(za, zb, zc, hn: HardNegativesTime | None = None,
                          pairs=PAIRS) -> torch.Tensor:
    """Mean over ``(i, t)`` of the summed per-pair time-level losses.

    ``hn=None`` drops the hard-negative terms from every denominator.
    """
    views = _views(za, zb, zc)
    _check_finite(*(views[v] for p in pairs for v in p))
    total = 0.0
    for x, y in pairs:
        hx = hy = None
        if hn is not None:
            hx, hy = hn.view(x), hn.view(y)
        logits, pos = time_pair_logits(views[x], views[y], hx, hy)
        total = total + (torch.logsumexp(logits, dim=-1) - pos).mean()
    return total


def instance_pair_terms(anchor, positive, pos_sets: PositiveSets,
                        hn: HardNegativesInstance | None = None, x: str = "a", y: str = "b",
                        positives_in_denominator: bool = False):
    """Per-``(t, i)`` loss terms for one view pair and the mask of valid anchors.

    Numerator: ``sum_{k in N+(i)} exp(z_x[i].z_y[k])``. Denominator, over
    ``j`` in N-(i): same-view, cross-view and (if ``hn``) the two Universum
    streams built from ``i``'s drawn positive and ``j``.
    """
    za = anchor.transpose(0, 1)   # L x B x D
    zb = positive.transpose(0, 1)
    s_xx = za @ za.transpose(1, 2)  # L x B x B, [t, i, j]
    s_xy = za @ zb.transpose(1, 2)
    pos = torch.as_tensor(pos_sets.pos, device=anchor.device)
    neg = ~pos
    ninf = float("-inf")
    families = [s_xx.masked_fill(~neg, ninf), s_xy.masked_fill(~neg, ninf)]
    if hn is not None:
        k = torch.as_tensor(hn.k_idx, device=anchor.device).T  # L x B
        for v in (x, y):
            src = hn.sources[v].transpose(0, 1)                 # L x B x D
            s_src = za @ src.transpose(1, 2)                    # [t, i, j] = z_x[i].src[j]
            s_k = torch.gather(s_src, 2, k.unsqueeze(-1))       # z_x[i].src[k(i,t)]
            mixed = hn.lam * s_k + (1 - hn.lam) * s_src
            families.append(mixed.masked_fill(~neg, ninf))
    if positives_in_denominator:
        families.append(s_xy.masked_fill(~pos, ninf))
    num = torch.logsumexp(s_xy.masked_fill(~pos, ninf), dim=-1)
    valid = neg.any(dim=1).expand_as(num)
    # all--inf rows would give NaN gradients through logsumexp
    den_logits = torch.cat(families, dim=-1).masked_fill(~valid.unsqueeze(-1), 0.0)
    den = torch.logsumexp(den_logits, dim=-1)
    terms = torch.where(valid, den - num, torch.zeros_like(num))
    return terms, valid


def instance_contrastive_loss(za, zb, zc, hn: HardNegativesInstance | None,
                              pos_sets: PositiveSets, pairs=PAIRS,
                              positives_in_denominator: bool = False) -> torch.Tensor:
    """Mean over ``(i, t)`` of the summed per-pair instance-level losses.

    Anchors whose negative set is empty are left out of the mean.
    """
    views = _views(za, zb, zc)
    ref = views[pairs[0][0]]
    _check_finite(*(views[v] for p in pairs for v in p))
    if ref.shape[0] < 2:
        raise ValueError("instance loss needs a batch of at least 2")
    summed, valid = 0.0, None
    for x, y in pairs:
        terms, valid = instance_pair_terms(views[x], views[y], pos_sets, hn, x, y,
                                           positives_in_denominator)
        summed = summed + terms
    n_valid = valid.sum()
    if n_valid == 0:
        return ref.sum() * 0.0
    return summed.sum() / n_valid


def total_contrastive_loss(time_loss, inst_loss):
    return time_loss + inst_loss
