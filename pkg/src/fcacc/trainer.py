"""Two-stage training: cluster-agnostic contrastive pretraining, then joint
optimization of the contrastive and fuzzy clustering objectives."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from functools import partial
from pathlib import Path

import numpy as np
import torch

from . import contrast
from .augment import make_views, sample_crop_boundaries
from .dataio import Dataset
from .encoder import EncoderConfig, encode, init_encoder, instance_representations, pool_instance
from .evaluation import hard_assign, nmi, rand_index
from .fuzzy import (CLUSTER_LOSS_SCALES, MembershipMatrix, Projection, argmax_sets,
                    batch_positive_sets, cluster_loss, compute_cluster_aware_sets, fcm_fit)

log = logging.getLogger(__name__)

VARIANTS = ("full", "no_three_view", "no_hard_negatives", "no_cluster_pairs",
            "no_cluster_awareness")


@dataclass
class TrainConfig:
    alpha: float = 0.2
    r: float = 0.5
    theta: float = 0.95
    lambda1_max: float = 0.2
    lambda2_max: float = 0.2
    m: float = 1.5
    epochs_pretrain: int = 100
    epochs_joint: int = 100
    batch_size: int = 16
    learning_rate: float = 1e-3
    weight_decay: float = 0.01
    dropout: float = 0.1
    seed: int = 0
    sigma_perturb: float = 0.1
    hidden_dims: int = 64
    output_dims: int = 320
    n_residual_blocks: int = 10
    min_overlap: int = 2
    crop_resample: str = "batch"
    variant: str = "full"
    fcm_tol: float = 1e-5
    fcm_max_iter: int = 300
    fcm_n_init: int = 5
    fcm_cold_restarts: bool = False
    cluster_dims: int = 10
    cluster_loss_scale: str = "scatter"
    cluster_loss_power: float = 1.0
    detach_hard_negatives: bool = False
    positives_in_denominator: bool = True
    track_metrics: bool = True
    dtype: str = "float32"

    def validate(self) -> "TrainConfig":
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if not 0 <= self.r <= 1:
            raise ValueError("r must be in [0,1]")
        if not 0 <= self.theta <= 1:
            raise ValueError("theta must be in [0,1]")
        for key in ("lambda1_max", "lambda2_max"):
            if not 0 < getattr(self, key) <= 0.5:
                raise ValueError(f"{key} must be in (0, 0.5]")
        if self.cluster_dims < 0:
            raise ValueError("cluster_dims must be >= 0")
        if self.m <= 1:
            raise ValueError("m must exceed 1")
        if self.epochs_pretrain < 0 or self.epochs_joint < 0:
            raise ValueError("epoch counts must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.sigma_perturb < 0:
            raise ValueError("sigma must be >= 0")
        if self.cluster_loss_scale not in CLUSTER_LOSS_SCALES:
            raise ValueError(f"cluster_loss_scale must be one of {CLUSTER_LOSS_SCALES}")
        if self.crop_resample not in ("batch", "epoch"):
            raise ValueError("crop_resample must be 'batch' or 'epoch'")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; choose from {VARIANTS}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        return self

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(hidden_dims=self.hidden_dims, output_dims=self.output_dims,
                             n_residual_blocks=self.n_residual_blocks, dropout=self.dropout)

    @property
    def torch_dtype(self):
        return getattr(torch, self.dtype)

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    @classmethod
    def coerce(cls, values: dict) -> dict:
        """Convert string values to the field types; unknown keys raise."""
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in values.items():
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            kind = types[key]
            if not isinstance(raw, str):
                out[key] = raw
            elif kind == "bool":
                if raw.lower() not in ("true", "false", "1", "0"):
                    raise ValueError(f"{key}: expected a boolean, got {raw!r}")
                out[key] = raw.lower() in ("true", "1")
            elif kind == "int":
                out[key] = int(raw)
            elif kind == "float":
                out[key] = float(raw)
            else:
                out[key] = raw
        return out

    @classmethod
    def from_text(cls, text: str) -> "TrainConfig":
        values = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
        return cls(**cls.coerce(values))


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    contrast_loss: float
    cluster_loss: float
    total_loss: float
    nmi: float
    ri: float
    aware_count: int


HISTORY_HEADER = [f.name for f in fields(EpochRecord)]


class TrainHistory:
    def __init__(self, records=None):
        self.records: list[EpochRecord] = list(records or [])

    def append(self, record: EpochRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    def column(self, key: str, stage: str | None = None) -> np.ndarray:
        return np.array([getattr(r, key) for r in self.records if stage in (None, r.stage)])

    def extend(self, other: "TrainHistory") -> "TrainHistory":
        return TrainHistory(self.records + other.records)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_HEADER)
            for r in self.records:
                w.writerow([r.epoch, r.stage] + [f"{getattr(r, k):.6g}" for k in HISTORY_HEADER[2:-1]]
                           + [r.aware_count])
        return path

    @classmethod
    def from_csv(cls, path) -> "TrainHistory":
        with Path(path).open() as fh:
            rows = list(csv.DictReader(fh))
        return cls([EpochRecord(int(r["epoch"]), r["stage"], float(r["contrast_loss"]),
                                float(r["cluster_loss"]), float(r["total_loss"]), float(r["nmi"]),
                                float(r["ri"]), int(r["aware_count"])) for r in rows])


def total_loss(contrastive, cluster, alpha: float):
    return contrastive + alpha * cluster


class Trainer:
    """Owns the encoder and optimizer along with the random streams and fuzzy partition.

    ``pretrain_epoch`` and ``joint_epoch`` each append one history record.
    Within a joint epoch the memberships and centers are frozen; they are
    refit (warm-started) after the epoch's optimizer steps.
    """

    def __init__(self, data: Dataset, cfg: TrainConfig, encoder=None):
        self.cfg = cfg.validate()
        self.data = data
        self.K = data.n_classes
        if self.K < 2:
            raise ValueError("dataset needs n_classes >= 2 to set the cluster count")
        self.enc = encoder if encoder is not None else init_encoder(
            cfg.encoder_config(), seed=cfg.seed, dtype=cfg.torch_dtype)
        self.optimizer = torch.optim.AdamW(self.enc.parameters(), lr=cfg.learning_rate,
                                           weight_decay=cfg.weight_decay)
        self.rng = {"pretrain": np.random.default_rng([cfg.seed, 0]),
                    "joint": np.random.default_rng([cfg.seed, 1])}
        self.torch_gen_state = {"pretrain": _torch_state(cfg.seed * 2),
                                "joint": _torch_state(cfg.seed * 2 + 1)}
        self.membership: MembershipMatrix | None = None
        self.projection = Projection()
        self.aware = None
        self.history = TrainHistory()
        self.epoch = 0

    # -- data ------------------------------------------------------------
    @property
    def batch_size(self) -> int:
        return min(self.cfg.batch_size, self.data.n_series)

    def _batches(self, rng):
        order = rng.permutation(self.data.n_series)
        for start in range(0, len(order), self.batch_size):
            idx = order[start:start + self.batch_size]
            if len(idx) >= 2:
                yield idx

    @property
    def pairs(self):
        return ("bc",) if self.cfg.variant == "no_three_view" else contrast.PAIRS

    # -- losses ----------------------------------------------------------
    def batch_losses(self, idx, crop, rng, stage: str, membership=None, aware=None) -> dict:
        """Loss tensors for one batch.

        ``stage="pretrain"`` uses singleton positive sets and no cluster
        term; ``stage="joint"`` needs the frozen ``membership`` and
        ``aware`` sets.
        """
        cfg = self.cfg
        x = self.data.values[idx]
        views = make_views(x, crop, cfg.sigma_perturb, rng)
        om = views.overlap
        three = cfg.variant != "no_three_view"
        za = encode(self.enc, views.xa)[:, om.slice("a")] if three else None
        zb = encode(self.enc, views.xb)[:, om.slice("b")]
        zc = encode(self.enc, views.xc)[:, om.slice("c")]

        B = len(idx)
        if stage == "joint":
            pos_cluster = batch_positive_sets(aware, idx)
        else:
            pos_cluster = contrast.PositiveSets.singletons(B)
        pos_loss = pos_cluster
        if cfg.variant == "no_cluster_pairs":
            pos_loss = contrast.PositiveSets.singletons(B)

        hn_t = hn_i = None
        if cfg.variant != "no_hard_negatives":
            src = [z if z is None or not cfg.detach_hard_negatives else z.detach()
                   for z in (za, zb, zc)]
            hn_t = contrast.gen_time_hard_negatives(*src, lambda1_max=cfg.lambda1_max, rng=rng)
            hn_i = contrast.gen_instance_hard_negatives(*src, pos_sets=pos_cluster,
                                                        lambda2_max=cfg.lambda2_max, rng=rng)
        l_time = contrast.time_contrastive_loss(za, zb, zc, hn_t, pairs=self.pairs)
        l_inst = contrast.instance_contrastive_loss(
            za, zb, zc, hn_i, pos_loss, pairs=self.pairs,
            positives_in_denominator=cfg.positives_in_denominator)
        l_contrast = contrast.total_contrastive_loss(l_time, l_inst)
        out = {"time": l_time, "instance": l_inst, "contrast": l_contrast,
               "n_positive_pairs": int(pos_cluster.pos.sum() - B)}
        if stage == "joint":
            z_inst = self.projection(pool_instance(encode(self.enc, x)))
            l_cluster = cluster_loss(z_inst, membership.p[idx], membership.centers,
                                     scale=cfg.cluster_loss_scale,
                                     power=cfg.cluster_loss_power)
            out["cluster"] = l_cluster
            out["total"] = total_loss(l_contrast, l_cluster, cfg.alpha)
        else:
            out["cluster"] = None
            out["total"] = l_contrast
        return out

    # -- clustering ------------------------------------------------------
    def representations(self) -> np.ndarray:
        return instance_representations(self.enc, self.data.values)

    def fit_clusters(self, warm: bool = False) -> tuple[MembershipMatrix, Projection]:
        """FCM on the pooled representations, projected onto their leading
        ``cluster_dims`` principal axes (all dimensions when 0).

        A warm start carries the previous centers over through the full
        representation space, so a refreshed projection basis is harmless.
        Cold k-means++ starts are used only when the warm run degenerates,
        unless ``fcm_cold_restarts`` lets them compete with it every time.
        """
        cfg = self.cfg
        z = self.representations()
        proj = Projection.fit(z, cfg.cluster_dims)
        init = None
        if warm and self.membership is not None:
            init = proj(self.projection.lift(self.membership.centers))
        fit = partial(fcm_fit, proj(z), self.K, m=cfg.m, tol=cfg.fcm_tol,
                      max_iter=cfg.fcm_max_iter, seed=cfg.seed)
        if init is not None and not cfg.fcm_cold_restarts:
            membership = fit(init_centers=init, n_init=0)
            if not membership.degenerate:
                return membership, proj
            init = None
        return fit(init_centers=init, n_init=cfg.fcm_n_init), proj

    def _metrics(self, membership):
        if self.data.labels is None or membership is None:
            return math.nan, math.nan
        preds = hard_assign(membership.p)
        return nmi(self.data.labels, preds), rand_index(self.data.labels, preds)

    def _aware_sets(self, membership):
        if self.cfg.variant == "no_cluster_awareness":
            return argmax_sets(membership.p)
        return compute_cluster_aware_sets(membership.p, self.cfg.r, self.cfg.theta)

    # -- epochs ----------------------------------------------------------
    def _run_epoch(self, stage: str):
        cfg = self.cfg
        rng = self.rng[stage]
        torch.set_rng_state(self.torch_gen_state[stage])
        self.enc.train()
        T = self.data.length
        crop = sample_crop_boundaries(T, cfg.min_overlap, rng) if cfg.crop_resample == "epoch" else None
        membership, aware = self.membership, self.aware
        sums = {"contrast": 0.0, "cluster": 0.0, "total": 0.0}
        n = 0
        for idx in self._batches(rng):
            if cfg.crop_resample == "batch":
                crop = sample_crop_boundaries(T, cfg.min_overlap, rng)
            losses = self.batch_losses(idx, crop, rng, stage, membership, aware)
            self.optimizer.zero_grad()
            losses["total"].backward()
            self.optimizer.step()
            for key in sums:
                if losses[key] is not None:
                    sums[key] += float(losses[key].detach())
            n += 1
        self.torch_gen_state[stage] = torch.get_rng_state()
        n = max(n, 1)
        return {k: v / n for k, v in sums.items()}

    def pretrain_epoch(self) -> EpochRecord:
        means = self._run_epoch("pretrain")
        self.epoch += 1
        nmi_v = ri_v = math.nan
        if self.cfg.track_metrics:
            self.membership, self.projection = self.fit_clusters()
            nmi_v, ri_v = self._metrics(self.membership)
        rec = EpochRecord(self.epoch, "pretrain", means["contrast"], math.nan, means["contrast"],
                          nmi_v, ri_v, 0)
        self.history.append(rec)
        return rec

    def start_joint(self):
        """Cold FCM fit on the current encoder, used for the first joint epoch."""
        self.membership, self.projection = self.fit_clusters()
        self.aware = self._aware_sets(self.membership)

    def joint_epoch(self) -> EpochRecord:
        if self.aware is None:
            self.start_joint()
        aware_count = self.aware.total
        means = self._run_epoch("joint")
        self.epoch += 1
        self.membership, self.projection = self.fit_clusters(warm=True)
        self.aware = self._aware_sets(self.membership)
        nmi_v, ri_v = self._metrics(self.membership)
        rec = EpochRecord(self.epoch, "joint", means["contrast"], means["cluster"], means["total"],
                          nmi_v, ri_v, aware_count)
        self.history.append(rec)
        return rec

    def fit(self, callback=None) -> TrainHistory:
        """Run the remaining pretraining and joint epochs of the schedule."""
        cfg = self.cfg
        while self.epoch < cfg.epochs_pretrain:
            rec = self.pretrain_epoch()
            if callback:
                callback(self, rec)
        if self.aware is None:
            self.start_joint()
        while self.epoch < cfg.epochs_pretrain + cfg.epochs_joint:
            rec = self.joint_epoch()
            if callback:
                callback(self, rec)
        return self.history

    # -- checkpoints -----------------------------------------------------
    def state_dict(self) -> dict:
        return {
            "config": asdict(self.cfg),
            "encoder_config": asdict(self.enc.cfg),
            "encoder": self.enc.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "rng": {k: g.bit_generator.state for k, g in self.rng.items()},
            "torch_rng": self.torch_gen_state,
            "membership": None if self.membership is None else
            {"p": self.membership.p, "centers": self.membership.centers},
            "projection": {"mean": self.projection.mean, "components": self.projection.components},
            "aware_initialized": self.aware is not None,
            "history": [asdict(r) for r in self.history],
            "epoch": self.epoch,
        }

    def save_checkpoint(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(self.state_dict(), path)
        return path

    @classmethod
    def from_checkpoint(cls, path, data: Dataset, **overrides) -> "Trainer":
        blob = torch.load(path, map_location="cpu", weights_only=False)
        cfg = replace(TrainConfig(**blob["config"]), **overrides)
        enc = init_encoder(EncoderConfig(**blob["encoder_config"]), dtype=cfg.torch_dtype)
        enc.load_state_dict(blob["encoder"])
        trainer = cls(data, cfg, encoder=enc)
        trainer.optimizer.load_state_dict(blob["optimizer"])
        for k, state in blob["rng"].items():
            trainer.rng[k].bit_generator.state = state
        trainer.torch_gen_state = blob["torch_rng"]
        trainer.projection = Projection(**blob.get("projection", {}))
        if blob["membership"] is not None:
            trainer.membership = MembershipMatrix(blob["membership"]["p"],
                                                  blob["membership"]["centers"], cfg.m)
            if blob["aware_initialized"]:
                trainer.aware = trainer._aware_sets(trainer.membership)
        trainer.history = TrainHistory([EpochRecord(**r) for r in blob["history"]])
        trainer.epoch = blob["epoch"]
        return trainer


def _torch_state(seed: int) -> torch.Tensor:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return torch.get_rng_state()


# -- functional API -------------------------------------------------------

def pretrain(enc, data: Dataset, cfg: TrainConfig):
    """Cluster-agnostic contrastive pretraining; returns ``(encoder, history)``."""
    trainer = Trainer(data, cfg, encoder=enc)
    for _ in range(cfg.epochs_pretrain):
        trainer.pretrain_epoch()
    return trainer.enc, trainer.history


def joint_optimize(enc, data: Dataset, cfg: TrainConfig):
    """Joint stage only; returns ``(encoder, membership, history)``.

    With ``epochs_joint=0`` this is a single FCM fit on ``enc``.
    """
    trainer = Trainer(data, cfg, encoder=enc)
    trainer.start_joint()
    for _ in range(cfg.epochs_joint):
        trainer.joint_epoch()
    return trainer.enc, trainer.membership, trainer.history


def run_pipeline(data: Dataset, cfg: TrainConfig, callback=None) -> Trainer:
    trainer = Trainer(data, cfg)
    trainer.fit(callback)
    return trainer


def run_ablation(data: Dataset, cfg: TrainConfig, variant: str) -> TrainHistory:
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")
    return run_pipeline(data, replace(cfg, variant=variant)).history
