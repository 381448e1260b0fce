from dataclasses import asdict, replace

import numpy as np
import pytest
import torch

from fcacc import trainer as trainer_mod
from fcacc.augment import sample_crop_boundaries
from fcacc.dataio import znormalize
from fcacc.synthetic import toy_dataset
from fcacc.trainer import (TrainConfig, TrainHistory, Trainer, joint_optimize, pretrain,
                           run_ablation, run_pipeline, total_loss)

TINY = TrainConfig(hidden_dims=8, output_dims=6, n_residual_blocks=2, epochs_pretrain=2,
                   epochs_joint=2, batch_size=6, dtype="float64", seed=1)


@pytest.fixture(scope="module")
def data():
    return znormalize(toy_dataset(n=18, length=24))


def params(enc):
    return [p.detach().clone() for p in enc.parameters()]


def rows(history):
    # NaN-safe comparison of history records
    return [tuple("nan" if isinstance(v, float) and np.isnan(v) else v for v in asdict(r).values())
            for r in history]


def same_params(a, b):
    return all(torch.equal(x, y) for x, y in zip(a, b))


def test_total_loss_examples():
    assert total_loss(1.0, 0.5, 0.2) == pytest.approx(1.1)
    assert total_loss(0.7, 123.0, 0.0) == 0.7
    assert total_loss(1.0, 2.0, 0.3) - total_loss(1.0, 1.0, 0.3) == pytest.approx(0.3)


def test_config_validation_and_text():
    for bad in ({"theta": 1.5}, {"r": -0.1}, {"alpha": -1}, {"lambda1_max": 0.6},
                {"lambda2_max": 0.0}, {"variant": "nope"}, {"batch_size": 1}):
        with pytest.raises(ValueError):
            TrainConfig(**bad).validate()
    cfg = replace(TINY, alpha=0.3, positives_in_denominator=False)
    assert TrainConfig.from_text(cfg.to_text()) == cfg
    with pytest.raises(KeyError):
        TrainConfig.from_text("unknown=1")


def test_empty_pretrain_leaves_encoder(data):
    tr = Trainer(data, TINY)
    before = params(tr.enc)
    enc, hist = pretrain(tr.enc, data, replace(TINY, epochs_pretrain=0))
    assert len(hist) == 0 and same_params(before, params(enc))


def test_empty_joint_is_single_fcm_fit(data):
    tr = Trainer(data, TINY)
    before = params(tr.enc)
    enc, membership, hist = joint_optimize(tr.enc, data, replace(TINY, epochs_joint=0))
    assert len(hist) == 0 and same_params(before, params(enc))
    assert membership.p.shape == (data.n_series, data.n_classes)


def test_history_rows_and_determinism(data, tmp_path):
    a = run_pipeline(data, TINY)
    b = run_pipeline(data, TINY)
    assert len(a.history) == TINY.epochs_pretrain + TINY.epochs_joint
    assert [r.stage for r in a.history] == ["pretrain"] * 2 + ["joint"] * 2
    assert rows(a.history) == rows(b.history)
    assert same_params(params(a.enc), params(b.enc))
    back = TrainHistory.from_csv(a.history.to_csv(tmp_path / "h.csv"))
    assert len(back) == 4 and back[3].aware_count == a.history[3].aware_count
    assert np.isnan(back[0].cluster_loss) and np.isfinite(back[2].cluster_loss)


def test_pretraining_ignores_cluster_settings(data):
    ref = Trainer(data, replace(TINY, track_metrics=False))
    ref.pretrain_epoch(), ref.pretrain_epoch()
    for over in ({"theta": 0.1}, {"r": 1.0}, {"alpha": 5.0}, {"track_metrics": True}):
        tr = Trainer(data, replace(TINY, **{"track_metrics": False, **over}))
        tr.pretrain_epoch(), tr.pretrain_epoch()
        assert same_params(params(ref.enc), params(tr.enc)), over


def test_alpha_zero_gradient_is_contrastive(data):
    tr = Trainer(data, replace(TINY, alpha=0.0))
    tr.start_joint()
    idx = np.arange(6)

    def grads(key):
        torch.manual_seed(0)
        rng = np.random.default_rng(0)
        crop = sample_crop_boundaries(data.length, TINY.min_overlap, rng)
        tr.enc.zero_grad()
        out = tr.batch_losses(idx, crop, rng, "joint", tr.membership, tr.aware)
        out[key].backward()
        return [p.grad.clone() for p in tr.enc.parameters()]

    for g_total, g_contrast in zip(grads("total"), grads("contrast")):
        torch.testing.assert_close(g_total, g_contrast, atol=1e-9, rtol=0)


def test_cluster_term_has_gradient(data):
    tr = Trainer(data, TINY)
    tr.start_joint()
    idx = np.arange(6)
    rng = np.random.default_rng(0)
    crop = sample_crop_boundaries(data.length, TINY.min_overlap, rng)
    out = tr.batch_losses(idx, crop, rng, "joint", tr.membership, tr.aware)
    out["cluster"].backward()
    assert any(p.grad is not None and p.grad.abs().sum() > 0 for p in tr.enc.parameters())


def test_memberships_frozen_within_epoch(data, monkeypatch):
    tr = Trainer(data, TINY)
    tr.start_joint()
    seen = []
    original = Trainer.batch_losses

    def spy(self, idx, crop, rng, stage, membership=None, aware=None):
        seen.append((id(membership), membership.p.copy(), membership.centers.copy(), id(aware)))
        return original(self, idx, crop, rng, stage, membership, aware)

    monkeypatch.setattr(Trainer, "batch_losses", spy)
    tr.joint_epoch()
    assert len(seen) == 3
    first = seen[0]
    for rec in seen[1:]:
        assert rec[0] == first[0] and rec[3] == first[3]
        assert np.array_equal(rec[1], first[1]) and np.array_equal(rec[2], first[2])


def test_checkpoint_resume_bit_exact(data, tmp_path):
    straight = run_pipeline(data, TINY)
    part = Trainer(data, TINY)
    part.pretrain_epoch(), part.pretrain_epoch()
    part.start_joint()
    part.joint_epoch()
    path = part.save_checkpoint(tmp_path / "ckpt_epoch3")
    resumed = Trainer.from_checkpoint(path, data)
    resumed.fit()
    assert same_params(params(straight.enc), params(resumed.enc))
    assert rows(straight.history) == rows(resumed.history)
    np.testing.assert_array_equal(straight.membership.p, resumed.membership.p)


def test_unknown_variant(data):
    with pytest.raises(ValueError):
        run_ablation(data, TINY, "no_everything")


def test_full_variant_matches_pipeline(data):
    hist = run_ablation(data, TINY, "full")
    ref = run_pipeline(data, TINY).history
    assert rows(hist) == rows(ref)


@pytest.mark.parametrize("variant", trainer_mod.VARIANTS[1:])
def test_variants_run(data, variant):
    hist = run_ablation(data, replace(TINY, epochs_pretrain=1, epochs_joint=1), variant)
    assert len(hist) == 2 and np.isfinite(hist.column("total_loss")).all()


def test_no_cluster_awareness_admits_everyone(data):
    tr = Trainer(data, replace(TINY, variant="no_cluster_awareness"))
    tr.start_joint()
    assert tr.aware.total == data.n_series


def test_no_three_view_uses_two_views(data, monkeypatch):
    calls = []
    original = trainer_mod.contrast.time_contrastive_loss

    def spy(za, zb, zc, hn=None, pairs=("ab", "bc")):
        calls.append((za is None, pairs))
        return original(za, zb, zc, hn, pairs)

    monkeypatch.setattr(trainer_mod.contrast, "time_contrastive_loss", spy)
    tr = Trainer(data, replace(TINY, variant="no_three_view", track_metrics=False))
    tr.pretrain_epoch()
    assert calls and all(c == (True, ("bc",)) for c in calls)


def test_joint_refit_is_warm_only_unless_degenerate(data, monkeypatch):
    calls = []
    real = trainer_mod.fcm_fit

    def spy(*args, **kw):
        res = real(*args, **kw)
        calls.append((kw.get("init_centers") is not None, kw.get("n_init")))
        return res

    monkeypatch.setattr(trainer_mod, "fcm_fit", spy)
    tr = Trainer(data, replace(TINY, epochs_pretrain=0, track_metrics=False))
    tr.start_joint()
    assert calls == [(False, TINY.fcm_n_init)]
    calls.clear()
    tr.fit_clusters(warm=True)
    assert calls == [(True, 0)]

    # coincident warm centers stay at the all-1/K fixed point; cold starts take over
    tr.membership.centers = np.zeros_like(tr.membership.centers)
    calls.clear()
    membership, _ = tr.fit_clusters(warm=True)
    assert calls == [(True, 0), (False, TINY.fcm_n_init)]
    assert not membership.degenerate

    calls.clear()
    compete = Trainer(data, replace(TINY, fcm_cold_restarts=True, track_metrics=False))
    compete.start_joint()
    compete.fit_clusters(warm=True)
    assert calls[-1] == (True, TINY.fcm_n_init)
