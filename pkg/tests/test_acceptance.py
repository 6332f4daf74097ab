"""Acceptance suite: one test per release criterion, each printing a PASS line.

These tests intentionally re-derive expected values from independent
straight-line implementations rather than trusting the library code.
"""

import math
import os
import tempfile
import time

import numpy as np
import pytest
import torch
import torch.nn as nn
import torch.nn.functional as F

from test_thresholds import random_simplex_batches, scalar_reference

from vidssl.cli import main
from vidssl.config import RunConfig, config_from_flat
from vidssl.data import SynthSpec, make_batches, synth_generate
from vidssl.losses import (LossWeights, align_loss, consistency_loss,
                           fairness_loss, supervised_losses, total_loss)
from vidssl.mixing import vcsa
from vidssl.models import ModelBundle, adversarial_boundary
from vidssl.presets import apply_preset
from vidssl.reporting import read_metrics
from vidssl.thresholds import class_thresholds, sat_init, sat_update
from vidssl.trainer import Trainer, cosine_lr, save_checkpoint


def report(name, detail=""):
    print(f"ACCEPTANCE PASS: {name}" + (f" ({detail})" if detail else ""))


def test_criterion_1_threshold_oracle_equivalence():
    start = time.monotonic()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for n_classes in (2, 5):
        batches = random_simplex_batches(rng, 200, 8, n_classes)
        reference = scalar_reference([b.tolist() for b in batches], n_classes, 0.95)
        state = sat_init(n_classes, 0.95)
        for q, (tau, p, h, per_class) in zip(batches, reference):
            state = sat_update(state, q)
            worst = max(worst,
                        abs(state.tau_global - tau),
                        np.abs(state.p_local - p).max(),
                        np.abs(state.h_tilde - h).max(),
                        np.abs(class_thresholds(state) - per_class).max())
    elapsed = time.monotonic() - start
    assert worst < 1e-9
    assert elapsed < 5.0
    report("threshold EMA oracle equivalence",
           f"max abs dev {worst:.2e}, {elapsed:.2f}s")


def test_criterion_2_threshold_invariants():
    start = time.monotonic()
    rng = np.random.default_rng(77)
    for n_classes in (2, 5):
        state = sat_init(n_classes, 0.97)
        for _ in range(500):
            q = rng.dirichlet(np.ones(n_classes) * rng.uniform(0.2, 4.0),
                              size=int(rng.integers(1, 10)))
            state = sat_update(state, q)
            per_class = class_thresholds(state)
            assert 1.0 / n_classes - 1e-12 <= state.tau_global <= 1.0 + 1e-12
            assert abs(state.p_local.sum() - 1.0) < 1e-9
            assert per_class.max() == state.tau_global
            assert np.all(per_class <= state.tau_global + 1e-15)
    elapsed = time.monotonic() - start
    assert elapsed < 5.0
    report("threshold invariants over 1000 updates", f"{elapsed:.2f}s")


def test_criterion_3_mixing_properties():
    start = time.monotonic()
    rng = np.random.default_rng(31)
    for trial in range(100):
        shape = (2, 3, 4, 8, 8)
        x = rng.random(shape).astype(np.float32)
        u = rng.random(shape).astype(np.float32)
        labels = rng.integers(0, 2, size=2)
        pseudo = rng.integers(0, 2, size=2)
        assert np.array_equal(vcsa(x, labels, u, pseudo, 1.0, 2).clips, x)
        assert np.array_equal(vcsa(x, labels, u, pseudo, 0.0, 2).clips, u)
        lam = float(rng.random())
        mixed = vcsa(x, labels, u, pseudo, lam, 2)
        lo, hi = np.minimum(x, u), np.maximum(x, u)
        assert np.all(mixed.clips >= lo - 1e-6) and np.all(mixed.clips <= hi + 1e-6)
        assert np.abs(mixed.soft_labels.sum(axis=1) - 1.0).max() < 1e-12
        sym = vcsa(u, pseudo, x, labels, 1.0 - lam, 2)
        assert np.allclose(mixed.clips, sym.clips, atol=1e-6)
        assert np.allclose(mixed.soft_labels, sym.soft_labels, atol=1e-12)
    elapsed = time.monotonic() - start
    assert elapsed < 10.0
    report("cross-set interpolation properties on 100 pairs", f"{elapsed:.2f}s")


def test_criterion_4_loss_oracles_and_identity():
    # frozen scalar oracles
    l_cs, _ = supervised_losses(torch.tensor([[0.8, 0.2]]),
                                torch.tensor([[0.5, 0.5]]), [0])
    assert float(l_cs) == pytest.approx(0.22314, abs=1e-5)
    _, l_ps = supervised_losses(torch.tensor([[0.5, 0.5]]),
                                torch.tensor([[0.5, 0.5]]), [0])
    assert float(l_ps) == pytest.approx(math.log(2), abs=1e-5)
    l_align = align_loss(torch.tensor([[0.5, 0.5]]), [[0.5, 0.5]],
                         torch.tensor([0.5]), [0.5], rho=1.0, lambda_m=0.5)
    assert float(l_align) == pytest.approx(1.5 * math.log(2), abs=1e-5)
    assert round(float(l_align), 4) == 1.0397
    state = sat_init(2, 0.9)
    l_fair = fairness_loss(state, torch.tensor([[0.9, 0.1], [0.1, 0.9]]),
                           torch.tensor([[0.6, 0.4], [0.4, 0.6]]), [0.5, 0.5])
    assert float(l_fair) == pytest.approx(-0.6931, abs=1e-4)
    weights = LossWeights(omega_m=1.0, omega_f=0.01, omega_a=1.0)
    assert float(total_loss(1.0, 1.0, 1.0, 1.0, 1.0, weights)) == pytest.approx(
        4.01, abs=1e-12)

    # the loss-assembly identity holds on every step of a 50+ step run
    config = RunConfig(batch_size=3, mu=2, epochs=13, seed=3,
                       embed_dim=16, widths=(4, 4, 8, 8),
                       synth_n_labeled_per_class=3, synth_n_unlabeled=24)
    spec = SynthSpec(n_labeled_per_class=3, n_unlabeled=24, n_test=0, seed=3)
    index, _ = synth_generate(spec)
    trainer = Trainer(config, index)
    assert trainer.total_steps >= 50
    worst = 0.0
    for epoch in range(config.epochs):
        batches = make_batches(index, config.batch_size, config.mu,
                               [config.seed, 0xEC, epoch], config.frames,
                               config.width, config.height)
        for step_in_epoch, batch in enumerate(batches):
            r = trainer.train_step(batch, epoch, step_in_epoch).losses
            recomputed = (weights.omega_m * (r.l_ps + r.l_match)
                          + weights.omega_f * r.l_fair
                          + weights.omega_a * r.l_align + r.l_cs)
            worst = max(worst, abs(r.total - recomputed))
    assert worst < 1e-12
    report("loss oracles and per-step assembly identity",
           f"{trainer.total_steps} steps, max dev {worst:.2e}")


def tiny_double_bundle(seed=0):
    torch.manual_seed(seed)
    extractor = nn.Sequential(nn.Flatten(), nn.Linear(3 * 2 * 4 * 4, 4))
    bundle = ModelBundle(extractor, nn.Linear(4, 2), nn.Linear(4, 2),
                         nn.Sequential(nn.Linear(4, 4), nn.ReLU(), nn.Linear(4, 1)),
                         adversarial_mode="joint_min", geometry=None)
    return bundle.double()


def test_criterion_5_gradient_checks():
    # (a) finite-difference agreement of the full objective on a tiny model
    torch.manual_seed(1)
    model = tiny_double_bundle()
    labeled = torch.rand(2, 3, 2, 4, 4, dtype=torch.float64)
    strong = torch.rand(3, 3, 2, 4, 4, dtype=torch.float64)
    mixed_clips = torch.rand(2, 3, 2, 4, 4, dtype=torch.float64)
    weak_q = torch.tensor([[0.9, 0.1], [0.1, 0.9], [0.85, 0.15]],
                          dtype=torch.float64)
    state = sat_update(sat_init(2, 0.9), weak_q.numpy())
    thresholds = [0.5, 0.5]
    weights = LossWeights(omega_m=1.0, omega_f=0.01, omega_a=1.0)
    soft_labels = [[0.6, 0.4], [0.4, 0.6]]
    disc_targets = [0.4, 0.4]

    def objective():
        strong_q = F.softmax(model.predict_head(model.embed(strong)), dim=1)
        l_match, _ = consistency_loss(weak_q, strong_q, thresholds)
        l_fair = fairness_loss(state, weak_q, strong_q, thresholds)
        emb_x = model.embed(labeled)
        l_cs, l_ps = supervised_losses(F.softmax(model.classifier(emb_x), dim=1),
                                       F.softmax(model.predict_head(emb_x), dim=1),
                                       [0, 1])
        emb_m = model.embed(mixed_clips)
        l_align = align_loss(F.softmax(model.classifier(emb_m), dim=1), soft_labels,
                             torch.sigmoid(model.discriminate(emb_m)), disc_targets,
                             rho=0.6, lambda_m=0.6)
        return total_loss(l_cs, l_ps, l_match, l_fair, l_align, weights)

    loss = objective()
    loss.backward()
    h = 1e-6
    worst_rel = 0.0
    for param in model.parameters():
        grad = param.grad.clone()
        flat = param.data.view(-1)
        for i in range(flat.numel()):
            original = flat[i].item()
            flat[i] = original + h
            plus = float(objective().detach())
            flat[i] = original - h
            minus = float(objective().detach())
            flat[i] = original
            numeric = (plus - minus) / (2 * h)
            analytic = grad.view(-1)[i].item()
            rel = abs(analytic - numeric) / max(abs(numeric), 1e-8)
            worst_rel = max(worst_rel, rel)
    assert worst_rel < 1e-3

    # (b) reversal boundary sign and scale
    for coefficient in (1.0, 0.25):
        x = torch.randn(4, 3, requires_grad=True)
        upstream = torch.randn(4, 3)
        adversarial_boundary(x, coefficient).backward(upstream)
        assert torch.allclose(x.grad, -coefficient * upstream, atol=1e-6)

    # (c) exactly zero gradient through the confidence-view probabilities
    weak = torch.tensor([[0.97, 0.03]], requires_grad=True)
    strong_p = torch.tensor([[0.8, 0.2]], requires_grad=True)
    l_match, _ = consistency_loss(weak, strong_p, [0.5, 0.5])
    grads = torch.autograd.grad(l_match, [weak, strong_p], allow_unused=True)
    assert grads[0] is None or torch.all(grads[0] == 0)
    report("gradient checks", f"worst finite-difference rel err {worst_rel:.2e}")


def test_criterion_6_scheduler():
    K = 1000
    assert cosine_lr(0, K, 0.03) == pytest.approx(0.03, abs=1e-6)
    assert cosine_lr(K // 2, K, 0.03) == pytest.approx(0.0231902, abs=1e-6)
    assert cosine_lr(K, K, 0.03) == pytest.approx(0.0058528, abs=1e-6)
    values = [cosine_lr(k, K, 0.03) for k in range(K + 1)]
    assert all(a > b for a, b in zip(values, values[1:]))
    report("cosine schedule endpoints and monotonicity")


def _benchmark_run(preset, seed):
    flat = apply_preset({}, preset)
    flat["train.seed"] = str(seed)
    config = config_from_flat(flat)
    spec = SynthSpec(n_labeled_per_class=config.synth_n_labeled_per_class,
                     n_unlabeled=config.synth_n_unlabeled,
                     n_test=config.synth_n_test,
                     noise_std=config.synth_noise_std,
                     confuser_fraction=config.synth_confuser_fraction,
                     seed=seed)
    index, test = synth_generate(spec)
    trainer = Trainer(config, index, test_set=test)
    with tempfile.TemporaryDirectory() as tmp:
        trainer.fit(os.path.join(tmp, "run"))
    return trainer.evaluate(test)["top1"]


def test_criterion_7_synthetic_semi_supervised_gain():
    start = time.monotonic()
    seeds = (0, 1, 2)
    supervised = [_benchmark_run("supervised_only", s) for s in seeds]
    full = [_benchmark_run("firematch_full", s) for s in seeds]
    elapsed = time.monotonic() - start
    mean_sup = float(np.mean(supervised))
    mean_full = float(np.mean(full))
    detail = (f"supervised {mean_sup:.3f} {supervised}, "
              f"full {mean_full:.3f} {full}, {elapsed:.0f}s")
    assert elapsed < 1200.0, detail
    assert mean_full >= 0.80, detail
    assert mean_full - mean_sup >= 0.05, detail
    report("synthetic end-to-end semi-supervised gain", detail)


def test_criterion_8_ablation_machinery(tmp_path):
    out = tmp_path / "sweep"
    overrides = []
    for item in ("train.epochs=2", "train.batch_size=2", "train.mu=2",
                 "model.widths=4,4,8,8", "model.embed_dim=16",
                 "synth.n_labeled_per_class=2", "synth.n_unlabeled=16",
                 "synth.n_test=4"):
        overrides += ["--set", item]
    code = main(["ablate", "--presets", "cr_ft,cr_sat,firematch_full",
                 "--seeds", "0,1,2", "--out", str(out)] + overrides)
    assert code == 0
    rows = (out / "ablation.csv").read_text().strip().splitlines()
    assert rows[0] == "preset,n_seeds,mean_acc,std_acc,mean_mask_rate"
    table = {row.split(",")[0]: row.split(",") for row in rows[1:]}
    assert set(table) == {"cr_ft", "cr_sat", "firematch_full"}
    assert all(row[1] == "3" for row in table.values())
    # the fixed-threshold arm must log a constant threshold vector
    for seed in (0, 1, 2):
        cols = read_metrics(str(out / f"cr_ft_seed{seed}" / "metrics.csv"))
        for key in ("tau_class_0", "tau_class_1"):
            assert all(v == 0.95 for v in cols[key]), key
    report("ablation sweep machinery and fixed-threshold arm")


def test_criterion_9_reproducibility(tmp_path):
    overrides = []
    for item in ("train.epochs=4", "train.batch_size=3", "train.mu=2",
                 "model.widths=4,4,8,8", "model.embed_dim=16",
                 "synth.n_labeled_per_class=3", "synth.n_unlabeled=12",
                 "synth.n_test=4"):
        overrides += ["--set", item]
    run_a, run_b = tmp_path / "a", tmp_path / "b"
    for run in (run_a, run_b):
        assert main(["train", "--synthetic", "--seed", "7",
                     "--out", str(run)] + overrides) == 0
    metrics_a = (run_a / "metrics.csv").read_bytes()
    assert metrics_a == (run_b / "metrics.csv").read_bytes()

    # resume from a mid-run checkpoint and reproduce the tail exactly
    config = config_from_flat(dict(
        item.split("=") for item in
        ("train.epochs=4", "train.batch_size=3", "train.mu=2",
         "model.widths=4,4,8,8", "model.embed_dim=16",
         "synth.n_labeled_per_class=3", "synth.n_unlabeled=12",
         "synth.n_test=4", "train.seed=7")))
    spec = SynthSpec(n_labeled_per_class=3, n_unlabeled=12, n_test=4, seed=7)
    index, test = synth_generate(spec)
    partial = Trainer(config, index, test_set=test)
    for epoch in range(2):
        batches = make_batches(index, config.batch_size, config.mu,
                               [config.seed, 0xEC, epoch], config.frames,
                               config.width, config.height)
        for step_in_epoch, batch in enumerate(batches):
            partial.train_step(batch, epoch, step_in_epoch)
    ckpt = str(tmp_path / "partial.ckpt")
    save_checkpoint(ckpt, partial)
    resumed = Trainer(config, index, test_set=test)
    resumed.fit(str(tmp_path / "resumed"), resume_from=ckpt)
    resumed_rows = (tmp_path / "resumed" / "metrics.csv").read_text().splitlines()
    full_rows = metrics_a.decode().splitlines()
    assert resumed_rows == full_rows[-len(resumed_rows):]
    report("bitwise reproducibility and exact checkpoint resume")
