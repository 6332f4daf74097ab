"""Training step, loop, checkpointing and evaluation."""

import logging
import math
import os
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import data as data_mod
from .augment import AugmentPolicy, paired_views
from .config import config_hash, config_to_flat
from .errors import ConfigurationError, NumericError
from .losses import (LossBundle, LossWeights, align_loss, consistency_loss,
                     fairness_loss, supervised_losses, total_loss)
from .mixing import sample_lambda, vcsa, videomix_batch
from .models import build_backbone
from .thresholds import (SatState, class_thresholds, compute_mask,
                         fixed_thresholds, sat_init, sat_update)

logger = logging.getLogger(__name__)


def cosine_lr(k, total_steps, base_lr):
    """Cosine decay base_lr * cos(7*pi*k / (16*K)); positive and strictly
    decreasing for k in [0, K]."""
    if k > total_steps:
        logger.warning("cosine_lr called with k=%d > K=%d; clamping", k, total_steps)
        k = total_steps
    return base_lr * math.cos(7.0 * math.pi * k / (16.0 * total_steps))


@dataclass
class StepRecord:
    step: int
    lr: float
    losses: LossBundle
    tau_global: float
    tau_class: np.ndarray
    lambda_m: float
    mask_rate: float
    pl_precision: float = None  # None when ground truth is unavailable


def metrics_header(n_classes):
    tau_cols = [f"tau_class_{i}" for i in range(n_classes)]
    return (["step", "lr", "L_cs", "L_ps", "L_match", "L_fair", "L_align", "total",
             "tau_global"] + tau_cols + ["lambda_m", "mask_rate", "pl_precision"])


def record_row(record):
    b = record.losses
    values = ([record.step, record.lr, b.l_cs, b.l_ps, b.l_match, b.l_fair, b.l_align,
               b.total, record.tau_global] + list(record.tau_class)
              + [record.lambda_m, record.mask_rate])
    row = [f"{v:.17g}" if not isinstance(v, int) else str(v) for v in values]
    row.append("" if record.pl_precision is None else f"{record.pl_precision:.17g}")
    return row


class Trainer:
    """Owns the model, optimizer and SAT state for one run."""

    def __init__(self, config, index, test_set=None):
        self.config = config
        self.index = index
        self.test_set = test_set
        torch.manual_seed(config.seed)
        self.model = build_backbone(
            config.preset, config.geometry, config.num_classes,
            embed_dim=config.embed_dim, widths=config.widths,
            grl_coefficient=config.grl_coefficient,
            adversarial_mode=config.adversarial_mode)
        self.optimizer = torch.optim.SGD(
            self.model.parameters(), lr=config.lr,
            momentum=config.momentum, weight_decay=config.weight_decay)
        self.sat = sat_init(config.num_classes, config.lambda_de)
        self.policy = AugmentPolicy(
            weak_mode=config.weak_mode, strong_n=config.strong_n,
            strong_magnitude_range=(config.magnitude_min, config.magnitude_max),
            cutout_enabled=config.cutout)
        self.weights = LossWeights(omega_m=config.omega_m, omega_f=config.omega_f,
                                   omega_a=config.omega_a, rho=config.rho)
        self.steps_per_epoch = data_mod.steps_per_epoch(index, config.batch_size, config.mu)
        if config.epochs > 0 and self.steps_per_epoch == 0:
            raise ConfigurationError("dataset too small for one step per epoch")
        self.total_steps = max(1, config.epochs * self.steps_per_epoch)
        self.step = 0

    # -- per-step machinery -------------------------------------------------

    def _skip_unlabeled(self):
        c = self.config
        return (c.omega_m == 0.0 and c.omega_f == 0.0
                and (c.omega_a == 0.0 or c.mixing_mode == "off"))

    def current_thresholds(self):
        if self.config.threshold_mode == "fixed":
            return fixed_thresholds(self.config.fixed_threshold, self.config.num_classes)
        return class_thresholds(self.sat)

    def train_step(self, batch, epoch, step_in_epoch):
        """One optimization step; returns the StepRecord."""
        cfg = self.config
        k = self.step
        step_rng = np.random.default_rng([cfg.seed, 0x5EED, epoch, step_in_epoch])
        n_unlabeled = batch.unlabeled_clips.shape[0]
        use_unlabeled = n_unlabeled > 0 and not self._skip_unlabeled()

        zero = torch.zeros(())
        l_match, l_fair = zero, zero
        mask_rate = 0.0
        pl_precision = None
        weak_q = None
        cls_pseudo = None

        if use_unlabeled:
            sample_rngs = [np.random.default_rng([cfg.seed, 0xA06, epoch, step_in_epoch, i])
                           for i in range(n_unlabeled)]
            weak, strong = paired_views(batch.unlabeled_clips, self.policy, sample_rngs)
            weak_t = torch.from_numpy(weak)
            with torch.no_grad():
                emb_w = self.model.embed(weak_t)
                weak_q = F.softmax(self.model.predict_head(emb_w), dim=1)
                cls_pseudo = F.softmax(self.model.classifier(emb_w), dim=1).argmax(dim=1).numpy()
            self.sat = sat_update(self.sat, weak_q.numpy())
            thresholds = self.current_thresholds()
            emb_s = self.model.embed(torch.from_numpy(strong))
            strong_q = F.softmax(self.model.predict_head(emb_s), dim=1)
            l_match, mask_rate = consistency_loss(weak_q, strong_q, thresholds)
            l_fair = fairness_loss(self.sat, weak_q, strong_q, thresholds)
            if batch.unlabeled_true is not None:
                result = compute_mask(weak_q.numpy(), thresholds)
                if result.mask.any():
                    pl_precision = float(
                        (result.pseudo_classes[result.mask]
                         == batch.unlabeled_true[result.mask]).mean())
        else:
            self.sat = sat_update(self.sat, np.zeros((0, cfg.num_classes)))
            thresholds = self.current_thresholds()

        labeled_t = torch.from_numpy(batch.labeled_clips)
        emb_x = self.model.embed(labeled_t)
        cls_probs = F.softmax(self.model.classifier(emb_x), dim=1)
        head_probs = F.softmax(self.model.predict_head(emb_x), dim=1)
        l_cs, l_ps = supervised_losses(cls_probs, head_probs, batch.labels)

        l_align = zero
        lambda_m = 0.0
        if cfg.mixing_mode != "off" and use_unlabeled and cfg.omega_a != 0.0:
            subset = step_rng.choice(n_unlabeled, size=cfg.batch_size, replace=False)
            pseudo = cls_pseudo[subset]
            if cfg.mixing_mode == "vcsa":
                lambda_m = sample_lambda(cfg.alpha, step_rng)
                mixed = vcsa(batch.labeled_clips, batch.labels,
                             batch.unlabeled_clips[subset], pseudo,
                             lambda_m, cfg.num_classes)
            elif cfg.mixing_mode == "videomix":
                mixed = videomix_batch(batch.labeled_clips, batch.labels,
                                       batch.unlabeled_clips[subset], pseudo,
                                       step_rng, cfg.num_classes)
                lambda_m = mixed.lambda_m
            else:
                raise ConfigurationError(f"unknown mixing mode {cfg.mixing_mode!r}")
            emb_m = self.model.embed(torch.from_numpy(mixed.clips.astype(np.float32)))
            mixed_cls = F.softmax(self.model.classifier(emb_m), dim=1)
            disc_probs = torch.sigmoid(self.model.discriminate(emb_m))
            l_align = align_loss(mixed_cls, mixed.soft_labels, disc_probs,
                                 mixed.disc_targets,
                                 self.weights.resolve_rho(lambda_m), lambda_m)

        total = total_loss(l_cs, l_ps, l_match, l_fair, l_align, self.weights)
        if not torch.isfinite(total):
            raise NumericError(f"non-finite total loss at step {k}")

        lr = cosine_lr(k, self.total_steps, cfg.lr)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.step = k + 1

        def scalar(value):
            return float(value.detach()) if isinstance(value, torch.Tensor) else float(value)

        losses = LossBundle(
            l_cs=scalar(l_cs), l_ps=scalar(l_ps), l_match=scalar(l_match),
            l_fair=scalar(l_fair), l_align=scalar(l_align), total=scalar(total),
            mask_rate=mask_rate)
        return StepRecord(step=k, lr=lr, losses=losses,
                          tau_global=self.sat.tau_global,
                          tau_class=np.array(thresholds, dtype=np.float64),
                          lambda_m=lambda_m, mask_rate=mask_rate,
                          pl_precision=pl_precision)

    # -- loop, checkpoints, evaluation --------------------------------------

    def fit(self, run_dir, resume_from=None):
        """Run the configured number of epochs; returns the final checkpoint path."""
        cfg = self.config
        os.makedirs(run_dir, exist_ok=True)
        metrics_path = os.path.join(run_dir, "metrics.csv")
        eval_path = os.path.join(run_dir, "eval.csv")
        if resume_from:
            load_checkpoint(resume_from, self)
        fresh = self.step == 0
        with open(metrics_path, "a") as metrics, open(eval_path, "a") as evals:
            if fresh:
                metrics.write(",".join(metrics_header(cfg.num_classes)) + "\n")
                evals.write("step,top1,head_top1\n")
            for epoch in range(cfg.epochs):
                if (epoch + 1) * self.steps_per_epoch <= self.step:
                    continue  # fully consumed before the resume point
                batches = data_mod.make_batches(
                    self.index, cfg.batch_size, cfg.mu,
                    epoch_seed=[cfg.seed, 0xEC, epoch],
                    frames=cfg.frames, width=cfg.width, height=cfg.height,
                    load_unlabeled=not self._skip_unlabeled())
                for step_in_epoch, batch in enumerate(batches):
                    if epoch * self.steps_per_epoch + step_in_epoch < self.step:
                        continue
                    record = self.train_step(batch, epoch, step_in_epoch)
                    metrics.write(",".join(record_row(record)) + "\n")
                metrics.flush()
                if (epoch + 1) % cfg.eval_interval == 0:
                    if self.test_set:
                        report = self.evaluate(self.test_set)
                        evals.write(f"{self.step},{report['top1']:.10g},"
                                    f"{report['head_top1']:.10g}\n")
                        evals.flush()
                    save_checkpoint(os.path.join(run_dir, "latest.ckpt"), self)
        final_path = os.path.join(run_dir, "final.ckpt")
        save_checkpoint(final_path, self)
        return final_path

    def evaluate(self, test_set, batch_size=16):
        """Top-1/per-class accuracy, confusion counts and embeddings on held-out clips."""
        if not test_set:
            raise ConfigurationError("empty test set")
        n_classes = self.config.num_classes
        self.model.eval()
        embeddings, cls_pred, head_pred, labels = [], [], [], []
        with torch.no_grad():
            for start in range(0, len(test_set), batch_size):
                chunk = test_set[start:start + batch_size]
                clips = torch.from_numpy(np.stack([c.pixels for c, _ in chunk]))
                emb = self.model.embed(clips)
                embeddings.append(emb.numpy())
                cls_pred.append(self.model.classifier(emb).argmax(dim=1).numpy())
                head_pred.append(self.model.predict_head(emb).argmax(dim=1).numpy())
                labels.extend(y for _, y in chunk)
        self.model.train()
        cls_pred = np.concatenate(cls_pred)
        head_pred = np.concatenate(head_pred)
        labels = np.array(labels)
        confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
        for truth, pred in zip(labels, cls_pred):
            confusion[truth, pred] += 1
        per_class = [float(confusion[i, i] / confusion[i].sum()) if confusion[i].sum() else 0.0
                     for i in range(n_classes)]
        return {
            "top1": float((cls_pred == labels).mean()),
            "head_top1": float((head_pred == labels).mean()),
            "per_class": per_class,
            "confusion": confusion,
            "embeddings": np.concatenate(embeddings),
            "labels": labels,
        }


def save_checkpoint(path, trainer):
    torch.save({
        "model": trainer.model.state_dict(),
        "optimizer": trainer.optimizer.state_dict(),
        "sat": {
            "step": trainer.sat.step,
            "tau_global": trainer.sat.tau_global,
            "p_local": trainer.sat.p_local,
            "h_tilde": trainer.sat.h_tilde,
            "lambda_de": trainer.sat.lambda_de,
        },
        "step": trainer.step,
        "config": config_to_flat(trainer.config),
        "config_hash": config_hash(trainer.config),
    }, path)


def load_checkpoint(path, trainer):
    """Restore a trainer in place; a config-hash mismatch warns, not errors."""
    payload = torch.load(path, weights_only=False)
    if payload["config_hash"] != config_hash(trainer.config):
        logger.warning("checkpoint %s was written with a different config (hash %s != %s)",
                       path, payload["config_hash"], config_hash(trainer.config))
    trainer.model.load_state_dict(payload["model"])
    trainer.optimizer.load_state_dict(payload["optimizer"])
    sat = payload["sat"]
    trainer.sat = SatState(step=sat["step"], tau_global=sat["tau_global"],
                           p_local=sat["p_local"], h_tilde=sat["h_tilde"],
                           lambda_de=sat["lambda_de"])
    trainer.step = payload["step"]
    return payload
