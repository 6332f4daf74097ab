"""The five training objectives and their weighted combination.

All cross-entropies operate on probability rows; logs are floored at EPS.
The weak-view probabilities feeding the pseudo-label machinery are detached,
so no continuous gradient flows through them.
"""

from dataclasses import dataclass

import numpy as np
import torch

from .errors import NumericError, ValidationError
from .thresholds import compute_mask

EPS = 1e-8


@dataclass
class LossWeights:
    omega_m: float = 1.0
    omega_f: float = 0.01
    omega_a: float = 1.0
    rho: object = 1.0  # float, or the string "lambda_m" to track the mixing draw

    def resolve_rho(self, lambda_m):
        if self.rho == "lambda_m":
            return float(lambda_m)
        return float(self.rho)


@dataclass
class LossBundle:
    l_cs: float
    l_ps: float
    l_match: float
    l_fair: float
    l_align: float
    total: float
    mask_rate: float

    def as_dict(self):
        return {"L_cs": self.l_cs, "L_ps": self.l_ps, "L_match": self.l_match,
                "L_fair": self.l_fair, "L_align": self.l_align, "total": self.total,
                "mask_rate": self.mask_rate}


def _as_tensor(x):
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=torch.get_default_dtype())


def _log(p):
    return torch.log(torch.clamp(p, min=EPS))


def supervised_losses(cls_probs, head_probs, labels):
    """Mean cross-entropy of each labeled head against the integer labels."""
    cls_probs, head_probs = _as_tensor(cls_probs), _as_tensor(head_probs)
    labels = torch.as_tensor(np.asarray(labels), dtype=torch.long)
    n_classes = cls_probs.shape[-1]
    if len(labels) and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValidationError("label out of class range")
    idx = torch.arange(len(labels))
    l_cs = -_log(cls_probs[idx, labels]).mean()
    l_ps = -_log(head_probs[idx, labels]).mean()
    return l_cs, l_ps


def consistency_loss(weak_probs, strong_probs, thresholds):
    """Masked pseudo-label cross-entropy on strong views, divided by the full
    unlabeled batch size. Returns (loss, mask_rate)."""
    strong_probs = _as_tensor(strong_probs)
    weak = _as_tensor(weak_probs).detach()
    n = weak.shape[0]
    if n == 0:
        return strong_probs.sum() * 0.0, 0.0
    result = compute_mask(weak.cpu().numpy(), thresholds)
    mask = torch.as_tensor(result.mask, dtype=strong_probs.dtype)
    pseudo = torch.as_tensor(result.pseudo_classes, dtype=torch.long)
    ce = -_log(strong_probs[torch.arange(n), pseudo])
    return (mask * ce).sum() / n, result.mask_rate


def fairness_loss(state, weak_probs, strong_probs, thresholds):
    """Negative cross-entropy between the sum-normalized EMA ratio and the
    batch ratio of masked strong-view statistics. 0 when nothing is masked."""
    strong_probs = _as_tensor(strong_probs)
    weak = _as_tensor(weak_probs).detach()
    if weak.shape[0] == 0:
        return strong_probs.sum() * 0.0
    result = compute_mask(weak.cpu().numpy(), thresholds)
    if not result.mask.any():
        return strong_probs.sum() * 0.0
    mask = torch.as_tensor(result.mask, dtype=strong_probs.dtype)
    p_bar = (mask[:, None] * strong_probs).sum(dim=0)
    strong_pseudo = strong_probs.detach().argmax(dim=1).cpu().numpy()
    hist = np.bincount(strong_pseudo[result.mask], minlength=strong_probs.shape[1])
    h_bar = torch.as_tensor(hist.astype(np.float64) / max(1, hist.sum()),
                            dtype=strong_probs.dtype)
    ema_ratio = torch.as_tensor(state.p_local / np.clip(state.h_tilde, EPS, None),
                                dtype=strong_probs.dtype)
    a = ema_ratio / ema_ratio.sum()
    ratio = p_bar / torch.clamp(h_bar, min=EPS)
    b = ratio / ratio.sum()
    return (a * _log(b)).sum()


def align_loss(cls_probs, soft_labels, disc_probs, disc_targets, rho, lambda_m):
    """Mixed-sample objective: rho-weighted soft-label cross-entropy on the
    classifier plus lambda_m-weighted soft binary cross-entropy on the
    discriminator."""
    cls_probs = _as_tensor(cls_probs)
    soft = _as_tensor(soft_labels).to(cls_probs.dtype)
    disc_probs = _as_tensor(disc_probs)
    targets = _as_tensor(disc_targets).to(disc_probs.dtype)
    ce = -(soft * _log(cls_probs)).sum(dim=1)
    bce = -(targets * _log(disc_probs) + (1.0 - targets) * _log(1.0 - disc_probs))
    return (rho * ce + lambda_m * bce).mean()


def total_loss(l_cs, l_ps, l_match, l_fair, l_align, weights):
    """Weighted sum: omega_m*(L_ps + L_match) + omega_f*L_fair + omega_a*L_align + L_cs."""
    parts = {"L_cs": l_cs, "L_ps": l_ps, "L_match": l_match,
             "L_fair": l_fair, "L_align": l_align}
    resolved = {}
    for name, value in parts.items():
        if isinstance(value, torch.Tensor):
            value = value.double()  # exact weighted-sum identity for logging
        if not np.isfinite(float(value.detach()) if isinstance(value, torch.Tensor)
                           else float(value)):
            raise NumericError(f"non-finite loss term {name}")
        resolved[name] = value
    return (weights.omega_m * (resolved["L_ps"] + resolved["L_match"])
            + weights.omega_f * resolved["L_fair"]
            + weights.omega_a * resolved["L_align"]
            + resolved["L_cs"])
