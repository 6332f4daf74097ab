"""Self-adaptive threshold (SAT) statistics and pseudo-label masking.

Tracks an EMA global threshold, EMA class-probability vector and EMA
pseudo-label histogram; derives per-class thresholds by max-normalizing the
class probabilities. A fixed-threshold mode covers the ablation variant.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, ValidationError

SIMPLEX_TOLERANCE = 1e-5


@dataclass(frozen=True)
class SatState:
    step: int
    tau_global: float
    p_local: np.ndarray  # EMA of mean predicted probabilities, on the simplex
    h_tilde: np.ndarray  # EMA of pseudo-label histograms, on the simplex
    lambda_de: float

    @property
    def n_classes(self):
        return len(self.p_local)


@dataclass(frozen=True)
class MaskResult:
    mask: np.ndarray  # bool [n]
    pseudo_classes: np.ndarray  # int [n]
    confidences: np.ndarray  # float [n]

    @property
    def mask_rate(self):
        return float(self.mask.mean()) if len(self.mask) else 0.0


def sat_init(n_classes, lambda_de):
    """Uniform start: global threshold 1/N, both EMA vectors uniform."""
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    if not 0.0 < lambda_de < 1.0:
        raise ConfigurationError(f"lambda_de must be in (0, 1), got {lambda_de}")
    uniform = np.full(n_classes, 1.0 / n_classes, dtype=np.float64)
    return SatState(step=0, tau_global=1.0 / n_classes,
                    p_local=uniform.copy(), h_tilde=uniform.copy(),
                    lambda_de=float(lambda_de))


def _check_simplex(q_batch, n_classes):
    q = np.asarray(q_batch, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != n_classes:
        raise ValidationError(f"expected [n, {n_classes}] probabilities, got shape {q.shape}")
    if len(q) and (q.min() < -SIMPLEX_TOLERANCE
                   or np.abs(q.sum(axis=1) - 1.0).max() > SIMPLEX_TOLERANCE):
        raise ValidationError("probability rows are off the simplex")
    return q


def sat_update(state, q_batch):
    """One EMA step over a batch of weak-view probability rows.

    An empty batch advances the step counter without touching statistics so
    the counter stays aligned with the trainer's step counter.
    """
    q = _check_simplex(q_batch, state.n_classes)
    if len(q) == 0:
        return replace(state, step=state.step + 1)
    decay = state.lambda_de
    tau = decay * state.tau_global + (1.0 - decay) * float(q.max(axis=1).mean())
    p_local = decay * state.p_local + (1.0 - decay) * q.mean(axis=0)
    hist = np.bincount(q.argmax(axis=1), minlength=state.n_classes).astype(np.float64) / len(q)
    h_tilde = decay * state.h_tilde + (1.0 - decay) * hist
    return SatState(step=state.step + 1, tau_global=tau, p_local=p_local,
                    h_tilde=h_tilde, lambda_de=decay)


def class_thresholds(state):
    """Per-class thresholds: max-normalized EMA probabilities times the global threshold."""
    return (state.p_local / state.p_local.max()) * state.tau_global


def fixed_thresholds(tau_fixed, n_classes):
    """Constant threshold vector for the fixed-threshold ablation."""
    if not 1.0 / n_classes < tau_fixed < 1.0:
        raise ConfigurationError(
            f"fixed threshold {tau_fixed} outside (1/{n_classes}, 1)")
    return np.full(n_classes, float(tau_fixed), dtype=np.float64)


def compute_mask(q_batch, thresholds):
    """Keep samples whose top confidence meets its class threshold (ties -> lowest index)."""
    thresholds = np.asarray(thresholds, dtype=np.float64)
    q = np.asarray(q_batch, dtype=np.float64)
    if len(q) == 0:
        empty = np.zeros(0)
        return MaskResult(mask=empty.astype(bool), pseudo_classes=empty.astype(np.int64),
                          confidences=empty)
    pseudo = q.argmax(axis=1)
    confidence = q.max(axis=1)
    mask = confidence >= thresholds[pseudo]
    return MaskResult(mask=mask, pseudo_classes=pseudo.astype(np.int64), confidences=confidence)
