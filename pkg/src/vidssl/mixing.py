"""Cross-set clip interpolation and the spatial cut-and-paste ablation variant."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, GeometryError, ValidationError


@dataclass
class MixedBatch:
    clips: np.ndarray  # [B, C, T, W, H]
    soft_labels: np.ndarray  # [B, N], rows on the simplex
    disc_targets: np.ndarray  # [B], each 1 - lambda_m
    lambda_m: float


def sample_lambda(alpha, rng):
    """One Beta(alpha, alpha) draw, shared by the whole step's batch."""
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be > 0, got {alpha}")
    return float(rng.beta(alpha, alpha))


def _one_hot(labels, n_classes):
    out = np.zeros((len(labels), n_classes), dtype=np.float64)
    out[np.arange(len(labels)), labels] = 1.0
    return out


def vcsa(labeled_clips, labels, unlabeled_clips, pseudo_labels, lambda_m, n_classes):
    """Frame-aligned convex interpolation of labeled and unlabeled clips.

    Mixes pixels elementwise (frame t with frame t), labels as a convex
    combination of one-hot vectors, and assigns the discriminator target
    1 - lambda_m to every mixed sample.
    """
    labeled_clips = np.asarray(labeled_clips)
    unlabeled_clips = np.asarray(unlabeled_clips)
    if labeled_clips.shape[0] != unlabeled_clips.shape[0]:
        raise ValidationError(
            f"sub-batch counts differ: {labeled_clips.shape[0]} vs {unlabeled_clips.shape[0]}")
    if labeled_clips.shape[1:] != unlabeled_clips.shape[1:]:
        raise GeometryError(
            f"clip geometry mismatch: {labeled_clips.shape[1:]} vs {unlabeled_clips.shape[1:]}")
    labels = np.asarray(labels)
    pseudo_labels = np.asarray(pseudo_labels)
    if len(pseudo_labels) and (pseudo_labels.min() < 0 or pseudo_labels.max() >= n_classes):
        raise ValidationError("pseudo-labels out of class range")
    lam = float(lambda_m)
    if lam == 1.0:
        clips = labeled_clips.copy()
    elif lam == 0.0:
        clips = unlabeled_clips.copy()
    else:
        clips = lam * labeled_clips + (1.0 - lam) * unlabeled_clips
    soft = lam * _one_hot(labels, n_classes) + (1.0 - lam) * _one_hot(pseudo_labels, n_classes)
    targets = np.full(labeled_clips.shape[0], 1.0 - lam, dtype=np.float64)
    return MixedBatch(clips=clips.astype(labeled_clips.dtype, copy=False),
                      soft_labels=soft, disc_targets=targets, lambda_m=lam)


def videomix(labeled_clip, unlabeled_clip, rng):
    """Paste a random spatio-temporally constant rectangle of the labeled clip
    into the unlabeled clip.

    Returns (mixed clip, pasted-area fraction); the fraction plays the role of
    the mixing coefficient for labels. Degenerate rectangles are resampled.
    """
    labeled_clip = np.asarray(labeled_clip)
    unlabeled_clip = np.asarray(unlabeled_clip)
    if labeled_clip.shape != unlabeled_clip.shape:
        raise GeometryError(
            f"clip geometry mismatch: {labeled_clip.shape} vs {unlabeled_clip.shape}")
    c, t, w, h = labeled_clip.shape
    while True:
        x0, x1 = sorted(int(v) for v in rng.integers(0, w + 1, size=2))
        y0, y1 = sorted(int(v) for v in rng.integers(0, h + 1, size=2))
        if x1 > x0 and y1 > y0:
            break
    mixed = unlabeled_clip.copy()
    mixed[:, :, x0:x1, y0:y1] = labeled_clip[:, :, x0:x1, y0:y1]
    fraction = (x1 - x0) * (y1 - y0) / float(w * h)
    return mixed, fraction


def videomix_batch(labeled_clips, labels, unlabeled_clips, pseudo_labels, rng, n_classes):
    """VideoMix applied pairwise across a batch; averages the area fractions
    into a single effective lambda so downstream weighting mirrors vcsa."""
    clips = []
    fractions = []
    for i in range(labeled_clips.shape[0]):
        mixed, fraction = videomix(labeled_clips[i], unlabeled_clips[i], rng)
        clips.append(mixed)
        fractions.append(fraction)
    lam = float(np.mean(fractions)) if fractions else 0.0
    one_hot_y = _one_hot(np.asarray(labels), n_classes)
    one_hot_p = _one_hot(np.asarray(pseudo_labels), n_classes)
    fr = np.asarray(fractions)[:, None]
    soft = fr * one_hot_y + (1.0 - fr) * one_hot_p
    targets = 1.0 - fr[:, 0]
    return MixedBatch(clips=np.stack(clips), soft_labels=soft,
                      disc_targets=targets, lambda_m=lam)
