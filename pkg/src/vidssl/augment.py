"""Weak and strong clip augmentation.

Every transform draws its parameters once per clip and applies the identical
parameterized op to all T frames, so the temporal ordering of a clip is never
perturbed. All ops map [0, 1] pixels back into [0, 1].
"""

from dataclasses import dataclass, field

import cv2
import numpy as np

from .data import VideoClip
from .errors import ConfigurationError

WEAK_MODES = ("flip_only", "random_crop_flip", "sharpen", "smooth")

_SHARPEN_KERNEL = np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float32)
_SMOOTH_KERNEL = np.full((3, 3), 1.0 / 9.0, dtype=np.float32)


@dataclass
class AugmentPolicy:
    weak_mode: str = "flip_only"
    strong_ops: list = field(default_factory=lambda: list(DEFAULT_STRONG_OPS))
    strong_n: int = 2
    strong_magnitude_range: tuple = (0.0, 1.0)
    cutout_enabled: bool = True

    def __post_init__(self):
        if self.weak_mode not in WEAK_MODES:
            raise ConfigurationError(f"unknown weak mode {self.weak_mode!r}")
        if self.strong_n < 1:
            raise ConfigurationError("strong_n must be >= 1")
        lo, hi = self.strong_magnitude_range
        if not 0.0 <= lo < hi:
            raise ConfigurationError("magnitude range must be non-degenerate within [0, M]")
        for name in self.strong_ops:
            if name not in STRONG_OPS:
                raise ConfigurationError(f"unknown strong op {name!r}")


def _unwrap(clip):
    if isinstance(clip, VideoClip):
        return clip.pixels, clip
    return clip, None


def _rewrap(pixels, template):
    if template is None:
        return pixels
    return VideoClip(pixels=pixels, source_id=template.source_id, fps=template.fps)


def _per_frame(pixels, fn):
    return np.stack([fn(pixels[:, t]) for t in range(pixels.shape[1])], axis=1)


def _filter_frames(pixels, kernel):
    def fn(frame):
        # frame is [C, W, H]; filter2D works per channel on [W, H] planes
        return np.stack([cv2.filter2D(frame[c], -1, kernel, borderType=cv2.BORDER_REPLICATE)
                         for c in range(frame.shape[0])])
    return np.clip(_per_frame(pixels, fn), 0.0, 1.0)


def _warp_frames(pixels, matrix):
    c, t, w, h = pixels.shape

    def fn(frame):
        # warpAffine expects [rows, cols]; our frames are [C, cols, rows]
        out = np.stack([cv2.warpAffine(frame[ch].T, matrix, (w, h),
                                       flags=cv2.INTER_LINEAR,
                                       borderMode=cv2.BORDER_CONSTANT, borderValue=0.0).T
                        for ch in range(c)])
        return out
    return np.clip(_per_frame(pixels, fn), 0.0, 1.0)


def _grayscale(frame):
    weights = np.array([0.299, 0.587, 0.114], dtype=np.float32)
    if frame.shape[0] == 3:
        return np.tensordot(weights, frame, axes=1)[None].repeat(3, axis=0)
    return frame.mean(axis=0, keepdims=True).repeat(frame.shape[0], axis=0)


def _blend_op(reference_fn):
    def op(pixels, magnitude, sign):
        factor = 1.0 + sign * 0.8 * magnitude

        def fn(frame):
            ref = reference_fn(frame)
            return ref + factor * (frame - ref)
        return np.clip(_per_frame(pixels, fn), 0.0, 1.0)
    return op


def _op_brightness(pixels, magnitude, sign):
    return np.clip(pixels + sign * 0.6 * magnitude, 0.0, 1.0)


def _op_contrast(pixels, magnitude, sign):
    mean = pixels.mean()  # one reference for the whole clip
    return np.clip(mean + (1.0 + sign * 0.8 * magnitude) * (pixels - mean), 0.0, 1.0)


_op_color = _blend_op(_grayscale)
_op_sharpness = _blend_op(lambda frame: np.stack(
    [cv2.filter2D(frame[c], -1, _SMOOTH_KERNEL, borderType=cv2.BORDER_REPLICATE)
     for c in range(frame.shape[0])]))


def _op_posterize(pixels, magnitude, sign):
    bits = 8 - int(round(4 * magnitude))
    if bits >= 8:
        return pixels
    levels = float(2 ** bits)
    return np.floor(pixels * levels) / levels


def _op_solarize(pixels, magnitude, sign):
    threshold = 1.0 - magnitude
    return np.where(pixels > threshold, 1.0 - pixels, pixels)


def _op_equalize(pixels, magnitude, sign):
    def fn(frame):
        out = np.stack([cv2.equalizeHist((frame[c] * 255).astype(np.uint8))
                        for c in range(frame.shape[0])])
        return out.astype(np.float32) / 255.0
    return _per_frame(pixels, fn)


def _op_rotate(pixels, magnitude, sign):
    c, t, w, h = pixels.shape
    angle = sign * 30.0 * magnitude
    matrix = cv2.getRotationMatrix2D((w / 2.0, h / 2.0), angle, 1.0)
    return _warp_frames(pixels, matrix)


def _shear_matrix(sx, sy):
    return np.array([[1.0, sx, 0.0], [sy, 1.0, 0.0]], dtype=np.float32)


def _op_shear_x(pixels, magnitude, sign):
    return _warp_frames(pixels, _shear_matrix(sign * 0.3 * magnitude, 0.0))


def _op_shear_y(pixels, magnitude, sign):
    return _warp_frames(pixels, _shear_matrix(0.0, sign * 0.3 * magnitude))


def _op_translate_x(pixels, magnitude, sign):
    shift = sign * 0.3 * magnitude * pixels.shape[2]
    return _warp_frames(pixels, np.array([[1, 0, shift], [0, 1, 0]], dtype=np.float32))


def _op_translate_y(pixels, magnitude, sign):
    shift = sign * 0.3 * magnitude * pixels.shape[3]
    return _warp_frames(pixels, np.array([[1, 0, 0], [0, 1, shift]], dtype=np.float32))


# name -> (op, signed, identity_at_zero_magnitude)
STRONG_OPS = {
    "brightness": (_op_brightness, True, True),
    "contrast": (_op_contrast, True, True),
    "color": (_op_color, True, True),
    "sharpness": (_op_sharpness, True, True),
    "posterize": (_op_posterize, False, True),
    "solarize": (_op_solarize, False, True),
    "equalize": (_op_equalize, False, False),
    "rotate": (_op_rotate, True, True),
    "shear_x": (_op_shear_x, True, True),
    "shear_y": (_op_shear_y, True, True),
    "translate_x": (_op_translate_x, True, True),
    "translate_y": (_op_translate_y, True, True),
}

DEFAULT_STRONG_OPS = tuple(STRONG_OPS)


def flip_width(pixels):
    """Mirror every frame horizontally (width axis)."""
    return pixels[:, :, ::-1, :].copy()


def weak_augment(clip, mode, rng):
    """Mild clip-level perturbation; one random draw per clip."""
    pixels, template = _unwrap(clip)
    if mode == "flip_only":
        if rng.random() < 0.5:
            pixels = flip_width(pixels)
    elif mode == "random_crop_flip":
        c, t, w, h = pixels.shape
        pad_w, pad_h = max(1, w // 8), max(1, h // 8)
        padded = np.pad(pixels, ((0, 0), (0, 0), (pad_w, pad_w), (pad_h, pad_h)), mode="reflect")
        ox = int(rng.integers(0, 2 * pad_w + 1))
        oy = int(rng.integers(0, 2 * pad_h + 1))
        pixels = padded[:, :, ox:ox + w, oy:oy + h].copy()
        if rng.random() < 0.5:
            pixels = flip_width(pixels)
    elif mode == "sharpen":
        pixels = _filter_frames(pixels, _SHARPEN_KERNEL)
    elif mode == "smooth":
        pixels = _filter_frames(pixels, _SMOOTH_KERNEL)
    else:
        raise ConfigurationError(f"unknown weak mode {mode!r}")
    return _rewrap(np.ascontiguousarray(pixels, dtype=np.float32), template)


def cutout(pixels, rng, fraction=0.3, fill=0.5):
    """Erase one rectangle at the same location in every frame."""
    c, t, w, h = pixels.shape
    cw = max(1, int(round(fraction * w)))
    ch = max(1, int(round(fraction * h)))
    x0 = int(rng.integers(0, w - cw + 1))
    y0 = int(rng.integers(0, h - ch + 1))
    out = pixels.copy()
    out[:, :, x0:x0 + cw, y0:y0 + ch] = fill
    return out


def strong_augment(clip, policy, rng):
    """RandAugment-style pipeline with per-clip parameter sampling."""
    pixels, template = _unwrap(clip)
    if not policy.strong_ops:
        raise ConfigurationError("strong_ops must not be empty")
    names = [policy.strong_ops[int(i)]
             for i in rng.integers(0, len(policy.strong_ops), size=policy.strong_n)]
    lo, hi = policy.strong_magnitude_range
    out = pixels
    for name in names:
        op, signed, _ = STRONG_OPS[name]
        magnitude = float(rng.uniform(lo, hi))
        sign = int(rng.choice([-1, 1])) if signed else 1
        out = op(out, magnitude, sign)
    if policy.cutout_enabled:
        out = cutout(out, rng)
    return _rewrap(np.ascontiguousarray(out, dtype=np.float32), template)


def paired_views(unlabeled_clips, policy, rngs):
    """Weak and strong views of an unlabeled batch.

    rngs holds one generator per sample; each sample's draws depend only on
    its own stream, so permuting (clips, rngs) together permutes the outputs.
    """
    n = unlabeled_clips.shape[0]
    if len(rngs) != n:
        raise ConfigurationError(f"need {n} rng streams, got {len(rngs)}")
    weak, strong = [], []
    for i in range(n):
        weak_rng, strong_rng = rngs[i].spawn(2)
        weak.append(weak_augment(unlabeled_clips[i], policy.weak_mode, weak_rng))
        strong.append(strong_augment(unlabeled_clips[i], policy, strong_rng))
    empty = np.zeros((0,) + unlabeled_clips.shape[1:], dtype=np.float32)
    return (np.stack(weak) if weak else empty, np.stack(strong) if strong else empty)
