"""Dataset scanning, clip decoding, synthetic clip generation and batch assembly.

Clips are stored as float32 arrays of shape [C, T, W, H] with values in [0, 1].
Axis 2 indexes image columns (width), axis 3 indexes image rows (height).
"""

import os
from dataclasses import dataclass, field

import cv2
import numpy as np

from .errors import ConfigurationError, DatasetStructureError, DecodeError, ValidationError

VIDEO_EXTENSIONS = (".mp4", ".avi")


@dataclass(frozen=True)
class VideoClip:
    """A single decoded clip plus bookkeeping."""

    pixels: np.ndarray  # [C, T, W, H], float32 in [0, 1]
    source_id: str
    fps: float = 30.0

    def __post_init__(self):
        if self.pixels.ndim != 4:
            raise ValidationError(f"clip {self.source_id}: expected 4 axes, got {self.pixels.ndim}")
        if min(self.pixels.shape) < 1:
            raise ValidationError(f"clip {self.source_id}: degenerate shape {self.pixels.shape}")
        lo, hi = float(self.pixels.min()), float(self.pixels.max())
        if lo < 0.0 or hi > 1.0:
            raise ValidationError(f"clip {self.source_id}: pixel range [{lo}, {hi}] outside [0, 1]")

    @property
    def shape(self):
        return self.pixels.shape


class ClipSource:
    """A clip that lives either on disk or in memory."""

    def __init__(self, source_id, path=None, pixels=None):
        if (path is None) == (pixels is None):
            raise ValidationError("ClipSource needs exactly one of path or pixels")
        self.source_id = source_id
        self.path = path
        self._pixels = pixels

    def load(self, frames, width, height):
        if self._pixels is not None:
            c, t, w, h = self._pixels.shape
            if (t, w, h) != (frames, width, height):
                raise ValidationError(
                    f"{self.source_id}: in-memory clip is {(t, w, h)}, wanted {(frames, width, height)}")
            return self._pixels
        return load_clip(self.path, frames, width, height, source_id=self.source_id).pixels


@dataclass
class DatasetIndex:
    """Immutable catalogue of labeled and unlabeled clip sources."""

    labeled: list  # [(ClipSource, class_id)]
    unlabeled: list  # [ClipSource]
    class_names: list
    # Hidden ground truth for unlabeled clips; synthetic runs only, used to
    # score pseudo-label precision. None for real data.
    unlabeled_labels: list = None

    def __post_init__(self):
        n = len(self.class_names)
        for _, y in self.labeled:
            if not 0 <= y < n:
                raise ValidationError(f"class id {y} out of range for {n} classes")
        labeled_ids = {s.source_id for s, _ in self.labeled}
        unlabeled_ids = {s.source_id for s in self.unlabeled}
        overlap = labeled_ids & unlabeled_ids
        if overlap:
            raise DatasetStructureError(f"clips present in both labeled and unlabeled sets: {sorted(overlap)[:3]}")


@dataclass
class BatchPair:
    """One training step worth of data: B labeled clips and mu*B unlabeled clips."""

    labeled_clips: np.ndarray  # [B, C, T, W, H]
    labels: np.ndarray  # [B]
    unlabeled_clips: np.ndarray  # [mu*B, C, T, W, H]
    labeled_ids: list = field(default_factory=list)
    unlabeled_ids: list = field(default_factory=list)
    unlabeled_true: np.ndarray = None  # synthetic runs only


@dataclass
class SynthSpec:
    """Parameters of the synthetic fire-like benchmark."""

    n_labeled_per_class: int = 10
    n_unlabeled: int = 180
    n_test: int = 40
    frames: int = 8
    width: int = 32
    height: int = 32
    channels: int = 3
    noise_std: float = 0.3
    confuser_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("n_labeled_per_class", "n_unlabeled", "n_test"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")
        if self.noise_std < 0:
            raise ConfigurationError("noise_std must be >= 0")
        if not 0.0 <= self.confuser_fraction <= 1.0:
            raise ConfigurationError("confuser_fraction must be in [0, 1]")


def frame_indices(n_available, n_wanted):
    """Uniformly strided frame selection; repeats frames for short clips."""
    return [(j * n_available) // n_wanted for j in range(n_wanted)]


def load_clip(path, frames, width, height, source_id=None):
    """Decode a video file into a [C, T, W, H] clip at the target geometry.

    Frames are picked with deterministic uniform striding, resized bilinearly
    and scaled to [0, 1].
    """
    cap = cv2.VideoCapture(str(path))
    if not cap.isOpened():
        raise DecodeError(f"cannot open video {path}")
    raw = []
    while True:
        ok, frame = cap.read()
        if not ok:
            break
        raw.append(frame)
    fps = cap.get(cv2.CAP_PROP_FPS) or 30.0
    cap.release()
    if not raw:
        raise DecodeError(f"no decodable frames in {path}")
    picked = []
    for idx in frame_indices(len(raw), frames):
        frame = cv2.resize(raw[idx], (width, height), interpolation=cv2.INTER_LINEAR)
        frame = cv2.cvtColor(frame, cv2.COLOR_BGR2RGB)
        # [rows, cols, C] -> [C, cols, rows]
        picked.append(frame.transpose(2, 1, 0))
    pixels = np.stack(picked, axis=1).astype(np.float32) / 255.0
    return VideoClip(pixels=pixels, source_id=source_id or str(path), fps=float(fps))


def scan_dataset(root, n_classes):
    """Build a DatasetIndex from the `<root>/labeled/<class>/`, `<root>/unlabeled/` layout."""
    labeled_dir = os.path.join(root, "labeled")
    unlabeled_dir = os.path.join(root, "unlabeled")
    if not os.path.isdir(labeled_dir) or not os.path.isdir(unlabeled_dir):
        raise DatasetStructureError(f"{root} must contain labeled/ and unlabeled/ directories")
    class_names = sorted(d for d in os.listdir(labeled_dir)
                         if os.path.isdir(os.path.join(labeled_dir, d)))
    if len(class_names) != n_classes:
        raise ConfigurationError(
            f"found {len(class_names)} classes {class_names}, configured for {n_classes}")
    labeled = []
    for class_id, name in enumerate(class_names):
        class_dir = os.path.join(labeled_dir, name)
        for fname in sorted(os.listdir(class_dir)):
            if fname.lower().endswith(VIDEO_EXTENSIONS):
                path = os.path.join(class_dir, fname)
                labeled.append((ClipSource(os.path.relpath(path, root), path=path), class_id))
    unlabeled = []
    for fname in sorted(os.listdir(unlabeled_dir)):
        if fname.lower().endswith(VIDEO_EXTENSIONS):
            path = os.path.join(unlabeled_dir, fname)
            unlabeled.append(ClipSource(os.path.relpath(path, root), path=path))
    return DatasetIndex(labeled=labeled, unlabeled=unlabeled, class_names=class_names)


def _render_blob(img, cx, cy, radius, color, intensity):
    """Composite a soft disc onto img ([C, W, H]) via per-channel max."""
    c, w, h = img.shape
    xs = np.arange(w, dtype=np.float32)[:, None]
    ys = np.arange(h, dtype=np.float32)[None, :]
    dist = np.sqrt((xs - cx) ** 2 + (ys - cy) ** 2)
    edge = max(1.0, 0.3 * radius)
    profile = np.clip((radius - dist) / edge + 1.0, 0.0, 1.0) * intensity
    blob = color[:, None, None] * profile[None, :, :]
    np.maximum(img, blob, out=img)


def _sample_distractors(spec, rng):
    """0-2 static warm blobs shared by both classes as nuisance variation."""
    size = min(spec.width, spec.height)
    out = []
    for _ in range(int(rng.integers(0, 3))):
        out.append((rng.uniform(0.15, 0.85) * spec.width,
                    rng.uniform(0.15, 0.85) * spec.height,
                    rng.uniform(0.08, 0.16) * size,
                    np.array([1.0, rng.uniform(0.4, 0.7), rng.uniform(0.0, 0.2)],
                             dtype=np.float32),
                    rng.uniform(0.85, 1.0)))
    return out


def _render_distractors(img, distractors):
    for cx, cy, radius, color, intensity in distractors:
        _render_blob(img, cx, cy, radius, color, intensity)


def _fire_clip(spec, rng):
    """Warm blob whose radius grows monotonically across frames."""
    size = min(spec.width, spec.height)
    cx = rng.uniform(0.3, 0.7) * spec.width
    cy = rng.uniform(0.3, 0.7) * spec.height
    # static size ranges overlap the non-fire class: only the monotone growth
    # across frames separates the two
    r0 = rng.uniform(0.10, 0.18) * size
    r1 = r0 + rng.uniform(0.06, 0.12) * size
    color = np.array([1.0, rng.uniform(0.4, 0.7), rng.uniform(0.0, 0.2)], dtype=np.float32)
    intensity = rng.uniform(0.88, 1.0)
    background = rng.uniform(0.0, 0.25)
    distractors = _sample_distractors(spec, rng)
    frames = []
    for t in range(spec.frames):
        frac = t / max(1, spec.frames - 1)
        img = np.full((spec.channels, spec.width, spec.height), background, dtype=np.float32)
        _render_blob(img, cx, cy, r0 + frac * (r1 - r0), color, intensity)
        _render_distractors(img, distractors)
        frames.append(img)
    return np.stack(frames, axis=1)


def _nonfire_clip(spec, rng):
    """Constant-size warm moving blob; optionally a static warm confuser patch.

    Shares the fire palette on purpose: color alone cannot separate the
    classes, so the model has to pick up the growth-versus-motion dynamics.
    """
    size = min(spec.width, spec.height)
    cx = rng.uniform(0.2, 0.8) * spec.width
    cy = rng.uniform(0.2, 0.8) * spec.height
    vx = rng.uniform(-1.5, 1.5)
    vy = rng.uniform(-1.5, 1.5)
    radius = rng.uniform(0.12, 0.26) * size
    color = np.array([1.0, rng.uniform(0.4, 0.7), rng.uniform(0.0, 0.2)], dtype=np.float32)
    intensity = rng.uniform(0.88, 1.0)
    background = rng.uniform(0.0, 0.25)
    confuser = rng.random() < spec.confuser_fraction
    if confuser:
        ccx = rng.uniform(0.25, 0.75) * spec.width
        ccy = rng.uniform(0.25, 0.75) * spec.height
        cradius = rng.uniform(0.12, 0.30) * size
        ccolor = np.array([1.0, rng.uniform(0.4, 0.7), rng.uniform(0.0, 0.2)], dtype=np.float32)
        cintensity = rng.uniform(0.88, 1.0)
    distractors = _sample_distractors(spec, rng)
    frames = []
    for t in range(spec.frames):
        img = np.full((spec.channels, spec.width, spec.height), background, dtype=np.float32)
        _render_blob(img, cx + vx * t, cy + vy * t, radius, color, intensity)
        if confuser:
            _render_blob(img, ccx, ccy, cradius, ccolor, cintensity)
        _render_distractors(img, distractors)
        frames.append(img)
    return np.stack(frames, axis=1)


SYNTH_CLASS_NAMES = ["fire_like", "non_fire"]
_MAKERS = [_fire_clip, _nonfire_clip]


def _finish(pixels, spec, rng):
    if spec.noise_std > 0:
        pixels = pixels + rng.normal(0.0, spec.noise_std, size=pixels.shape).astype(np.float32)
    return np.clip(pixels, 0.0, 1.0).astype(np.float32)


def synth_generate(spec):
    """Generate the deterministic synthetic benchmark.

    Returns (DatasetIndex over in-memory clips, test set as a list of
    (VideoClip, class_id) pairs). Fully determined by spec.seed.
    """
    rng = np.random.default_rng(spec.seed)
    labeled = []
    for class_id in range(2):
        for i in range(spec.n_labeled_per_class):
            pixels = _finish(_MAKERS[class_id](spec, rng), spec, rng)
            sid = f"synth/labeled/{SYNTH_CLASS_NAMES[class_id]}_{i:04d}"
            labeled.append((ClipSource(sid, pixels=pixels), class_id))
    unlabeled = []
    unlabeled_labels = []
    for i in range(spec.n_unlabeled):
        class_id = int(rng.integers(0, 2))
        pixels = _finish(_MAKERS[class_id](spec, rng), spec, rng)
        unlabeled.append(ClipSource(f"synth/unlabeled/{i:04d}", pixels=pixels))
        unlabeled_labels.append(class_id)
    index = DatasetIndex(labeled=labeled, unlabeled=unlabeled,
                         class_names=list(SYNTH_CLASS_NAMES),
                         unlabeled_labels=unlabeled_labels)
    test = []
    per_class = spec.n_test // 2
    extra = spec.n_test - 2 * per_class
    for class_id in range(2):
        count = per_class + (extra if class_id == 0 else 0)
        for i in range(count):
            pixels = _finish(_MAKERS[class_id](spec, rng), spec, rng)
            sid = f"synth/test/{SYNTH_CLASS_NAMES[class_id]}_{i:04d}"
            test.append((VideoClip(pixels=pixels, source_id=sid), class_id))
    return index, test


def write_clip_video(path, pixels, fps=30.0):
    """Write a [C, T, W, H] clip as a lossless FFV1 .avi file."""
    c, t, w, h = pixels.shape
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"FFV1"), fps, (w, h))
    if not writer.isOpened():
        raise DecodeError(f"cannot open video writer for {path}")
    for i in range(t):
        frame = (pixels[:, i].transpose(2, 1, 0) * 255.0).round().astype(np.uint8)
        writer.write(cv2.cvtColor(frame, cv2.COLOR_RGB2BGR))
    writer.release()


def export_dataset(index, root, frames, width, height, test=None):
    """Materialize an index (and optional test set) into the on-disk layout.

    Uses the FFV1 lossless codec in an .avi container so decoding reproduces
    the source pixels up to uint8 quantization (1/255).
    """
    for name in index.class_names:
        os.makedirs(os.path.join(root, "labeled", name), exist_ok=True)
    os.makedirs(os.path.join(root, "unlabeled"), exist_ok=True)
    for i, (source, class_id) in enumerate(index.labeled):
        path = os.path.join(root, "labeled", index.class_names[class_id], f"clip_{i:04d}.avi")
        write_clip_video(path, source.load(frames, width, height))
    for i, source in enumerate(index.unlabeled):
        path = os.path.join(root, "unlabeled", f"clip_{i:04d}.avi")
        write_clip_video(path, source.load(frames, width, height))
    if test:
        for name in index.class_names:
            os.makedirs(os.path.join(root, "test", name), exist_ok=True)
        for i, (clip, class_id) in enumerate(test):
            path = os.path.join(root, "test", index.class_names[class_id], f"clip_{i:04d}.avi")
            write_clip_video(path, clip.pixels)


def scan_test_dir(root, class_names, frames, width, height):
    """Load a `<root>/test/<class>/` split exported by export_dataset."""
    test_dir = os.path.join(root, "test")
    if not os.path.isdir(test_dir):
        raise DatasetStructureError(f"{root} has no test/ directory")
    out = []
    for class_id, name in enumerate(class_names):
        class_dir = os.path.join(test_dir, name)
        if not os.path.isdir(class_dir):
            continue
        for fname in sorted(os.listdir(class_dir)):
            if fname.lower().endswith(VIDEO_EXTENSIONS):
                clip = load_clip(os.path.join(class_dir, fname), frames, width, height)
                out.append((clip, class_id))
    return out


def make_batches(index, batch_size, mu, epoch_seed, frames, width, height,
                 load_unlabeled=True):
    """Yield BatchPairs for one epoch over the unlabeled stream.

    The unlabeled list is shuffled once per epoch; the labeled list is
    shuffled and cycled (reshuffling on exhaustion) so the supervised term
    never starves. With no unlabeled data the stream degrades to plain
    supervised batches. Deterministic given epoch_seed.

    load_unlabeled=False keeps the step structure and shuffling identical but
    skips decoding the unlabeled pixels, for configurations whose losses never
    touch them.
    """
    if not index.labeled:
        raise ConfigurationError("no labeled clips available")
    rng = np.random.default_rng(epoch_seed)
    labeled_order = rng.permutation(len(index.labeled))
    labeled_pos = 0

    def next_labeled():
        nonlocal labeled_order, labeled_pos
        picked = []
        while len(picked) < batch_size:
            if labeled_pos >= len(labeled_order):
                labeled_order = rng.permutation(len(index.labeled))
                labeled_pos = 0
            picked.append(int(labeled_order[labeled_pos]))
            labeled_pos += 1
        return picked

    def stack_labeled(ids):
        clips = np.stack([index.labeled[i][0].load(frames, width, height) for i in ids])
        labels = np.array([index.labeled[i][1] for i in ids], dtype=np.int64)
        names = [index.labeled[i][0].source_id for i in ids]
        return clips, labels, names

    n_unlabeled = len(index.unlabeled)
    group = mu * batch_size
    if n_unlabeled == 0:
        # Pure supervised fallback: one epoch over the labeled list.
        c, t, w, h = index.labeled[0][0].load(frames, width, height).shape
        for _ in range(len(index.labeled) // batch_size):
            ids = next_labeled()
            clips, labels, names = stack_labeled(ids)
            yield BatchPair(labeled_clips=clips, labels=labels,
                            unlabeled_clips=np.zeros((0, c, t, w, h), dtype=np.float32),
                            labeled_ids=names, unlabeled_ids=[])
        return
    unlabeled_order = rng.permutation(n_unlabeled)
    for step in range(n_unlabeled // group):
        u_ids = [int(i) for i in unlabeled_order[step * group:(step + 1) * group]]
        l_ids = next_labeled()
        clips, labels, names = stack_labeled(l_ids)
        if load_unlabeled:
            u_clips = np.stack([index.unlabeled[i].load(frames, width, height)
                                for i in u_ids])
        else:
            c, t, w, h = clips.shape[1:]
            u_clips = np.zeros((0, c, t, w, h), dtype=np.float32)
        u_true = None
        if index.unlabeled_labels is not None:
            u_true = np.array([index.unlabeled_labels[i] for i in u_ids], dtype=np.int64)
        yield BatchPair(labeled_clips=clips, labels=labels, unlabeled_clips=u_clips,
                        labeled_ids=names,
                        unlabeled_ids=[index.unlabeled[i].source_id for i in u_ids],
                        unlabeled_true=u_true)


def steps_per_epoch(index, batch_size, mu):
    if len(index.unlabeled) == 0:
        return len(index.labeled) // batch_size
    return len(index.unlabeled) // (mu * batch_size)
