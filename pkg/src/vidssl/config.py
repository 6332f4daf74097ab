"""Flat dotted-key run configuration, file parsing, overrides and hashing."""

import hashlib
import logging
from dataclasses import dataclass, field, fields

from .errors import ConfigurationError

logger = logging.getLogger(__name__)


def _parse_rho(text):
    text = str(text)
    return text if text == "lambda_m" else float(text)


def _parse_widths(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(","))


def _parse_bool(text):
    if isinstance(text, bool):
        return text
    if str(text).lower() in ("true", "1", "yes"):
        return True
    if str(text).lower() in ("false", "0", "no"):
        return False
    raise ConfigurationError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    # clip geometry
    num_classes: int = 2
    channels: int = 3
    frames: int = 8
    width: int = 32
    height: int = 32
    # optimization
    batch_size: int = 6
    mu: int = 4
    lr: float = 0.03
    momentum: float = 0.9
    weight_decay: float = 0.0005
    epochs: int = 80
    eval_interval: int = 2
    seed: int = 0
    # thresholding
    threshold_mode: str = "sat"  # sat | fixed
    fixed_threshold: float = 0.95
    lambda_de: float = 0.95
    # mixing
    mixing_mode: str = "vcsa"  # vcsa | videomix | off
    alpha: float = 0.75
    # augmentation
    weak_mode: str = "flip_only"
    strong_n: int = 2
    magnitude_min: float = 0.0
    magnitude_max: float = 1.0
    cutout: bool = True
    # adversarial branch
    adversarial_mode: str = "grl"  # grl | joint_min
    grl_coefficient: float = 1.0
    # loss weights
    omega_m: float = 1.0
    omega_f: float = 0.01
    omega_a: float = 1.0
    rho: object = 1.0  # float or "lambda_m"
    # model
    preset: str = "residual3d_10"
    embed_dim: int = 64
    widths: tuple = (8, 16, 32, 64)
    # synthetic benchmark
    synth_n_labeled_per_class: int = 10
    synth_n_unlabeled: int = 180
    synth_n_test: int = 40
    synth_noise_std: float = 0.3
    synth_confuser_fraction: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1 or self.mu < 1:
            raise ConfigurationError("batch_size and mu must be >= 1")
        if self.lr <= 0:
            raise ConfigurationError("lr must be > 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")

    @property
    def geometry(self):
        return (self.channels, self.frames, self.width, self.height)


# dotted key -> (attribute, parser)
FLAT_KEYS = {
    "data.num_classes": ("num_classes", int),
    "data.channels": ("channels", int),
    "data.frames": ("frames", int),
    "data.width": ("width", int),
    "data.height": ("height", int),
    "train.batch_size": ("batch_size", int),
    "train.mu": ("mu", int),
    "train.lr": ("lr", float),
    "train.momentum": ("momentum", float),
    "train.weight_decay": ("weight_decay", float),
    "train.epochs": ("epochs", int),
    "train.eval_interval": ("eval_interval", int),
    "train.seed": ("seed", int),
    "threshold.mode": ("threshold_mode", str),
    "threshold.fixed": ("fixed_threshold", float),
    "threshold.lambda_de": ("lambda_de", float),
    "mixing.mode": ("mixing_mode", str),
    "mixing.alpha": ("alpha", float),
    "augment.weak_mode": ("weak_mode", str),
    "augment.strong_n": ("strong_n", int),
    "augment.magnitude_min": ("magnitude_min", float),
    "augment.magnitude_max": ("magnitude_max", float),
    "augment.cutout": ("cutout", _parse_bool),
    "adversarial.mode": ("adversarial_mode", str),
    "adversarial.grl_coefficient": ("grl_coefficient", float),
    "loss.omega_m": ("omega_m", float),
    "loss.omega_f": ("omega_f", float),
    "loss.omega_a": ("omega_a", float),
    "loss.rho": ("rho", _parse_rho),
    "model.preset": ("preset", str),
    "model.embed_dim": ("embed_dim", int),
    "model.widths": ("widths", _parse_widths),
    "synth.n_labeled_per_class": ("synth_n_labeled_per_class", int),
    "synth.n_unlabeled": ("synth_n_unlabeled", int),
    "synth.n_test": ("synth_n_test", int),
    "synth.noise_std": ("synth_noise_std", float),
    "synth.confuser_fraction": ("synth_confuser_fraction", float),
}

_ATTR_TO_KEY = {attr: key for key, (attr, _) in FLAT_KEYS.items()}


def config_to_flat(config):
    """Serialize a RunConfig into the flat dotted-key representation."""
    out = {}
    for f in fields(config):
        key = _ATTR_TO_KEY[f.name]
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        out[key] = str(value)
    return out


def config_from_flat(flat):
    """Build a RunConfig from dotted-key strings; unknown keys error."""
    kwargs = {}
    for key, value in flat.items():
        if key not in FLAT_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
        attr, parser = FLAT_KEYS[key]
        try:
            kwargs[attr] = parser(value)
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad value for {key}: {value!r} ({exc})") from exc
    return RunConfig(**kwargs)


def parse_config_file(path):
    """Read `key = value` lines; '#' starts a comment, blank lines ignored."""
    flat = {}
    with open(path) as handle:
        for lineno, line in enumerate(handle, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigurationError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            flat[key] = value
    return flat


def apply_overrides(flat, overrides):
    """Apply `key=value` override strings in order; last one wins with a notice."""
    out = dict(flat)
    seen = set()
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"override {item!r} is not key=value")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in FLAT_KEYS:
            raise ConfigurationError(f"unknown config key {key!r}")
        if key in seen:
            logger.info("override for %s given more than once; last value wins (%s)", key, value)
        seen.add(key)
        out[key] = value
    return out


def config_hash(config):
    """Stable hash of the resolved flat config, stored in checkpoints."""
    flat = config_to_flat(config)
    text = "\n".join(f"{k}={flat[k]}" for k in sorted(flat))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_resolved_config(config, path):
    flat = config_to_flat(config)
    with open(path, "w") as handle:
        for key in sorted(flat):
            handle.write(f"{key} = {flat[key]}\n")
