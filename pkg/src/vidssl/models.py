"""Model surface: shared 3D feature extractor, two classification heads,
a discriminator, and the gradient-reversal boundary between them."""

import torch
import torch.nn as nn

from .errors import ConfigurationError, GeometryError, NumericError

ADVERSARIAL_MODES = ("grl", "joint_min")

# (temporal, spatial) stride per stage; overall downsampling 4x in time, 8x in space
STAGE_STRIDES = [(1, 1), (1, 2), (2, 2), (2, 2)]
TEMPORAL_FACTOR = 4
SPATIAL_FACTOR = 8

PRESET_BLOCKS = {
    "residual3d_10": (1, 1, 1, 1),
    "residual3d_18": (2, 2, 2, 2),
}


class _GradientReversal(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, coefficient):
        ctx.coefficient = coefficient
        return x.view_as(x)

    @staticmethod
    def backward(ctx, grad_output):
        return grad_output.neg() * ctx.coefficient, None


def adversarial_boundary(embedding, coefficient, mode="grl"):
    """Identity forward; in grl mode the backward gradient is scaled by -coefficient."""
    if coefficient < 0:
        raise ConfigurationError("grl coefficient must be >= 0")
    if mode == "joint_min":
        return embedding
    if mode != "grl":
        raise ConfigurationError(f"unknown adversarial mode {mode!r}")
    return _GradientReversal.apply(embedding, coefficient)


class BasicBlock3d(nn.Module):
    def __init__(self, in_channels, out_channels, stride=(1, 1, 1)):
        super().__init__()
        self.conv1 = nn.Conv3d(in_channels, out_channels, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm3d(out_channels)
        self.conv2 = nn.Conv3d(out_channels, out_channels, 3, padding=1, bias=False)
        self.bn2 = nn.BatchNorm3d(out_channels)
        self.relu = nn.ReLU(inplace=True)
        if stride != (1, 1, 1) or in_channels != out_channels:
            self.shortcut = nn.Sequential(
                nn.Conv3d(in_channels, out_channels, 1, stride=stride, bias=False),
                nn.BatchNorm3d(out_channels))
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + self.shortcut(x))


class Residual3dExtractor(nn.Module):
    """Small 3D residual network ending in a global spatiotemporal pooled embedding."""

    def __init__(self, in_channels, widths, blocks_per_stage, embed_dim):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv3d(in_channels, widths[0], 3, padding=1, bias=False),
            nn.BatchNorm3d(widths[0]),
            nn.ReLU(inplace=True))
        stages = []
        channels = widths[0]
        for width, n_blocks, (ts, ss) in zip(widths, blocks_per_stage, STAGE_STRIDES):
            for b in range(n_blocks):
                stride = (ts, ss, ss) if b == 0 else (1, 1, 1)
                stages.append(BasicBlock3d(channels, width, stride))
                channels = width
        self.stages = nn.Sequential(*stages)
        self.pool = nn.AdaptiveAvgPool3d(1)
        self.project = nn.Linear(channels, embed_dim)

    def forward(self, clips):
        x = self.stages(self.stem(clips))
        x = self.pool(x).flatten(1)
        return self.project(x)


class ModelBundle(nn.Module):
    """Shared feature extractor plus classifier, prediction head and discriminator."""

    def __init__(self, feature_extractor, classifier, predict_head, discriminator,
                 grl_coefficient=1.0, adversarial_mode="grl", geometry=None):
        super().__init__()
        if adversarial_mode not in ADVERSARIAL_MODES:
            raise ConfigurationError(f"unknown adversarial mode {adversarial_mode!r}")
        self.feature_extractor = feature_extractor
        self.classifier = classifier
        self.predict_head = predict_head
        self.discriminator = discriminator
        self.grl_coefficient = grl_coefficient
        self.adversarial_mode = adversarial_mode
        self.geometry = geometry  # (C, T, W, H) or None to skip checks

    def _check_geometry(self, clips):
        if self.geometry is not None and tuple(clips.shape[1:]) != tuple(self.geometry):
            raise GeometryError(
                f"clip batch shape {tuple(clips.shape[1:])} != configured {tuple(self.geometry)}")

    def embed(self, clips):
        self._check_geometry(clips)
        embedding = self.feature_extractor(clips)
        if not torch.isfinite(embedding).all():
            raise NumericError("non-finite activations in the feature extractor")
        return embedding

    def discriminate(self, embedding):
        """Discriminator logit for an embedding, routed through the adversarial boundary."""
        bounded = adversarial_boundary(embedding, self.grl_coefficient, self.adversarial_mode)
        return self.discriminator(bounded).squeeze(-1)

    def forward(self, clips):
        embedding = self.embed(clips)
        return (embedding,
                self.classifier(embedding),
                self.predict_head(embedding),
                self.discriminate(embedding))

    @property
    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())


def build_backbone(preset, geometry, n_classes, embed_dim=64,
                   widths=(16, 32, 64, 128), grl_coefficient=1.0,
                   adversarial_mode="grl", seed=None):
    """Construct a ModelBundle for one of the residual-depth presets.

    geometry is (C, T, W, H); T must divide by 4 and W, H by 8 so the strided
    stages line up.
    """
    if preset not in PRESET_BLOCKS:
        raise ConfigurationError(f"unknown backbone preset {preset!r}")
    c, t, w, h = geometry
    if t % TEMPORAL_FACTOR or w % SPATIAL_FACTOR or h % SPATIAL_FACTOR:
        raise ConfigurationError(
            f"geometry {geometry}: T must be a multiple of {TEMPORAL_FACTOR} "
            f"and W, H multiples of {SPATIAL_FACTOR}")
    if seed is not None:
        torch.manual_seed(seed)
    extractor = Residual3dExtractor(c, list(widths), PRESET_BLOCKS[preset], embed_dim)
    classifier = nn.Linear(embed_dim, n_classes)
    predict_head = nn.Linear(embed_dim, n_classes)
    discriminator = nn.Sequential(
        nn.Linear(embed_dim, embed_dim), nn.ReLU(inplace=True), nn.Linear(embed_dim, 1))
    return ModelBundle(extractor, classifier, predict_head, discriminator,
                       grl_coefficient=grl_coefficient,
                       adversarial_mode=adversarial_mode, geometry=geometry)
