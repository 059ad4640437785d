"""Attention blocks and their assembly into dual-stem SE-ResNet classifiers.

Three units do the architectural work:

* SEBlock — squeeze (global average) then excite (bottleneck MLP) into
  per-channel sigmoid gates that rescale the feature map.
* MSCAM — multi-scale channel attention: a pointwise-conv bottleneck
  applied both globally (on the pooled descriptor) and locally (at every
  position), summed and squashed into a gate in (0, 1).
* AFF — blends two same-shape maps x, y as y + m*(x - y) where
  m = MSCAM(x + y); equal inputs pass through exactly.

The classifier runs one 2x2 valid-stride-1 stem conv per feature kind
(136x44 -> 135x43), fuses (or bypasses fusion in single-feature modes),
then four SE-residual stages with stride-2 downsampling at stage entry,
global average pooling, and a 2-logit head.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dsp import ConfigError
from .nn import (
    BatchNorm2d,
    Conv2d,
    DimensionError,
    GlobalAvgPool,
    Linear,
    Module,
    Parameter,
    ReLU,
    Sequential,
    relu,
    sigmoid,
)

VARIANTS = ("resnet34_se", "resnet50_se")
FUSION_MODES = ("mfcc_only", "lfcc_only", "aff")

BOTTLENECK_EXPANSION = 4


class SEBlock(Module):
    """Channel re-calibration: x * sigmoid(W2 relu(W1 GAP(x)))."""

    def __init__(self, channels, reduction=16, rng=None, dtype=np.float32):
        mid = max(1, channels // reduction)
        self.channels = channels
        self.fc1 = Linear(channels, mid, rng=rng, dtype=dtype)
        self.fc2 = Linear(mid, channels, rng=rng, dtype=dtype)
        self.last_gate = None

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(f"SE block expects (N,{self.channels},H,W), got {x.shape}")
        pooled = x.mean(axis=(2, 3))
        z1 = self.fc1.forward(pooled)
        self._relu_mask = z1 > 0
        gate = sigmoid(self.fc2.forward(np.maximum(z1, 0)))
        self._x = x
        self.last_gate = gate
        return x * gate[:, :, None, None]

    def backward(self, dout):
        x, gate = self._x, self.last_gate
        dgate = (dout * x).sum(axis=(2, 3)) * gate * (1.0 - gate)
        dz1 = self.fc2.backward(dgate) * self._relu_mask
        dpooled = self.fc1.backward(dz1)
        hw = x.shape[2] * x.shape[3]
        return dout * gate[:, :, None, None] + dpooled[:, :, None, None] / hw


def _pointwise_bottleneck(channels, mid, rng, dtype):
    return Sequential([
        Conv2d(channels, mid, 1, 1, rng=rng, dtype=dtype),
        BatchNorm2d(mid, dtype=dtype),
        ReLU(),
        Conv2d(mid, channels, 1, 1, rng=rng, dtype=dtype),
        BatchNorm2d(channels, dtype=dtype),
    ])


class MSCAM(Module):
    """Multi-scale channel attention; forward returns the gate, not x*gate."""

    def __init__(self, channels, reduction=4, rng=None, dtype=np.float32):
        mid = max(1, channels // reduction)
        self.channels = channels
        self.local_branch = _pointwise_bottleneck(channels, mid, rng, dtype)
        self.global_branch = _pointwise_bottleneck(channels, mid, rng, dtype)
        self.last_gate = None

    def forward(self, x, train: bool = False):
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise DimensionError(f"MS-CAM expects (N,{self.channels},H,W), got {x.shape}")
        self._hw = x.shape[2] * x.shape[3]
        pooled = x.mean(axis=(2, 3), keepdims=True)
        g = self.global_branch.forward(pooled, train)
        l = self.local_branch.forward(x, train)
        gate = sigmoid(g + l)
        self.last_gate = gate
        return gate

    def backward(self, dgate):
        gate = self.last_gate
        dz = dgate * gate * (1.0 - gate)
        dx = self.local_branch.backward(dz)
        dpooled = self.global_branch.backward(dz.sum(axis=(2, 3), keepdims=True))
        return dx + dpooled / self._hw


class AFF(Module):
    """Attentional fusion z = y + m*(x - y), m = MSCAM(x + y).

    The y + m*(x - y) form makes fuse(x, x) return x bitwise for any gate.
    """

    def __init__(self, channels, reduction=4, rng=None, dtype=np.float32):
        self.mscam = MSCAM(channels, reduction, rng=rng, dtype=dtype)

    def forward(self, x, y, train: bool = False):
        if x.shape != y.shape:
            raise DimensionError(f"AFF inputs must match, got {x.shape} and {y.shape}")
        m = self.mscam.forward(x + y, train)
        self._m, self._x, self._y = m, x, y
        return y + m * (x - y)

    def backward(self, dout):
        m, x, y = self._m, self._x, self._y
        dsum = self.mscam.backward(dout * (x - y))
        dx = dout * m + dsum
        dy = dout * (1.0 - m) + dsum
        return dx, dy


class SEBasicBlock(Module):
    """Two 3x3 convs with SE on the residual branch before the skip add."""

    def __init__(self, in_ch, out_ch, stride=1, se_reduction=16, rng=None, dtype=np.float32):
        self.conv1 = Conv2d(in_ch, out_ch, 3, 3, stride, "same", rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(out_ch, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(out_ch, out_ch, 3, 3, 1, "same", rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(out_ch, dtype=dtype)
        self.se = SEBlock(out_ch, se_reduction, rng=rng, dtype=dtype)
        if stride != 1 or in_ch != out_ch:
            self.proj = Conv2d(in_ch, out_ch, 1, 1, stride, "valid", rng=rng, dtype=dtype)
            self.proj_bn = BatchNorm2d(out_ch, dtype=dtype)
        else:
            self.proj = None

    def forward(self, x, train: bool = False):
        r = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train), train)
        r = self.bn2.forward(self.conv2.forward(r, train), train)
        r = self.se.forward(r, train)
        skip = self.proj_bn.forward(self.proj.forward(x, train), train) if self.proj else x
        out = r + skip
        self._out_mask = out > 0
        return np.maximum(out, 0)

    def backward(self, dout):
        d = dout * self._out_mask
        dr = self.conv2.backward(self.bn2.backward(self.se.backward(d)))
        dx = self.conv1.backward(self.bn1.backward(self.relu1.backward(dr)))
        if self.proj:
            dx = dx + self.proj.backward(self.proj_bn.backward(d))
        else:
            dx = dx + d
        return dx


class SEBottleneckBlock(Module):
    """1x1 -> 3x3 -> 1x1 with 4x expansion; SE before the skip add."""

    def __init__(self, in_ch, mid_ch, stride=1, se_reduction=16, rng=None, dtype=np.float32):
        out_ch = mid_ch * BOTTLENECK_EXPANSION
        self.conv1 = Conv2d(in_ch, mid_ch, 1, 1, rng=rng, dtype=dtype)
        self.bn1 = BatchNorm2d(mid_ch, dtype=dtype)
        self.relu1 = ReLU()
        self.conv2 = Conv2d(mid_ch, mid_ch, 3, 3, stride, "same", rng=rng, dtype=dtype)
        self.bn2 = BatchNorm2d(mid_ch, dtype=dtype)
        self.relu2 = ReLU()
        self.conv3 = Conv2d(mid_ch, out_ch, 1, 1, rng=rng, dtype=dtype)
        self.bn3 = BatchNorm2d(out_ch, dtype=dtype)
        self.se = SEBlock(out_ch, se_reduction, rng=rng, dtype=dtype)
        if stride != 1 or in_ch != out_ch:
            self.proj = Conv2d(in_ch, out_ch, 1, 1, stride, "valid", rng=rng, dtype=dtype)
            self.proj_bn = BatchNorm2d(out_ch, dtype=dtype)
        else:
            self.proj = None

    def forward(self, x, train: bool = False):
        r = self.relu1.forward(self.bn1.forward(self.conv1.forward(x, train), train), train)
        r = self.relu2.forward(self.bn2.forward(self.conv2.forward(r, train), train), train)
        r = self.bn3.forward(self.conv3.forward(r, train), train)
        r = self.se.forward(r, train)
        skip = self.proj_bn.forward(self.proj.forward(x, train), train) if self.proj else x
        out = r + skip
        self._out_mask = out > 0
        return np.maximum(out, 0)

    def backward(self, dout):
        d = dout * self._out_mask
        dr = self.conv3.backward(self.bn3.backward(self.se.backward(d)))
        dr = self.conv2.backward(self.bn2.backward(self.relu2.backward(dr)))
        dx = self.conv1.backward(self.bn1.backward(self.relu1.backward(dr)))
        if self.proj:
            dx = dx + self.proj.backward(self.proj_bn.backward(d))
        else:
            dx = dx + d
        return dx


@dataclass
class BackboneConfig:
    variant: str = "resnet34_se"
    stage_blocks: tuple[int, int, int, int] = (3, 4, 6, 3)
    base_width: int = 64
    fusion: str = "aff"
    masking: bool = False
    se_reduction: int = 16
    mscam_reduction: int = 4

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"unknown fusion mode {self.fusion!r}, expected one of {FUSION_MODES}")
        self.stage_blocks = tuple(int(b) for b in self.stage_blocks)
        if len(self.stage_blocks) != 4 or any(b < 1 for b in self.stage_blocks):
            raise ConfigError(f"stage_blocks must be 4 positive counts, got {self.stage_blocks}")
        if self.base_width < 1:
            raise ConfigError(f"base_width must be positive, got {self.base_width}")

    @property
    def uses_mfcc(self) -> bool:
        return self.fusion in ("mfcc_only", "aff")

    @property
    def uses_lfcc(self) -> bool:
        return self.fusion in ("lfcc_only", "aff")


class FusionClassifier(Module):
    """Dual-stem SE-ResNet over padded 136x44 features; outputs 2 logits."""

    def __init__(self, cfg: BackboneConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self._cfg = cfg
        if cfg.uses_mfcc:
            self.stem_mfcc = Conv2d(1, cfg.base_width, 2, 2, 1, "valid", rng=rng, dtype=dtype)
        if cfg.uses_lfcc:
            self.stem_lfcc = Conv2d(1, cfg.base_width, 2, 2, 1, "valid", rng=rng, dtype=dtype)
        if cfg.fusion == "aff":
            self.fuse = AFF(cfg.base_width, cfg.mscam_reduction, rng=rng, dtype=dtype)

        basic = cfg.variant == "resnet34_se"
        widths = [cfg.base_width * (2**i) for i in range(4)]
        in_ch = cfg.base_width
        stages = []
        for stage_idx, (width, n_blocks) in enumerate(zip(widths, cfg.stage_blocks)):
            blocks = []
            for block_idx in range(n_blocks):
                stride = 2 if (stage_idx > 0 and block_idx == 0) else 1
                if basic:
                    blocks.append(
                        SEBasicBlock(in_ch, width, stride, cfg.se_reduction, rng=rng, dtype=dtype)
                    )
                    in_ch = width
                else:
                    blocks.append(
                        SEBottleneckBlock(in_ch, width, stride, cfg.se_reduction, rng=rng, dtype=dtype)
                    )
                    in_ch = width * BOTTLENECK_EXPANSION
            stages.append(Sequential(blocks))
        self.stages = stages
        self.gap = GlobalAvgPool()
        self.fc = Linear(in_ch, 2, rng=rng, dtype=dtype)

    @property
    def config(self) -> BackboneConfig:
        return self._cfg

    def forward(self, mfcc=None, lfcc=None, train: bool = False):
        cfg = self._cfg
        if cfg.uses_mfcc and mfcc is None:
            raise ConfigError(f"fusion mode {cfg.fusion!r} requires an mfcc input")
        if cfg.uses_lfcc and lfcc is None:
            raise ConfigError(f"fusion mode {cfg.fusion!r} requires an lfcc input")
        if cfg.fusion == "aff":
            h = self.fuse.forward(
                self.stem_mfcc.forward(mfcc, train),
                self.stem_lfcc.forward(lfcc, train),
                train,
            )
        elif cfg.fusion == "mfcc_only":
            h = self.stem_mfcc.forward(mfcc, train)
        else:
            h = self.stem_lfcc.forward(lfcc, train)
        for stage in self.stages:
            h = stage.forward(h, train)
        pooled = self.gap.forward(h, train)
        self._pooled_shape = pooled.shape
        return self.fc.forward(pooled.reshape(pooled.shape[0], -1), train)

    def backward(self, dlogits):
        """Propagate to both stem inputs; returns (dmfcc, dlfcc), None where absent."""
        dpooled = self.fc.backward(dlogits).reshape(self._pooled_shape)
        dh = self.gap.backward(dpooled)
        for stage in reversed(self.stages):
            dh = stage.backward(dh)
        cfg = self._cfg
        if cfg.fusion == "aff":
            da, db = self.fuse.backward(dh)
            return self.stem_mfcc.backward(da), self.stem_lfcc.backward(db)
        if cfg.fusion == "mfcc_only":
            return self.stem_mfcc.backward(dh), None
        return None, self.stem_lfcc.backward(dh)


def build_model(cfg: BackboneConfig, seed: int = 0, dtype=np.float32) -> FusionClassifier:
    """Deterministically initialized classifier for the given backbone config."""
    return FusionClassifier(cfg, seed=seed, dtype=dtype)
