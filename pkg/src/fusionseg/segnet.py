"""Fusion segmentation network: stitch, attention, scaled encoder, ASPP, decoder.

Ablation switches mirror the experiment matrix: Body only, generated image
replacing the SAR input, attention on top, and channel-stitching of generated
plus real input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .attention import AttentionStage
from .checkpoint import load_into_params, save_checkpoint
from .errors import ConfigurationError, DimensionError
from .gan import GeneratorNet
from .layers import Conv2d, ConvBNRelu, collect_params
from .tensor import Tensor


@dataclass
class AblationConfig:
    use_gan: bool = False
    use_attention: bool = False
    use_combine: bool = False

    def validate(self):
        if self.use_combine and not self.use_gan:
            raise ConfigurationError("use_combine requires use_gan")

    @property
    def input_channels(self):
        return 2 if (self.use_gan and self.use_combine) else 1


def stitch_channels_input(sar: Tensor, cfg: AblationConfig,
                          generator: GeneratorNet | None) -> Tensor:
    """Assemble the encoder input; the generator sees no gradient."""
    cfg.validate()
    if not cfg.use_gan:
        return sar
    if generator is None:
        raise ConfigurationError("use_gan set but no generator loaded")
    fake_optical = generator(Tensor(sar.data)).detach()
    if cfg.use_combine:
        return T.concat_channels(sar, Tensor(fake_optical.data))
    return fake_optical


class EncoderStage:
    def __init__(self, cin, cout, repeats, rng):
        self.blocks = [ConvBNRelu(cin, cout, 3, stride=2, padding=1, rng=rng)]
        for _ in range(repeats - 1):
            self.blocks.append(ConvBNRelu(cout, cout, 3, padding=1, rng=rng))

    def __call__(self, x):
        for b in self.blocks:
            x = b(x)
        return x

    def named_params(self, prefix):
        return collect_params([(f"{prefix}.b{i}", b)
                               for i, b in enumerate(self.blocks)])


class Encoder:
    """Compound-scaled plain conv stack tapping features at strides 4 and 16."""

    base_channels = (8, 12, 16, 24)
    base_repeats = 1

    def __init__(self, c_in, width_mult=1.0, depth_mult=1.0, rng=None):
        chans = [max(1, round(c * width_mult)) for c in self.base_channels]
        repeats = int(np.ceil(self.base_repeats * depth_mult))
        self.channels = chans
        self.stem = ConvBNRelu(c_in, chans[0], 3, padding=1, rng=rng)
        prev = chans[0]
        self.stages = []
        for c in chans:
            self.stages.append(EncoderStage(prev, c, repeats, rng))
            prev = c
        self.low_channels = chans[1]   # stride 4
        self.high_channels = chans[3]  # stride 16

    def __call__(self, x):
        if x.data.shape[2] % 16 or x.data.shape[3] % 16:
            raise DimensionError("encoder input dims must be divisible by 16")
        h = self.stem(x)
        feats = []
        for stage in self.stages:
            h = stage(h)
            feats.append(h)
        return feats[1], feats[3]  # strides 4 and 16

    def named_params(self, prefix):
        out = self.stem.named_params(prefix + ".stem")
        for i, s in enumerate(self.stages):
            out.extend(s.named_params(f"{prefix}.stage{i}"))
        return out


class Aspp:
    """Parallel 1x1, atrous 3x3 per rate, and a global-pool branch, fused 1x1."""

    def __init__(self, c_in, c_out, rates, rng):
        if not rates:
            raise ConfigurationError("ASPP needs at least one dilation rate")
        self.rates = tuple(rates)
        self.one = ConvBNRelu(c_in, c_out, 1, rng=rng)
        self.atrous = [ConvBNRelu(c_in, c_out, 3, dilation=r, padding=r, rng=rng)
                       for r in self.rates]
        self.pool_conv = Conv2d(c_in, c_out, 1, rng=rng)
        n_branches = 2 + len(self.rates)
        self.fuse = ConvBNRelu(n_branches * c_out, c_out, 1, rng=rng)

    def __call__(self, x):
        h, w = x.data.shape[2], x.data.shape[3]
        branches = [self.one(x)]
        branches.extend(a(x) for a in self.atrous)
        pooled = T.relu(self.pool_conv(T.spatial_mean(x)))
        branches.append(T.tile_spatial(pooled, h, w))
        merged = branches[0]
        for b in branches[1:]:
            merged = T.concat_channels(merged, b)
        return self.fuse(merged)

    def named_params(self, prefix):
        out = self.one.named_params(prefix + ".one")
        for i, a in enumerate(self.atrous):
            out.extend(a.named_params(f"{prefix}.atrous{i}"))
        out.extend(self.pool_conv.named_params(prefix + ".pool"))
        out.extend(self.fuse.named_params(prefix + ".fuse"))
        return out


class Decoder:
    """Upsample high-level features, merge reduced low-level ones, emit logits."""

    def __init__(self, c_high, c_low, c_mid, rng):
        self.low_reduce = ConvBNRelu(c_low, c_mid // 2, 1, rng=rng)
        self.refine1 = ConvBNRelu(c_high + c_mid // 2, c_mid, 3, padding=1, rng=rng)
        self.refine2 = ConvBNRelu(c_mid, c_mid, 3, padding=1, rng=rng)
        self.head = Conv2d(c_mid, 1, 1, rng=rng)

    def __call__(self, f_high, f_low):
        up = T.upsample_nearest(f_high, 4)
        merged = T.concat_channels(up, self.low_reduce(f_low))
        h = self.refine2(self.refine1(merged))
        return T.upsample_nearest(self.head(h), 4)

    def named_params(self, prefix):
        return (self.low_reduce.named_params(prefix + ".low_reduce")
                + self.refine1.named_params(prefix + ".refine1")
                + self.refine2.named_params(prefix + ".refine2")
                + self.head.named_params(prefix + ".head"))


class FusionSegNet:
    def __init__(self, cfg: AblationConfig, seed: int, width_mult=1.0,
                 depth_mult=1.0, attention_units=16, attention_dim=8,
                 aspp_rates=(1, 2, 4), generator: GeneratorNet | None = None):
        cfg.validate()
        self.cfg = cfg
        self.generator = generator
        rng = np.random.Generator(np.random.PCG64(seed))
        c_in = cfg.input_channels
        lift_out = max(1, round(8 * width_mult))
        if cfg.use_attention:
            self.attention = AttentionStage(c_in, attention_dim, lift_out,
                                            s=attention_units, rng=rng)
            self.lift = None
        else:
            self.attention = None
            self.lift = Conv2d(c_in, lift_out, 1, rng=rng)
        self.encoder = Encoder(lift_out, width_mult, depth_mult, rng=rng)
        c_high = self.encoder.high_channels
        self.aspp = Aspp(c_high, c_high, aspp_rates, rng=rng)
        self.decoder = Decoder(c_high, self.encoder.low_channels,
                               max(8, round(16 * width_mult)), rng=rng)

    def __call__(self, sar: Tensor) -> Tensor:
        x = stitch_channels_input(sar, self.cfg, self.generator)
        if self.attention is not None:
            x = self.attention(x)
        else:
            x = self.lift(x)
        f_low, f_high = self.encoder(x)
        f_high = self.aspp(f_high)
        return self.decoder(f_high, f_low)

    def named_params(self):
        out = []
        if self.attention is not None:
            out.extend(self.attention.named_params("attention"))
        else:
            out.extend(self.lift.named_params("lift"))
        out.extend(self.encoder.named_params("encoder"))
        out.extend(self.aspp.named_params("aspp"))
        out.extend(self.decoder.named_params("decoder"))
        return out

    def save(self, path):
        save_checkpoint(path, [(n, p.data) for n, p in self.named_params()])

    def load(self, path):
        load_into_params(path, self.named_params())
