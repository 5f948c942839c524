"""Unpaired SAR-to-optical translation with a cycle-consistent GAN pair.

Two generators and two discriminators trained alternately with the
least-squares adversarial loss; at the equilibrium both discriminators score
real and fake near 0.5. Only the SAR-to-optical generator is consumed
downstream by the segmentation net.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .checkpoint import load_into_params, save_checkpoint
from .errors import ConfigurationError, DimensionError
from .layers import BatchNorm2d, Conv2d, ConvBNRelu, collect_params, zero_grads
from .tensor import AdamWState, Tensor, adamw_step


class ResidualBlock:
    def __init__(self, c, rng):
        self.conv1 = Conv2d(c, c, 3, padding=1, rng=rng)
        self.bn1 = BatchNorm2d(c)
        self.conv2 = Conv2d(c, c, 3, padding=1, rng=rng)
        self.bn2 = BatchNorm2d(c)

    def __call__(self, x):
        h = T.relu(self.bn1(self.conv1(x)))
        return T.add(self.bn2(self.conv2(h)), x)

    def named_params(self, prefix):
        return (self.conv1.named_params(prefix + ".conv1")
                + self.bn1.named_params(prefix + ".bn1")
                + self.conv2.named_params(prefix + ".conv2")
                + self.bn2.named_params(prefix + ".bn2"))


class GeneratorNet:
    """Encoder-residual-decoder mapping [B,1,H,W] -> [B,1,H,W] in [0,1].

    The final conv is zero-initialized, so an untrained generator outputs a
    constant 0.5 everywhere.
    """

    def __init__(self, rng, base=8):
        self.down1 = ConvBNRelu(1, base, 3, stride=2, padding=1, rng=rng)
        self.down2 = ConvBNRelu(base, 2 * base, 3, stride=2, padding=1, rng=rng)
        self.res1 = ResidualBlock(2 * base, rng)
        self.res2 = ResidualBlock(2 * base, rng)
        self.up1 = ConvBNRelu(2 * base, base, 3, padding=1, rng=rng)
        self.up2 = ConvBNRelu(base, base, 3, padding=1, rng=rng)
        self.final = Conv2d(base, 1, 1, zero_init=True)

    def __call__(self, x):
        if x.data.ndim != 4 or x.data.shape[1] != 1:
            raise DimensionError("generator expects a [B,1,H,W] input")
        h = self.down2(self.down1(x))
        h = self.res2(self.res1(h))
        h = self.up1(T.upsample_nearest(h, 2))
        h = self.up2(T.upsample_nearest(h, 2))
        return T.sigmoid(self.final(h))

    def named_params(self, prefix=""):
        layers = [("down1", self.down1), ("down2", self.down2),
                  ("res1", self.res1), ("res2", self.res2),
                  ("up1", self.up1), ("up2", self.up2), ("final", self.final)]
        return collect_params([(f"{prefix}{n}", l) for n, l in layers])


class DiscriminatorNet:
    """Strided-conv patch classifier; scores squashed to (0,1)."""

    def __init__(self, rng, base=8):
        self.c1 = ConvBNRelu(1, base, 3, stride=2, padding=1, rng=rng)
        self.c2 = ConvBNRelu(base, 2 * base, 3, stride=2, padding=1, rng=rng)
        self.head = Conv2d(2 * base, 1, 3, padding=1, rng=rng)

    def __call__(self, x):
        return T.sigmoid(self.head(self.c2(self.c1(x))))

    def named_params(self, prefix=""):
        layers = [("c1", self.c1), ("c2", self.c2), ("head", self.head)]
        return collect_params([(f"{prefix}{n}", l) for n, l in layers])


def generate(g: GeneratorNet, x: Tensor) -> Tensor:
    return g(x)


def adversarial_losses(d_real: Tensor, d_fake: Tensor):
    """Least-squares GAN losses: loss_D pulls real->1, fake->0; loss_G fake->1."""
    loss_d = T.scale(T.add(
        T.reduce_mean(_square(T.scale(d_real, 1.0, -1.0))),
        T.reduce_mean(_square(d_fake))), 0.5)
    loss_g = T.reduce_mean(_square(T.scale(d_fake, 1.0, -1.0)))
    return loss_d, loss_g


def _square(x):
    return T.mul(x, x)


def cycle_loss(x: Tensor, x_rec: Tensor, lambda_cyc: float) -> Tensor:
    if x.data.shape != x_rec.data.shape:
        raise DimensionError("cycle_loss shape mismatch")
    return T.scale(T.reduce_mean(T.absolute(T.add(x, T.scale(x_rec, -1.0)))),
                   lambda_cyc)


class GanPair:
    def __init__(self, seed: int, lambda_cyc: float = 10.0,
                 weight_decay: float = 0.0):
        rng = np.random.Generator(np.random.PCG64(seed))
        self.g_xy = GeneratorNet(rng)
        self.g_yx = GeneratorNet(rng)
        self.d_x = DiscriminatorNet(rng)
        self.d_y = DiscriminatorNet(rng)
        self.lambda_cyc = lambda_cyc
        self.gen_params = (self.g_xy.named_params("g_xy.")
                           + self.g_yx.named_params("g_yx."))
        self.disc_params = (self.d_x.named_params("d_x.")
                            + self.d_y.named_params("d_y."))
        self.gen_states = {n: AdamWState.for_param(p, weight_decay)
                           for n, p in self.gen_params}
        self.disc_states = {n: AdamWState.for_param(p, weight_decay)
                            for n, p in self.disc_params}

    def named_params(self):
        return self.gen_params + self.disc_params

    def save(self, path):
        save_checkpoint(path, [(n, p.data) for n, p in self.named_params()])

    def load(self, path):
        load_into_params(path, self.named_params())


def gan_train_step(pair: GanPair, batch_x: Tensor, batch_y: Tensor,
                   lr: float) -> dict:
    """One alternating update; returns the component losses."""
    if batch_x.data.shape[0] == 0 or batch_y.data.shape[0] == 0:
        raise DimensionError("gan_train_step requires nonempty batches")

    # generator phase (discriminators frozen: their params are not stepped)
    zero_grads(pair.gen_params)
    zero_grads(pair.disc_params)
    fake_y = pair.g_xy(batch_x)
    fake_x = pair.g_yx(batch_y)
    rec_x = pair.g_yx(fake_y)
    rec_y = pair.g_xy(fake_x)
    loss_g_xy = T.reduce_mean(_square(T.scale(pair.d_y(fake_y), 1.0, -1.0)))
    loss_g_yx = T.reduce_mean(_square(T.scale(pair.d_x(fake_x), 1.0, -1.0)))
    cyc_x = cycle_loss(batch_x, rec_x, pair.lambda_cyc)
    cyc_y = cycle_loss(batch_y, rec_y, pair.lambda_cyc)
    gen_total = T.add(T.add(loss_g_xy, loss_g_yx), T.add(cyc_x, cyc_y))
    gen_total.backward()
    for name, p in pair.gen_params:
        adamw_step(p, pair.gen_states[name], lr)

    # discriminator phase (generators frozen; fakes detached)
    zero_grads(pair.gen_params)
    zero_grads(pair.disc_params)
    fake_y_det = fake_y.detach()
    fake_x_det = fake_x.detach()
    loss_d_y = T.scale(T.add(
        T.reduce_mean(_square(T.scale(pair.d_y(batch_y), 1.0, -1.0))),
        T.reduce_mean(_square(pair.d_y(fake_y_det)))), 0.5)
    loss_d_x = T.scale(T.add(
        T.reduce_mean(_square(T.scale(pair.d_x(batch_x), 1.0, -1.0))),
        T.reduce_mean(_square(pair.d_x(fake_x_det)))), 0.5)
    disc_total = T.add(loss_d_y, loss_d_x)
    disc_total.backward()
    for name, p in pair.disc_params:
        adamw_step(p, pair.disc_states[name], lr)
    zero_grads(pair.gen_params)
    zero_grads(pair.disc_params)

    return {
        "loss_g_xy": loss_g_xy.item(), "loss_g_yx": loss_g_yx.item(),
        "cycle_x": cyc_x.item(), "cycle_y": cyc_y.item(),
        "loss_d_x": loss_d_x.item(), "loss_d_y": loss_d_y.item(),
    }


def pretrain_gan(x_set: np.ndarray, y_set: np.ndarray, iterations: int,
                 seed: int, checkpoint_path=None, lr: float = 5e-4,
                 batch_size: int = 1, lambda_cyc: float = 10.0,
                 log_fn=None) -> GanPair:
    """Train on unpaired sets sampled independently with replacement."""
    if len(x_set) == 0 or len(y_set) == 0:
        raise ConfigurationError("pretrain_gan requires nonempty image sets")
    pair = GanPair(seed=seed, lambda_cyc=lambda_cyc)
    rng = np.random.Generator(np.random.PCG64(seed + 1))
    for it in range(iterations):
        xi = rng.integers(0, len(x_set), size=batch_size)
        yi = rng.integers(0, len(y_set), size=batch_size)
        record = gan_train_step(pair, Tensor(x_set[xi]), Tensor(y_set[yi]), lr)
        if log_fn is not None:
            log_fn(it, record)
    if checkpoint_path is not None:
        pair.save(checkpoint_path)
    return pair
