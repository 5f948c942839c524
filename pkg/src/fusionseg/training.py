"""Training loop, cosine schedule, evaluation, ablation matrix, map export."""

from __future__ import annotations

import json
import math
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .config import TrainConfig
from .errors import ConfigurationError, ContractError, DomainError
from .gan import GeneratorNet
from .checkpoint import load_into_params
from .losses import bce_sigmoid_loss, composite_loss, dice_loss
from .metrics import ConfusionMatrix, confusion_matrix, fwiou, iou_per_class
from .segnet import AblationConfig, FusionSegNet
from .synthdata import load_split, quantize_u8, write_pgm
from .tensor import AdamWState, Tensor, adamw_step


def lr_schedule(epoch: int, config: TrainConfig) -> float:
    """Cosine annealing from lr_init at epoch 0 to lr_min at the last epoch."""
    if not 0 <= epoch < config.epochs:
        raise ContractError(f"epoch {epoch} outside [0,{config.epochs})")
    if config.epochs == 1:
        return config.lr_init
    frac = epoch / (config.epochs - 1)
    return config.lr_min + 0.5 * (config.lr_init - config.lr_min) * (
        1.0 + math.cos(math.pi * frac))


def load_generator_from(path, seed=0) -> GeneratorNet:
    """Rebuild only the SAR-to-optical generator from a GAN pair checkpoint."""
    g = GeneratorNet(np.random.Generator(np.random.PCG64(seed)))
    load_into_params(path, g.named_params("g_xy."))
    return g


def build_net(config: TrainConfig) -> FusionSegNet:
    generator = None
    if config.ablation.use_gan:
        if not Path(config.gan_checkpoint).exists():
            raise ConfigurationError(
                f"use_gan set but no GAN checkpoint at {config.gan_checkpoint}")
        generator = load_generator_from(config.gan_checkpoint)
    return FusionSegNet(config.ablation, seed=config.seed,
                        width_mult=config.width_mult,
                        depth_mult=config.depth_mult,
                        generator=generator)


def batch_losses(net: FusionSegNet, sar: np.ndarray, masks: np.ndarray):
    """Forward plus composite loss for one batch; masks are [B,H,W] in {0,1}."""
    logits = net(Tensor(sar))
    target = Tensor(masks[:, None])
    probs = T.sigmoid(logits)
    dice = dice_loss(probs, target)
    bce = bce_sigmoid_loss(logits, target)
    return logits, dice, bce, composite_loss(dice, bce)


def evaluate(net: FusionSegNet, sar: np.ndarray, masks: np.ndarray,
             batch_size: int = 8):
    """Accumulate one confusion matrix over a split; fixed index order."""
    if len(sar) == 0:
        raise DomainError("cannot evaluate an empty split")
    cm = ConfusionMatrix(2)
    for start in range(0, len(sar), batch_size):
        logits = net(Tensor(sar[start:start + batch_size]))
        pred = (1.0 / (1.0 + np.exp(-logits.data[:, 0])) >= 0.5).astype(np.int64)
        true = masks[start:start + batch_size].astype(np.int64)
        cm = cm + confusion_matrix(pred, true, 2)
    return {"fwiou": fwiou(cm), "fwiou_percent": 100.0 * fwiou(cm),
            "iou_per_class": [float(v) for v in iou_per_class(cm)],
            "confusion": cm.counts.tolist()}


def train(config: TrainConfig, metrics_path=None, checkpoint_path=None,
          best_checkpoint_path=None, log=print):
    """Full segmentation training run; returns (net, metrics records)."""
    config.validate()
    sar_train, mask_train, _ = load_split(config.data_dir, "train")
    sar_val, mask_val, _ = load_split(config.data_dir, "val")
    if len(sar_train) == 0:
        raise ConfigurationError("training split is empty")
    net = build_net(config)
    params = net.named_params()
    states = {n: AdamWState.for_param(p, config.weight_decay)
              for n, p in params}
    rng = np.random.Generator(np.random.PCG64(config.seed + 7))
    records = []
    metrics_file = open(metrics_path, "w") if metrics_path else None
    best_fwiou = -1.0
    try:
        for epoch in range(config.epochs):
            t0 = time.monotonic()
            lr = lr_schedule(epoch, config)
            order = rng.permutation(len(sar_train))
            dice_sum = bce_sum = comp_sum = 0.0
            n_batches = 0
            for start in range(0, len(order), config.batch_size):
                idx = order[start:start + config.batch_size]
                for _, p in params:
                    p.zero_grad()
                _, dice, bce, comp = batch_losses(
                    net, sar_train[idx], mask_train[idx])
                if not np.isfinite(comp.item()):
                    raise DomainError(
                        f"non-finite composite loss at epoch {epoch}")
                comp.backward()
                for name, p in params:
                    adamw_step(p, states[name], lr)
                dice_sum += dice.item()
                bce_sum += bce.item()
                comp_sum += comp.item()
                n_batches += 1
            val = (evaluate(net, sar_val, mask_val, config.batch_size)
                   if len(sar_val) else None)
            record = {
                "epoch": epoch,
                "train_loss": {"dice": dice_sum / n_batches,
                               "bce": bce_sum / n_batches,
                               "composite": comp_sum / n_batches},
                "val_fwiou": val["fwiou"] if val else None,
                "val_iou_per_class": val["iou_per_class"] if val else None,
                "lr": lr,
                "wall_ms": int(1000 * (time.monotonic() - t0)),
            }
            records.append(record)
            if metrics_file:
                # wall_ms stays out of the file so identical runs diff clean
                persisted = {k: v for k, v in record.items() if k != "wall_ms"}
                metrics_file.write(json.dumps(persisted, sort_keys=True) + "\n")
                metrics_file.flush()
            if log:
                log(f"epoch {epoch}: loss={record['train_loss']['composite']:.4f}"
                    f" val_fwiou={record['val_fwiou']}")
            if checkpoint_path:
                net.save(checkpoint_path)
            if best_checkpoint_path and val and val["fwiou"] > best_fwiou:
                best_fwiou = val["fwiou"]
                net.save(best_checkpoint_path)
    finally:
        if metrics_file:
            metrics_file.close()
    return net, records


ABLATION_ROWS = (
    ("body", AblationConfig(False, False, False)),
    ("gan", AblationConfig(True, False, False)),
    ("gan+att", AblationConfig(True, True, False)),
    ("gan+att+combine", AblationConfig(True, True, True)),
)


def run_ablation(config: TrainConfig, log=print):
    """Train and evaluate the four configurations with identical budgets."""
    sar_test, mask_test, _ = load_split(config.data_dir, "test")
    if len(sar_test) == 0:
        sar_test, mask_test, _ = load_split(config.data_dir, "val")
    rows = []
    for name, ablation in ABLATION_ROWS:
        cfg = TrainConfig.from_dict({**_config_dict(config),
                                     "ablation": vars(ablation)})
        net, _ = train(cfg, log=None)
        result = evaluate(net, sar_test, mask_test, cfg.batch_size)
        rows.append({"config": name,
                     "use_gan": ablation.use_gan,
                     "use_attention": ablation.use_attention,
                     "use_combine": ablation.use_combine,
                     "fwiou": result["fwiou"],
                     "fwiou_percent": result["fwiou_percent"]})
        if log:
            log(f"{name}: fwiou={result['fwiou']:.5f}")
    return rows


def _config_dict(config: TrainConfig) -> dict:
    from dataclasses import asdict
    return asdict(config)


def format_ablation_table(rows) -> str:
    header = f"{'Config':<18}{'CycGAN':<8}{'Att':<6}{'Combine':<9}{'FwIoU':>8}"
    lines = [header, "-" * len(header)]
    for r in rows:
        lines.append(f"{r['config']:<18}"
                     f"{'x' if r['use_gan'] else '':<8}"
                     f"{'x' if r['use_attention'] else '':<6}"
                     f"{'x' if r['use_combine'] else '':<9}"
                     f"{r['fwiou_percent']:>8.3f}")
    return "\n".join(lines)


def export_maps(net: FusionSegNet, sar: np.ndarray, masks: np.ndarray,
                out_dir, batch_size: int = 8):
    """Thresholded {0,255} prediction masks plus input/truth/pred montages."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for start in range(0, len(sar), batch_size):
        logits = net(Tensor(sar[start:start + batch_size]))
        probs = 1.0 / (1.0 + np.exp(-logits.data[:, 0]))
        pred = np.where(probs >= 0.5, 255, 0).astype(np.uint8)
        for j in range(pred.shape[0]):
            i = start + j
            pred_path = out / f"pred_{i:05d}.pgm"
            write_pgm(pred_path, pred[j])
            montage = np.concatenate([
                quantize_u8(sar[i, 0]),
                np.where(masks[i] > 0, 255, 0).astype(np.uint8),
                pred[j]], axis=1)
            write_pgm(out / f"montage_{i:05d}.pgm", montage)
            written.append(str(pred_path))
    return written
