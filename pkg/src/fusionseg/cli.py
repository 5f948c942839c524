"""Command-line harness: gen-data, pretrain-gan, train, eval, ablate, export-maps."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

from .config import TrainConfig
from .errors import ConfigurationError, FusionSegError
from .gan import pretrain_gan
from .synthdata import SceneSpec, load_split, make_dataset
from .training import (build_net, evaluate, export_maps, format_ablation_table,
                       run_ablation, train)

VERBOSE = os.environ.get("FUSIONSEG_LOG", "info") != "quiet"


def _log(msg):
    if VERBOSE:
        print(msg)


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--data-dir")
    p.add_argument("--out-dir")
    p.add_argument("--gan-checkpoint")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr-init", type=float)
    p.add_argument("--lr-min", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--gan-iterations", type=int)
    p.add_argument("--gan-lr", type=float)
    p.add_argument("--image-size", type=int)
    p.add_argument("--width-mult", type=float)
    p.add_argument("--depth-mult", type=float)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-val", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--use-gan", action="store_true", default=None)
    p.add_argument("--use-attention", action="store_true", default=None)
    p.add_argument("--use-combine", action="store_true", default=None)


def _build_config(args) -> TrainConfig:
    base = asdict(TrainConfig())
    if args.config:
        loaded = json.loads(Path(args.config).read_text())
        base.update(loaded)
    flag_map = {
        "data_dir": args.data_dir, "out_dir": args.out_dir,
        "gan_checkpoint": args.gan_checkpoint, "seed": args.seed,
        "epochs": args.epochs, "batch_size": args.batch_size,
        "lr_init": args.lr_init, "lr_min": args.lr_min,
        "weight_decay": args.weight_decay,
        "gan_iterations": args.gan_iterations, "gan_lr": args.gan_lr,
        "image_size": args.image_size, "width_mult": args.width_mult,
        "depth_mult": args.depth_mult, "n_train": args.n_train,
        "n_val": args.n_val, "n_test": args.n_test,
    }
    for k, v in flag_map.items():
        if v is not None:
            base[k] = v
    ablation = dict(base.get("ablation") or {})
    for k, v in (("use_gan", args.use_gan),
                 ("use_attention", args.use_attention),
                 ("use_combine", args.use_combine)):
        if v is not None:
            ablation[k] = v
    base["ablation"] = ablation
    return TrainConfig.from_dict(base)


def cmd_gen_data(args):
    config = _build_config(args)
    spec = SceneSpec(image_size=config.image_size, seed=config.seed)
    manifest = make_dataset(spec, config.data_dir, config.n_train,
                            config.n_val, config.n_test, config.seed)
    counts = {k: len(v) for k, v in manifest["splits"].items()}
    _log(f"dataset written to {config.data_dir}: {counts}")


def cmd_pretrain_gan(args):
    config = _build_config(args)
    sar, _, optical = load_split(config.data_dir, "train")
    if len(sar) == 0:
        raise ConfigurationError("no training data; run gen-data first")
    # unpaired sets with the 300:50-style asymmetry: all SAR, a sixth optical
    n_opt = max(1, len(optical) // 6)
    Path(config.gan_checkpoint).parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(config.gan_checkpoint).with_suffix(".losses.jsonl")
    with open(log_path, "w") as fh:
        def log_fn(it, record):
            fh.write(json.dumps({"iteration": it, **record},
                                sort_keys=True) + "\n")
        pretrain_gan(sar, optical[:n_opt], config.gan_iterations,
                     config.seed, checkpoint_path=config.gan_checkpoint,
                     lr=config.gan_lr, batch_size=config.gan_batch_size,
                     lambda_cyc=config.lambda_cyc, log_fn=log_fn)
    _log(f"GAN checkpoint written to {config.gan_checkpoint}")


def cmd_train(args):
    config = _build_config(args)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    net, records = train(
        config,
        metrics_path=out / "metrics.jsonl",
        checkpoint_path=out / "last.ckpt",
        best_checkpoint_path=out / "best.ckpt",
        log=_log)
    _log(f"final val_fwiou={records[-1]['val_fwiou']}")


def cmd_eval(args):
    config = _build_config(args)
    net = build_net(config)
    net.load(args.checkpoint)
    sar, masks, _ = load_split(config.data_dir, args.split)
    report = evaluate(net, sar, masks, config.batch_size)
    print(json.dumps(report, indent=1, sort_keys=True))


def cmd_ablate(args):
    config = _build_config(args)
    rows = run_ablation(config, log=_log)
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, indent=1, sort_keys=True))
    print(format_ablation_table(rows))


def cmd_export_maps(args):
    config = _build_config(args)
    net = build_net(config)
    net.load(args.checkpoint)
    sar, masks, _ = load_split(config.data_dir, args.split)
    written = export_maps(net, sar, masks, args.maps_dir or
                          Path(config.out_dir) / "maps", config.batch_size)
    _log(f"wrote {len(written)} prediction maps")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fusionseg",
        description="SAR segmentation with GAN-generated optical fusion")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (("gen-data", cmd_gen_data),
                     ("pretrain-gan", cmd_pretrain_gan),
                     ("train", cmd_train),
                     ("ablate", cmd_ablate)):
        p = sub.add_parser(name)
        _add_config_flags(p)
        p.set_defaults(fn=fn)
    for name, fn in (("eval", cmd_eval), ("export-maps", cmd_export_maps)):
        p = sub.add_parser(name)
        _add_config_flags(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--split", default="test")
        if name == "export-maps":
            p.add_argument("--maps-dir")
        p.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        args.fn(args)
    except FusionSegError as e:
        print(f"error:{e.category}: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error:io: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
