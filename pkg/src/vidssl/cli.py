"""Command-line surface: train, eval, synth-data, ablate, report.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration failure.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import data as data_mod
from .config import (apply_overrides, config_from_flat, config_hash,
                     parse_config_file, write_resolved_config)
from .errors import ConfigurationError, DatasetStructureError, GeometryError, ValidationError
from .presets import PRESETS, apply_preset
from .reporting import generate_report
from .trainer import Trainer, load_checkpoint

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "VIDSSL_OUTPUT_ROOT"

USAGE_ERRORS = (ConfigurationError, DatasetStructureError, ValidationError, GeometryError)


def default_output_root():
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


def resolve_config(args):
    """config file -> preset -> --set overrides -> --seed shortcut."""
    flat = {}
    if getattr(args, "config", None):
        flat = parse_config_file(args.config)
    if getattr(args, "preset", None):
        flat = apply_preset(flat, args.preset)
    flat = apply_overrides(flat, getattr(args, "set", None) or [])
    if getattr(args, "seed", None) is not None:
        flat["train.seed"] = str(args.seed)
    return config_from_flat(flat)


def synth_spec_from_config(config):
    return data_mod.SynthSpec(
        n_labeled_per_class=config.synth_n_labeled_per_class,
        n_unlabeled=config.synth_n_unlabeled,
        n_test=config.synth_n_test,
        frames=config.frames, width=config.width, height=config.height,
        channels=config.channels, noise_std=config.synth_noise_std,
        confuser_fraction=config.synth_confuser_fraction,
        seed=config.seed)


def load_dataset(args, config):
    if getattr(args, "synthetic", False):
        return data_mod.synth_generate(synth_spec_from_config(config))
    if not getattr(args, "data", None):
        raise ConfigurationError("give --synthetic or --data DIR")
    index = data_mod.scan_dataset(args.data, config.num_classes)
    try:
        test = data_mod.scan_test_dir(args.data, index.class_names,
                                      config.frames, config.width, config.height)
    except DatasetStructureError:
        test = None
    return index, test


def run_training(config, index, test, run_dir, resume=None):
    os.makedirs(run_dir, exist_ok=True)
    write_resolved_config(config, os.path.join(run_dir, "config.resolved"))
    trainer = Trainer(config, index, test_set=test)
    final = trainer.fit(run_dir, resume_from=resume)
    return trainer, final


def cmd_train(args):
    config = resolve_config(args)
    index, test = load_dataset(args, config)
    run_dir = args.out or os.path.join(default_output_root(), f"train_seed{config.seed}")
    trainer, final = run_training(config, index, test, run_dir, resume=args.resume)
    print(f"run directory: {run_dir}")
    print(f"final checkpoint: {final}")
    if test:
        report = trainer.evaluate(test)
        print(f"test top-1 accuracy: {report['top1']:.4f}")
    return 0


def cmd_eval(args):
    import torch
    payload = torch.load(args.checkpoint, weights_only=False)
    config = config_from_flat(payload["config"])
    if args.synthetic_test:
        _, test = data_mod.synth_generate(synth_spec_from_config(config))
    else:
        if not args.data:
            raise ConfigurationError("give --synthetic-test or --data DIR")
        index = data_mod.scan_dataset(args.data, config.num_classes)
        test = data_mod.scan_test_dir(args.data, index.class_names,
                                      config.frames, config.width, config.height)
    if not test:
        raise ConfigurationError("no test clips found")
    if tuple(test[0][0].pixels.shape) != config.geometry:
        raise GeometryError(
            f"test clip geometry {test[0][0].pixels.shape} != checkpoint {config.geometry}")
    # placeholder index sized so the trainer's sanity checks pass; never trained on
    placeholder = [(data_mod.ClipSource(f"placeholder{i}", pixels=test[0][0].pixels),
                    test[0][1]) for i in range(config.batch_size)]
    trainer = Trainer(config, data_mod.DatasetIndex(
        labeled=placeholder, unlabeled=[],
        class_names=[str(i) for i in range(config.num_classes)]))
    load_checkpoint(args.checkpoint, trainer)
    report = trainer.evaluate(test)
    print(f"top-1 accuracy: {report['top1']:.4f}")
    for i, acc in enumerate(report["per_class"]):
        print(f"class {i} accuracy: {acc:.4f}")
    summary = {
        "top1": report["top1"],
        "head_top1": report["head_top1"],
        "per_class": report["per_class"],
        "confusion": report["confusion"].tolist(),
        "n_test": len(test),
        "config_hash": payload["config_hash"],
    }
    summary_path = args.summary or "eval_summary.json"
    with open(summary_path, "w") as handle:
        json.dump(summary, handle, indent=2)
    print(f"summary written to {summary_path}")
    if args.export_embeddings:
        np.savez(args.export_embeddings, embeddings=report["embeddings"],
                 labels=report["labels"])
        print(f"embeddings written to {args.export_embeddings}")
    return 0


def cmd_synth_data(args):
    config = resolve_config(args)
    index, test = data_mod.synth_generate(synth_spec_from_config(config))
    data_mod.export_dataset(index, args.out, config.frames, config.width,
                            config.height, test=test)
    print(f"synthetic dataset written to {args.out} "
          f"({len(index.labeled)} labeled, {len(index.unlabeled)} unlabeled, "
          f"{len(test)} test clips)")
    return 0


def cmd_ablate(args):
    presets = []
    for name in args.presets.split(","):
        name = name.strip()
        if name not in PRESETS:
            raise ConfigurationError(f"unknown preset {name!r}")
        if name in presets:
            logger.info("preset %s listed more than once; deduplicated", name)
            continue
        presets.append(name)
    seeds = [int(s) for s in args.seeds.split(",")]
    if not presets or not seeds:
        raise ConfigurationError("need at least one preset and one seed")
    out_dir = args.out or os.path.join(default_output_root(), "ablation")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for preset in presets:
        accuracies, mask_rates = [], []
        failed = 0
        for seed in seeds:
            run_dir = os.path.join(out_dir, f"{preset}_seed{seed}")
            try:
                flat = parse_config_file(args.config) if args.config else {}
                flat = apply_preset(flat, preset)
                flat = apply_overrides(flat, args.set or [])
                flat["train.seed"] = str(seed)
                config = config_from_flat(flat)
                index, test = data_mod.synth_generate(synth_spec_from_config(config))
                trainer, _ = run_training(config, index, test, run_dir)
                report = trainer.evaluate(test)
                accuracies.append(report["top1"])
                from .reporting import read_metrics
                cols = read_metrics(os.path.join(run_dir, "metrics.csv"))
                mask_rates.append(float(np.mean(cols["mask_rate"])))
                print(f"{preset} seed {seed}: top-1 {report['top1']:.4f}")
            except Exception as exc:  # keep the sweep alive
                logger.warning("run %s seed %s failed: %s", preset, seed, exc)
                failed += 1
        if accuracies:
            rows.append([preset, len(accuracies), float(np.mean(accuracies)),
                         float(np.std(accuracies)), float(np.mean(mask_rates))])
        else:
            rows.append([preset, 0, "failed", "failed", "failed"])
    table_path = os.path.join(out_dir, "ablation.csv")
    with open(table_path, "w") as handle:
        handle.write("preset,n_seeds,mean_acc,std_acc,mean_mask_rate\n")
        for row in rows:
            handle.write(",".join(str(v) for v in row) + "\n")
    print(f"\n{'preset':<20}{'n':>4}{'mean_acc':>12}{'std_acc':>12}{'mask_rate':>12}")
    for row in rows:
        print(f"{row[0]:<20}{row[1]:>4}{str(row[2])[:10]:>12}"
              f"{str(row[3])[:10]:>12}{str(row[4])[:10]:>12}")
    print(f"table written to {table_path}")
    return 0


def cmd_report(args):
    out_dir = args.out or os.path.join(default_output_root(), "report")
    written = generate_report(args.run_dirs, out_dir)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vidssl",
        description="Semi-supervised video classification trainer")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, preset=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a config key (repeatable)")
        if preset:
            p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--seed", type=int, help="shortcut for --set train.seed=N")

    p = sub.add_parser("train", help="run a training job")
    common(p)
    p.add_argument("--synthetic", action="store_true", help="use the synthetic benchmark")
    p.add_argument("--data", help="dataset root with labeled/ and unlabeled/")
    p.add_argument("--out", help="run directory")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="dataset root with a test/ split")
    p.add_argument("--synthetic-test", action="store_true",
                   help="regenerate the synthetic test set from the checkpoint config")
    p.add_argument("--summary", help="summary JSON path")
    p.add_argument("--export-embeddings", metavar="PATH",
                   help="write embeddings + labels as an .npz archive")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth-data", help="export the synthetic benchmark as video files")
    common(p, preset=False)
    p.add_argument("--out", required=True, help="output dataset root")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("ablate", help="sweep presets x seeds on the synthetic benchmark")
    p.add_argument("--presets", required=True, help="comma-separated preset names")
    p.add_argument("--seeds", required=True, help="comma-separated integer seeds")
    p.add_argument("--config", help="shared flat config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--out", help="sweep output directory")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="plot curves from run directories")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", help="report output directory")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
