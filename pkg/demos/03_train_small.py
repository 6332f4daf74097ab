"""Train the full semi-supervised method on a small synthetic run.

Uses narrow model widths and a short schedule so the demo finishes in about a
minute on a CPU, then prints the evaluation summary and where the metrics CSV
landed. For the full-size benchmark use the CLI:

    vidssl train --synthetic --preset firematch_full --out runs/full

Usage:
    python demos/03_train_small.py --out /tmp/train_demo
"""

import argparse

from vidssl.config import RunConfig
from vidssl.data import SynthSpec, synth_generate
from vidssl.trainer import Trainer


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="/tmp/train_demo")
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    config = RunConfig(epochs=args.epochs, seed=args.seed,
                       batch_size=4, mu=2,
                       embed_dim=32, widths=(8, 16, 16, 32),
                       synth_n_labeled_per_class=6, synth_n_unlabeled=48,
                       synth_n_test=20)
    spec = SynthSpec(n_labeled_per_class=6, n_unlabeled=48, n_test=20,
                     noise_std=config.synth_noise_std,
                     confuser_fraction=config.synth_confuser_fraction,
                     seed=args.seed)
    index, test = synth_generate(spec)
    trainer = Trainer(config, index, test_set=test)
    print(f"{trainer.steps_per_epoch} steps/epoch, {trainer.total_steps} total, "
          f"{trainer.model.parameter_count} parameters")

    trainer.fit(args.out)
    report = trainer.evaluate(test)
    print(f"test top-1 accuracy: {report['top1']:.3f}")
    print(f"per-class accuracy:  {report['per_class']}")
    print("confusion matrix:")
    print(report["confusion"])
    print(f"metrics written to {args.out}/metrics.csv")


if __name__ == "__main__":
    main()
