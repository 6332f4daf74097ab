"""Generate the synthetic fire-like benchmark and save a contact sheet.

The benchmark has two classes: a warm blob that grows over time versus a warm
blob of constant size that drifts. Both classes share the same palette and
carry random static distractor blobs, so a classifier has to use the temporal
dynamics rather than color or size.

Usage:
    python demos/01_synthetic_data.py --out /tmp/synth_demo
"""

import argparse
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from vidssl.data import SynthSpec, export_dataset, synth_generate


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="/tmp/synth_demo")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    spec = SynthSpec(n_labeled_per_class=4, n_unlabeled=6, n_test=4, seed=args.seed)
    index, test = synth_generate(spec)
    print(f"{len(index.labeled)} labeled, {len(index.unlabeled)} unlabeled, "
          f"{len(test)} test clips, classes {index.class_names}")

    # contact sheet: one row per labeled clip, one column per frame
    fig, axes = plt.subplots(4, spec.frames, figsize=(spec.frames * 1.4, 4 * 1.5))
    picks = [index.labeled[0], index.labeled[1], index.labeled[4], index.labeled[5]]
    for row, (source, label) in enumerate(picks):
        pixels = source.load(spec.frames, spec.width, spec.height)
        for t in range(spec.frames):
            ax = axes[row][t]
            # [C, T, W, H] -> H x W x C for imshow
            ax.imshow(pixels[:, t].transpose(2, 1, 0))
            ax.set_xticks([])
            ax.set_yticks([])
            if t == 0:
                ax.set_ylabel(index.class_names[label], fontsize=8)
    os.makedirs(args.out, exist_ok=True)
    sheet = os.path.join(args.out, "contact_sheet.png")
    fig.savefig(sheet, dpi=110, bbox_inches="tight")
    print(f"wrote {sheet}")

    # the same data as lossless video files, re-scannable as a dataset root
    dataset_root = os.path.join(args.out, "dataset")
    export_dataset(index, dataset_root, spec.frames, spec.width, spec.height, test=test)
    print(f"wrote video dataset under {dataset_root}")


if __name__ == "__main__":
    main()
