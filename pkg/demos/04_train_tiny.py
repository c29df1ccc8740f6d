"""Train a pocket-sized model end to end and score it.

This is the whole workflow at toy scale: generate data, fit the baseline
variant for a couple of minutes, then diarize the held-out split and
read the error breakdown. Expect rough posteriors, not a good system;
the point is watching every stage hand off to the next.
"""

import os
import tempfile

from aend import datagen as dg
from aend import metrics as mx
from aend import trainer as tr
from aend.checkpoint import load_checkpoint
from aend.inference import binarize, diarize, prune_for_inference

OUT = os.path.join(tempfile.gettempdir(), "aend_demo_run")


def main():
    root = os.path.join(tempfile.mkdtemp(prefix="aend_demo_"), "corpus")
    dg.gen_corpus(dg.CorpusConfig(
        train_counts={1: 6, 2: 8}, valid_counts={2: 3}, test_counts={2: 4},
        frames_min=300, frames_max=300, seed=5), root)

    cfg = tr.TrainConfig(variant=1, epochs=60, batch_size=4, lr=2e-3,
                         warmup_steps=60, chunk_frames=150, eval_every=10,
                         layers=2, dim=32, heads=2, ff_dim=64,
                         max_speakers=4, augment_rotations=8, seed=0)
    print("training variant 1 (2 layers, width 32) ...")
    res = tr.train(root, cfg, OUT)
    for row in res.history:
        if row.get("valid_der") is not None:
            print("  epoch %3d  train %.3f  valid %.3f  valid DER %6.1f%%"
                  % (row["epoch"], row["train_loss"], row["valid_loss"],
                     100 * row["valid_der"]))

    model = load_checkpoint(res.best_path)
    meta = dg.load_meta(root)
    model.set_normalization(meta["feature_mean"], meta["feature_std"])
    prune_for_inference(model)

    acc = mx.ScoreAccumulator()
    for rec in dg.load_split(root, "test"):
        post = diarize(model, rec.features)
        acc.add(rec.labels, binarize(post, median_window=5))
    s = acc.score()
    print()
    print("test split: DER %.1f%% (miss %.1f%%, false alarm %.1f%%, "
          "confusion %.1f%%)" % (s.der, s.ms, s.fa, s.cf))
    print("run directory kept at %s" % OUT)


if __name__ == "__main__":
    main()
