"""Where in the encoder does speaker information become linearly readable?

Variants with intermediate attractor heads predict posteriors from every
layer, so we can score each depth separately. Trains a small variant 2
(shared intermediate heads) and prints the per-layer error table: the
last row is the actual system output, the rows above show how much the
remaining layers still contribute.
"""

import os
import tempfile

from aend import datagen as dg
from aend import metrics as mx
from aend import trainer as tr
from aend.checkpoint import load_checkpoint
from aend.inference import binarize, per_layer_posteriors


def main():
    root = os.path.join(tempfile.mkdtemp(prefix="aend_demo_"), "corpus")
    dg.gen_corpus(dg.CorpusConfig(
        train_counts={1: 6, 2: 8}, valid_counts={2: 3}, test_counts={2: 4},
        frames_min=300, frames_max=300, seed=5), root)

    cfg = tr.TrainConfig(variant=2, epochs=60, batch_size=4, lr=2e-3,
                         warmup_steps=60, chunk_frames=150, eval_every=20,
                         layers=3, dim=32, heads=2, ff_dim=64,
                         max_speakers=4, augment_rotations=8, seed=0)
    out = os.path.join(tempfile.gettempdir(), "aend_demo_layers")
    print("training variant 2 (3 layers, intermediate heads) ...")
    res = tr.train(root, cfg, out)
    print("best valid loss %.3f" % min(r["valid_loss"] for r in res.history
                                       if r.get("valid_loss") is not None))

    model = load_checkpoint(res.best_path)
    meta = dg.load_meta(root)
    model.set_normalization(meta["feature_mean"], meta["feature_std"])

    recs = dg.load_split(root, "test")
    accs = [mx.ScoreAccumulator() for _ in range(cfg.layers)]
    for rec in recs:
        for k, post in enumerate(per_layer_posteriors(model, rec.features)):
            accs[k].add(rec.labels, binarize(post, median_window=5))

    print()
    rows = [("layer %d" % (k + 1) if k < cfg.layers - 1 else "last",
             accs[k].score()) for k in range(cfg.layers)]
    print(mx.report_table(rows))


if __name__ == "__main__":
    main()
