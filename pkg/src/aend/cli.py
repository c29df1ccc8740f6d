"""Command-line front end wiring the pieces into runnable experiments.

Subcommands: datagen, train, infer, score, ablate. Every run is pinned
by its flags plus one seed, so an experiment can be replayed from shell
history alone. Inference always binarizes with the fixed recorded
shuffle seed; see inference.INFERENCE_SHUFFLE_SEED.
"""

import argparse
import glob
import json
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import datagen as dg
from . import metrics as mx
from . import trainer as tr
from .checkpoint import load_checkpoint
from .features import load_features
from .inference import (binarize, diarize, parse_rttm, per_layer_posteriors,
                        prune_for_inference, rttm_to_activity, to_rttm)
from .tensorio import FormatError, write_tensors


def _parse_counts(text):
    """"1:20,2:20" -> {1: 20, 2: 20}."""
    out = {}
    for part in text.split(","):
        spk, num = part.split(":")
        out[int(spk)] = int(num)
    if not out:
        raise ValueError("empty counts spec")
    return out


def _require(path, what):
    if not os.path.exists(path):
        raise FileNotFoundError("%s does not exist: %s" % (what, path))


def cmd_datagen(args) -> int:
    kwargs = {"seed": args.seed}
    if args.counts:
        kwargs["train_counts"] = _parse_counts(args.counts)
    if args.valid_counts:
        kwargs["valid_counts"] = _parse_counts(args.valid_counts)
    if args.test_counts:
        kwargs["test_counts"] = _parse_counts(args.test_counts)
    if args.frames:
        kwargs["frames_min"] = kwargs["frames_max"] = args.frames
    cfg = dg.CorpusConfig(**kwargs)
    meta = dg.gen_corpus(cfg, args.out)
    for split in ("train", "valid", "test"):
        with open(os.path.join(args.out, split, "manifest.jsonl")) as f:
            entries = [json.loads(line) for line in f]
        hist = {}
        for e in entries:
            hist[e["num_speakers"]] = hist.get(e["num_speakers"], 0) + 1
        ratio = meta["overlap_ratio"][split]
        print("%s: %d recordings, speakers %s, overlap %.3f"
              % (split, len(entries), hist, ratio))
    return 0


def _train_config(args) -> tr.TrainConfig:
    cfg = tr.load_config(args.config) if args.config else tr.TrainConfig()
    for name in ("variant", "epochs", "seed"):
        value = getattr(args, name, None)
        if value is not None:
            cfg = replace(cfg, **{name: value})
    return cfg


def cmd_train(args) -> int:
    _require(args.corpus, "corpus")
    cfg = _train_config(args)
    res = tr.train(args.corpus, cfg, args.out, resume=args.resume)
    print("trained variant %d for %d optimizer steps" % (cfg.variant,
                                                         res.steps))
    print("best valid loss %.4f at epoch %d" % (res.best_valid_loss,
                                                res.best_epoch))
    if res.final_valid_der is not None:
        print("final valid DER %.2f%%" % res.final_valid_der)
    print("checkpoints: %s, %s" % (res.best_path, res.final_path))
    return 0


def _load_input_recordings(path):
    """A split directory (has manifest.jsonl) or one feature file."""
    if os.path.isdir(path):
        recs = dg.load_split(os.path.dirname(os.path.abspath(path)),
                             os.path.basename(os.path.abspath(path)))
        return [(r.id, r.features) for r in recs]
    _require(path, "feature file")
    name = os.path.splitext(os.path.basename(path))[0]
    return [(name, load_features(path))]


def cmd_infer(args) -> int:
    _require(args.checkpoint, "checkpoint")
    model = load_checkpoint(args.checkpoint)
    recs = _load_input_recordings(args.input)
    if not recs:
        print("no recordings to process")
        return 0
    if not (args.no_prune or args.per_layer):
        model = prune_for_inference(model)

    os.makedirs(args.out, exist_ok=True)
    final_lines = []
    layer_lines = None
    for rec_id, feats in recs:
        post = diarize(model, feats, threshold=args.threshold)
        act = binarize(post, threshold=args.threshold,
                       median_window=args.median_window)
        final_lines.append(to_rttm(act, rec_id))
        if args.per_layer:
            per_layer = per_layer_posteriors(model, feats,
                                             threshold=args.threshold)
            if layer_lines is None:
                layer_lines = [[] for _ in per_layer]
            for k, p in enumerate(per_layer):
                write_tensors(
                    os.path.join(args.out, "%s.layer%d.post" % (rec_id, k + 1)),
                    {"posteriors": p.posteriors.astype(np.float32)})
                act_k = binarize(p, threshold=args.threshold,
                                 median_window=args.median_window)
                layer_lines[k].append(to_rttm(act_k, rec_id))

    def write_rttm(name, chunks):
        text = "".join(c for c in chunks if c)
        with open(os.path.join(args.out, name), "w") as f:
            f.write(text)

    write_rttm("hyp.rttm", final_lines)
    if layer_lines is not None:
        for k, chunks in enumerate(layer_lines):
            write_rttm("hyp.layer%d.rttm" % (k + 1), chunks)
    print("wrote %s for %d recordings"
          % (os.path.join(args.out, "hyp.rttm"), len(recs)))
    return 0


def _score_rttm_against_split(ref_split, hyp_path) -> mx.DiarizationScore:
    recs = dg.load_split(os.path.dirname(os.path.abspath(ref_split)),
                         os.path.basename(os.path.abspath(ref_split)))
    with open(hyp_path) as f:
        hyp = parse_rttm(f.read())
    acc = mx.ScoreAccumulator()
    for rec in recs:
        segments = hyp.get(rec.id, [])
        if segments:
            act = rttm_to_activity(segments, rec.num_frames)
        else:
            act = np.zeros((1, rec.num_frames), dtype=np.int64)
        acc.add(rec.labels, act)
    return acc.score()


def _score_rttm_pair(ref_path, hyp_path, collar) -> mx.DiarizationScore:
    with open(ref_path) as f:
        ref = parse_rttm(f.read())
    with open(hyp_path) as f:
        hyp = parse_rttm(f.read())
    acc = mx.ScoreAccumulator()
    for rec_id, ref_segments in sorted(ref.items()):
        hyp_segments = hyp.get(rec_id, [])
        end = max(e for _, _, e in ref_segments + hyp_segments)
        frames = int(np.ceil(end / mx.FRAME_SECONDS))
        ref_act = rttm_to_activity(ref_segments, frames)
        if hyp_segments:
            hyp_act = rttm_to_activity(hyp_segments, frames)
        else:
            hyp_act = np.zeros((1, frames), dtype=np.int64)
        mask = mx.collar_frame_mask(ref_segments, frames, collar)
        acc.add(ref_act, hyp_act, scored_mask=mask)
    return acc.score()


def cmd_score(args) -> int:
    _require(args.ref, "reference")
    _require(args.hyp, "hypothesis")
    rows = []
    if args.per_layer:
        paths = sorted(
            glob.glob(os.path.join(args.hyp, "hyp.layer*.rttm")),
            key=lambda p: int(re.search(r"layer(\d+)", p).group(1)))
        if not paths:
            raise FileNotFoundError("no hyp.layer*.rttm under %s" % args.hyp)
        for i, path in enumerate(paths):
            name = "last" if i == len(paths) - 1 else "layer %d" % (i + 1)
            rows.append((name, _score_rttm_against_split(args.ref, path)))
    elif os.path.isdir(args.ref):
        rows.append(("hyp", _score_rttm_against_split(args.ref, args.hyp)))
    else:
        rows.append(("hyp", _score_rttm_pair(args.ref, args.hyp, args.collar)))
    print(mx.report_table(rows))
    if args.json:
        for name, score in rows:
            print(mx.score_record(name, score))
    return 0


def _score_test_split(model, corpus) -> mx.DiarizationScore:
    recs = dg.load_split(corpus, "test")
    acc = mx.ScoreAccumulator()
    for rec in recs:
        post = diarize(model, rec.features)
        acc.add(rec.labels, binarize(post))
    return acc.score()


def cmd_ablate(args) -> int:
    _require(args.corpus, "corpus")
    base = _train_config(args)
    os.makedirs(args.out, exist_ok=True)
    rows = []
    params = []
    for variant in range(1, 8):
        cfg = replace(base, variant=variant)
        run_dir = os.path.join(args.out, "variant%d" % variant)
        final = os.path.join(run_dir, "final.ckpt")
        cached = (os.path.isfile(final)
                  and tr.load_config(os.path.join(run_dir, "config.txt")) == cfg)
        if cached:
            print("variant %d: cached at %s" % (variant, run_dir))
        else:
            print("variant %d: training" % variant)
            tr.train(args.corpus, cfg, run_dir)
        model = load_checkpoint(os.path.join(run_dir, "best.ckpt"),
                                expect_variant=variant)
        params.append(model.num_parameters())
        model = prune_for_inference(model)
        rows.append(("variant %d" % variant, _score_test_split(model,
                                                               args.corpus)))

    table = mx.report_table(rows).splitlines()
    width = max(len(str(p)) for p in params)
    out_lines = [table[0] + "  " + "params".rjust(max(width, 6))]
    for line, p in zip(table[1:], params):
        out_lines.append(line + "  " + str(p).rjust(max(width, 6)))
    report = "\n".join(out_lines)
    print(report)
    with open(os.path.join(args.out, "ablation.txt"), "w") as f:
        f.write(report + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aend", description="attractor diarization experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("datagen", help="generate a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--counts", help="train split as S:N,S:N")
    p.add_argument("--valid-counts", dest="valid_counts")
    p.add_argument("--test-counts", dest="test_counts")
    p.add_argument("--frames", type=int, help="fixed recording length")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("train", help="train one variant")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value training config file")
    p.add_argument("--variant", type=int, choices=range(1, 8))
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--resume", action="store_true",
                   help="continue a run already in --out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="diarize a split or feature file")
    p.add_argument("checkpoint")
    p.add_argument("input", help="split directory or .feat file")
    p.add_argument("--out", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--median-window", dest="median_window", type=int,
                   default=11)
    p.add_argument("--per-layer", dest="per_layer", action="store_true",
                   help="also emit every layer's posteriors and RTTM")
    p.add_argument("--no-prune", dest="no_prune", action="store_true")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("score", help="score hypothesis RTTM")
    p.add_argument("ref", help="split directory or reference RTTM")
    p.add_argument("hyp", help="RTTM file, or directory with --per-layer")
    p.add_argument("--collar", type=float, default=0.25,
                   help="RTTM-vs-RTTM scoring only")
    p.add_argument("--per-layer", dest="per_layer", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="train and compare variants 1-7")
    p.add_argument("corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, FormatError, tr.TrainingDiverged) as e:
        print("error: %s" % e, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
