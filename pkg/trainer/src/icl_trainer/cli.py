"""Command line: train a model on dataset files, emit prediction files."""

from __future__ import annotations

import argparse
import json
import sys

from .data import load_dataset
from .model import TrainConfig
from .predict import predict, predictions_document, write_predictions
from .train import load_checkpoint, save_checkpoint, train


def _cmd_train(args) -> int:
    cfg_dict = {}
    if args.config:
        with open(args.config) as fh:
            cfg_dict = json.load(fh)
    for key in ("layers", "heads", "d_model", "lr", "batch_size", "steps",
                "target", "seed", "curriculum", "curriculum_scale"):
        v = getattr(args, key)
        if v is not None:
            cfg_dict[key] = v
    datasets = [load_dataset(p) for p in args.data]
    cfg_dict.setdefault("scheme", datasets[0].scheme)
    cfg = TrainConfig.from_dict(cfg_dict)
    model, trace = train(cfg, datasets, log_every=args.log_every)
    save_checkpoint(args.out, model, cfg, trace,
                    meta={"data": args.data})
    print(f"trained {len(trace)} steps (final loss {trace[-1]:.5f}); "
          f"checkpoint at {args.out}")
    return 0


def _cmd_predict(args) -> int:
    model, cfg, _ = load_checkpoint(args.checkpoint)
    ds = load_dataset(args.data)
    if ds.scheme != cfg.scheme:
        print(f"error: dataset scheme {ds.scheme!r} does not match the "
              f"checkpoint's {cfg.scheme!r}", file=sys.stderr)
        return 2
    preds = predict(model, ds, cfg.target)
    doc = predictions_document(args.algorithm, ds, preds)
    write_predictions(args.out, doc)
    print(f"wrote {ds.count} x {ds.N} predictions to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icl-trainer")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train on one or more dataset files")
    t.add_argument("--data", nargs="+", required=True,
                   help="dataset file(s); several files act as curriculum phases")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--config", default=None, help="JSON TrainConfig")
    t.add_argument("--layers", type=int, default=None)
    t.add_argument("--heads", type=int, default=None)
    t.add_argument("--d-model", dest="d_model", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", dest="batch_size", type=int, default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--target", choices=("observation", "state"), default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--curriculum", action="store_true", default=None)
    t.add_argument("--curriculum-scale", dest="curriculum_scale", type=float,
                   default=None)
    t.add_argument("--log-every", type=int, default=0)
    t.set_defaults(func=_cmd_train)

    g = sub.add_parser("predict", help="emit a prediction file for a dataset")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--data", required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--algorithm", default="icl",
                   help="algorithm label stored in the prediction file")
    g.set_defaults(func=_cmd_predict)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
