"""Command-line interface.

Subcommands:

* ``generate``        sample a dataset file from a sampler config
* ``filter``          run one algorithm over a dataset -> prediction file
* ``vm-run``          compile and execute a tape program over a dataset
* ``evaluate``        MSPD / state-error curves -> CSV + JSON
* ``export-context``  re-encode a dataset into another scheme
* ``compare``         MSPD between two prediction files

Configs are single JSON files; ``--seed`` overrides the seed they carry.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import codec, harness, tape
from .errors import ConfigurationError
from .sampler import SamplerConfig

__all__ = ["main"]


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _sampler_from(cfg: dict, seed_override: int | None) -> SamplerConfig:
    d = dict(cfg.get("sampler", {}))
    if seed_override is not None:
        d["seed"] = seed_override
    return SamplerConfig.from_dict(d)


def _cmd_generate(args) -> int:
    cfg = _load_json(args.config)
    sampler = _sampler_from(cfg, args.seed)
    scheme = cfg.get("scheme", "scalar")
    doc = harness.generate_dataset(sampler, cfg.get("count", 100), scheme,
                                   cfg.get("step", 0))
    codec.write_dataset(args.out, doc)
    print(f"wrote {doc['count']} {scheme} examples "
          f"(n={doc['n']}, m={doc['m']}, N={doc['N']}) to {args.out}")
    return 0


def _cmd_filter(args) -> int:
    doc = codec.read_dataset(args.dataset)
    algo = harness.parse_algorithm_id(args.algorithm)
    examples = harness.examples_from_dataset(doc)
    preds = harness.predictions_for(examples, algo)
    pdoc = codec.predictions_document(str(algo), doc, preds)
    codec.write_predictions(args.out, pdoc)
    print(f"wrote {str(algo)} predictions for {doc['count']} examples to {args.out}")
    return 0


def _cmd_vm_run(args) -> int:
    doc = codec.read_dataset(args.dataset)
    mode = args.mode
    examples = harness.examples_from_dataset(doc)
    n, N = doc["n"], doc["N"]
    program = (tape.compile_kf_program(n, N) if mode == "kf"
               else tape.compile_dual_kf_program(n, N))
    if args.asm:
        with open(args.asm, "w") as fh:
            fh.write(tape.to_assembly(program))
        print(f"wrote program assembly ({len(program.instructions)} "
              f"instructions) to {args.asm}")
    algo = harness.AlgorithmId("vm-kf" if mode == "kf" else "vm-dual")
    preds = harness.predictions_for(examples, algo)
    if args.out:
        pdoc = codec.predictions_document(str(algo), doc, preds)
        codec.write_predictions(args.out, pdoc)
        print(f"wrote {str(algo)} predictions to {args.out}")
    if args.trace:
        e = examples[args.example]
        scheme = "scalar" if mode == "kf" else "scalar-no-params"
        ctx = codec.encode(e.params, e.y_seq, scheme)
        t = tape.build_tape(ctx, mode)
        _, entries = tape.run_program(t, program, trace=True)
        with open(args.trace, "w") as fh:
            fh.write(f"# per-instruction trace, example {args.example}\n")
            for i, opcode, dst, value in entries:
                flat = " ".join(repr(float(v)) for v in np.asarray(value).ravel()[:8])
                suffix = " ..." if np.asarray(value).size > 8 else ""
                fh.write(f"{i:5d} {opcode:9s} {dst:10s} {flat}{suffix}\n")
        print(f"wrote execution trace to {args.trace}")
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_json(args.config)
    result = harness.evaluate(cfg, seed_override=args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    prefix = cfg.get("output_prefix", "eval")
    mspd_csv = os.path.join(args.out_dir, f"{prefix}_mspd.csv")
    with open(mspd_csv, "w") as fh:
        fh.write(harness.mspd_rows_to_csv(result["mspd_rows"]))
    summary = {"algorithms": result["algorithms"],
               "mspd": result["mspd_rows"], "state_mse": result["state_rows"]}
    with open(os.path.join(args.out_dir, f"{prefix}_results.json"), "w") as fh:
        json.dump(summary, fh, indent=1)
    print(f"wrote {len(result['mspd_rows'])} MSPD rows to {mspd_csv}")
    if result["state_rows"]:
        state_csv = os.path.join(args.out_dir, f"{prefix}_state_mse.csv")
        with open(state_csv, "w") as fh:
            fh.write(harness.state_rows_to_csv(result["state_rows"]))
        print(f"wrote {len(result['state_rows'])} state-MSE rows to {state_csv}")
    if args.save_dataset:
        codec.write_dataset(os.path.join(args.out_dir, f"{prefix}_dataset.json"),
                            result["dataset"])
    return 0


def _cmd_export_context(args) -> int:
    doc = codec.read_dataset(args.dataset)
    examples = harness.examples_from_dataset(doc)
    out_doc = {**doc, "scheme": args.scheme, "examples": []}
    for e in examples:
        out_doc["examples"].append(
            codec.dataset_record(e.params, _TrajView(e), args.scheme))
    codec.write_dataset(args.out, out_doc)
    print(f"re-encoded {doc['count']} examples from {doc['scheme']!r} to "
          f"{args.scheme!r} in {args.out}")
    return 0


class _TrajView:
    """Adapts a harness example to the (x_seq, y_seq) surface the codec needs."""

    def __init__(self, e):
        self.x_seq = e.x_seq
        self.y_seq = e.y_seq
        self.N = e.y_seq.shape[0]


def _cmd_compare(args) -> int:
    a = codec.read_predictions(args.a)
    b = codec.read_predictions(args.b)
    if args.at_length is not None:
        value = harness.mspd(a, b, args.at_length)
        print(f"MSPD({a['algorithm']}, {b['algorithm']}) at length "
              f"{args.at_length}: {value!r}")
        return 0
    values, stderr = harness.mspd_curve(a, b)
    rows = [{"context_length": t + 1, "algorithm_a": a["algorithm"],
             "algorithm_b": b["algorithm"], "mspd": float(values[t]),
             "stderr": float(stderr[t]), "batch": a["count"]}
            for t in range(values.shape[0])]
    text = harness.mspd_rows_to_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
        print(f"wrote MSPD curve to {args.out}")
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ickalman",
                                description="filtering and evaluation toolkit "
                                            "for random linear dynamical systems")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a dataset file")
    g.add_argument("--config", required=True, help="JSON config with count/scheme/sampler")
    g.add_argument("--seed", type=int, default=None, help="override the sampler seed")
    g.add_argument("--out", required=True)
    g.set_defaults(func=_cmd_generate)

    f = sub.add_parser("filter", help="run an algorithm over a dataset")
    f.add_argument("--dataset", required=True)
    f.add_argument("--algorithm", required=True,
                   help="kf | kf-seq | dual-kf | vm-kf | vm-dual | sgd(a) | "
                        "ols | ridge(l) | external(path)")
    f.add_argument("--out", required=True)
    f.set_defaults(func=_cmd_filter)

    v = sub.add_parser("vm-run", help="compile and execute a tape program")
    v.add_argument("--dataset", required=True)
    v.add_argument("--mode", choices=("kf", "dual"), default="kf")
    v.add_argument("--out", default=None, help="prediction file to write")
    v.add_argument("--asm", default=None, help="write the program assembly here")
    v.add_argument("--trace", default=None, help="write a per-instruction trace here")
    v.add_argument("--example", type=int, default=0, help="example index to trace")
    v.set_defaults(func=_cmd_vm_run)

    e = sub.add_parser("evaluate", help="MSPD and state-error curves")
    e.add_argument("--config", required=True)
    e.add_argument("--seed", type=int, default=None, help="override the sampler seed")
    e.add_argument("--out-dir", required=True)
    e.add_argument("--save-dataset", action="store_true")
    e.set_defaults(func=_cmd_evaluate)

    x = sub.add_parser("export-context", help="re-encode a dataset into another scheme")
    x.add_argument("--dataset", required=True)
    x.add_argument("--scheme", required=True, choices=codec.SCHEMES)
    x.add_argument("--out", required=True)
    x.set_defaults(func=_cmd_export_context)

    c = sub.add_parser("compare", help="MSPD between two prediction files")
    c.add_argument("--a", required=True)
    c.add_argument("--b", required=True)
    c.add_argument("--at-length", type=int, default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
