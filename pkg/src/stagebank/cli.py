"""Command-line entry point: ``stagebank <command> [options]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace

from .bankio import BankFormatError, load_bank
from .config import ConfigError, ExperimentConfig, apply_overrides, load_config
from .data import MODES, EmbeddingFormatError, ManifestError, generate_stream, read_embeddings_arrays, write_stream
from .energy import ContractError
from .experiment import ExperimentError, ablate_experiment, run_experiment, sweep_delta
from .gradcheck import run_gradcheck
from .head import LINEAR, MLP
from .inference import predict_batch
from .report import dumps_report

DEFAULT_DELTAS = (0.0, -1.0, -3.0, -5.0, -10.0, -15.0)


def _experiment_args(p):
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--seed", type=int, action="append", help="training seed (repeatable)")
    p.add_argument("--delta", type=float, help="energy anchor")
    p.add_argument("--lambda", dest="lam", type=float, help="anchor-loss weight")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--psi", help="candidate temperatures MIN:MAX:STEP")
    p.add_argument("--mode", choices=MODES, help="synthetic stream mode")
    p.add_argument("--head", choices=(LINEAR, MLP))
    p.add_argument("--out", help="output directory")
    p.add_argument("--disable-anchor-loss", action="store_true")
    p.add_argument("--disable-calibration", action="store_true")
    p.add_argument("--shared-head", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="stagebank", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic stream as ESNF files plus a manifest")
    p.add_argument("--config", help="JSON config whose 'stream' section is used")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--stream-seed", type=int, help="seed of the generated stream")
    p.add_argument("--out", required=True, help="output directory")

    for name, text in (("run", "train and evaluate over seeds"),
                       ("ablate", "full method against each component removed"),
                       ("sweep-delta", "one run per energy anchor")):
        p = sub.add_parser(name, help=text)
        _experiment_args(p)
        if name == "sweep-delta":
            p.add_argument("--deltas", type=lambda s: [float(v) for v in s.split(",")],
                           default=list(DEFAULT_DELTAS), help="comma-separated anchors")

    p = sub.add_parser("predict", help="classify ESNF features with a saved bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--input", required=True, help="ESNF file")
    p.add_argument("--output", help="CSV path (default: stdout)")

    p = sub.add_parser("gradcheck", help="finite-difference check of the loss gradients")
    p.add_argument("--instances", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    return apply_overrides(cfg, seeds=args.seed, delta=args.delta, lam=args.lam, epochs=args.epochs,
                           batch=args.batch, psi=args.psi, mode=args.mode, head=args.head,
                           disable_anchor_loss=args.disable_anchor_loss,
                           disable_calibration=args.disable_calibration,
                           shared_head=args.shared_head)


def _print_summary(report, out):
    for v in report["variants"]:
        s = v["summary"]
        out.write(f"{v['name']:>22}  FAA {100 * s['faa_mean']:6.2f} ± {100 * s['faa_std']:.2f}"
                  f"  FF {100 * s['ff_mean']:6.2f} ± {100 * s['ff_std']:.2f}  (n={s['n_seeds']})\n")
    if "faa_spread" in report:
        out.write(f"FAA spread over anchors: {100 * report['faa_spread']:.2f} points\n")


def cmd_synth(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    spec = cfg.stream
    if args.mode:
        spec = replace(spec, mode=args.mode)
    if args.stream_seed is not None:
        spec = replace(spec, seed=args.stream_seed)
    path = write_stream(args.out, generate_stream(spec), spec.mode)
    print(path)


def cmd_experiment(args):
    cfg = _config(args)
    if args.command == "run":
        report = run_experiment(cfg, args.out)
    elif args.command == "ablate":
        report = ablate_experiment(cfg, args.out)
    else:
        report = sweep_delta(cfg, args.deltas, args.out)
    if args.out is None:
        sys.stdout.write(dumps_report(report))
    else:
        _print_summary(report, sys.stdout)


def cmd_predict(args):
    bank = load_bank(args.bank)
    stages, labels, X = read_embeddings_arrays(args.input)
    pred_stage, pred_label = predict_batch(bank, X)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(["index", "true_stage", "true_label", "pred_stage", "pred_label"])
        for i in range(len(labels)):
            w.writerow([i, int(stages[i]), int(labels[i]), int(pred_stage[i]), int(pred_label[i])])
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_gradcheck(args):
    res = run_gradcheck(args.instances, args.seed)
    print(f"instances {res.instances}  max relative error {res.max_rel_error:.3e}  "
          f"entries out of tolerance {res.failures}")
    return 0 if res.ok else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"synth": cmd_synth, "run": cmd_experiment, "ablate": cmd_experiment,
                "sweep-delta": cmd_experiment, "predict": cmd_predict, "gradcheck": cmd_gradcheck}
    try:
        return handlers[args.command](args) or 0
    except (ConfigError, ManifestError, EmbeddingFormatError, BankFormatError,
            ExperimentError, ContractError, OSError, json.JSONDecodeError) as exc:
        print(f"stagebank {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
