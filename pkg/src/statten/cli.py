"""Command-line entry points for batch experiments.

Verbs: train, eval, sweep-blocksize, sweep-combo, energy-report, gen-data,
inspect-checkpoint. Exit codes: 0 success, 2 configuration error, 3 data or
file-format error, 4 numeric failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .analysis import EnergyConstants, FiringStats, energy_report
from .autograd import TensorError
from .data import DataFormatError, gen_synthetic_temporal
from .harness import (
    ConfigError,
    build_datasets,
    load_config,
    run_experiment,
    sweep_blocksize,
    sweep_temporal_combination,
)
from .model import Recorder, evaluate, load_checkpoint, read_checkpoint


def _add_config_args(p):
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted config override, e.g. model.attention.B=4")


def cmd_train(args):
    config = load_config(args.config, args.set)
    records, _, report = run_experiment(config)
    final = [r for r in records if r.split == "test"][-1]
    print(f"final test accuracy {final.accuracy:.4f}  "
          f"loss {final.loss:.4f}  energy {report.total_pj / 1e6:.3f} uJ")
    print(f"artifacts written to {config.output_dir}")


def cmd_eval(args):
    config = load_config(args.config, args.set)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    config.optimizer.epochs = 0
    records, _, report = run_experiment(config, model=model)
    final = records[-1]
    print(f"test accuracy {final.accuracy:.4f}  loss {final.loss:.4f}  "
          f"energy {report.total_pj / 1e6:.3f} uJ")


def cmd_sweep_blocksize(args):
    config = load_config(args.config, args.set)
    sizes = [int(b) for b in args.block_sizes.split(",")]
    rows = sweep_blocksize(config, sizes)
    for r in rows:
        print(f"B={r['block_size']}: {r['status']} acc={r['accuracy']}")


def cmd_sweep_combo(args):
    config = load_config(args.config, args.set)
    rows = sweep_temporal_combination(config, args.combo)
    for r in rows:
        print(f"{r['combo']}: acc={r['accuracy']}")


def cmd_energy_report(args):
    config = load_config(args.config, args.set)
    model = load_checkpoint(args.checkpoint) if args.checkpoint else None
    if model is None:
        from .model import SpikingClassifier

        model = SpikingClassifier(config.model, seed=config.seed)
    _, _, test_x, test_y = build_datasets(config)
    recorder = Recorder()
    evaluate(model, test_x, test_y, record=recorder)
    report = energy_report(model, FiringStats.from_recorder(recorder),
                           EnergyConstants())
    report.to_csv(args.out + ".csv")
    report.to_json(args.out + ".json")
    for block, pj in report.block_totals().items():
        print(f"{block:12s} {pj / 1e6:10.4f} uJ")
    print(f"{'total':12s} {report.total_pj / 1e6:10.4f} uJ")


def cmd_gen_data(args):
    ds = gen_synthetic_temporal(args.num_classes, args.timesteps, args.noise,
                                seed=args.seed, num_samples=args.num_samples,
                                spatial=args.spatial)
    np.savez(args.out, inputs=ds.inputs, labels=ds.labels,
             dictionary=ds.dictionary)
    print(f"wrote {args.num_samples} samples "
          f"({args.num_classes} classes, T={args.timesteps}) to {args.out}")


def cmd_inspect_checkpoint(args):
    config, tensors = read_checkpoint(args.checkpoint)
    print("config:")
    for k, v in config.items():
        print(f"  {k}: {v}")
    print(f"tensors ({len(tensors)}):")
    total = 0
    for name, arr in tensors.items():
        print(f"  {name:28s} {str(arr.shape):18s} {arr.size}")
        total += arr.size
    print(f"total parameters: {total}")


def build_parser():
    p = argparse.ArgumentParser(prog="statten",
                                description="spiking-transformer experiments")
    sub = p.add_subparsers(dest="verb", required=True)

    t = sub.add_parser("train", help="train a model from a config")
    _add_config_args(t)
    t.set_defaults(fn=cmd_train)

    e = sub.add_parser("eval", help="evaluation-only run")
    _add_config_args(e)
    e.add_argument("--checkpoint", help="checkpoint to evaluate")
    e.set_defaults(fn=cmd_eval)

    sb = sub.add_parser("sweep-blocksize", help="block-size ablation sweep")
    _add_config_args(sb)
    sb.add_argument("--block-sizes", required=True,
                    help="comma-separated block sizes, e.g. 1,2,4")
    sb.set_defaults(fn=cmd_sweep_blocksize)

    sc = sub.add_parser("sweep-combo", help="temporal Q/K/V combination sweep")
    _add_config_args(sc)
    sc.add_argument("--combo", action="append", required=True,
                    help="combination, e.g. '[1,2]/[1,2]/[1,2];[3,4]/[3,4]/[3,4]'")
    sc.set_defaults(fn=cmd_sweep_combo)

    er = sub.add_parser("energy-report", help="theoretical energy accounting")
    _add_config_args(er)
    er.add_argument("--checkpoint")
    er.add_argument("--out", default="energy_report",
                    help="output path prefix (.csv/.json appended)")
    er.set_defaults(fn=cmd_energy_report)

    g = sub.add_parser("gen-data", help="generate a synthetic temporal dataset")
    g.add_argument("--num-classes", type=int, default=8)
    g.add_argument("--timesteps", type=int, default=16)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--num-samples", type=int, default=512)
    g.add_argument("--spatial", type=int, default=16)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen_data)

    ic = sub.add_parser("inspect-checkpoint", help="print checkpoint contents")
    ic.add_argument("checkpoint")
    ic.set_defaults(fn=cmd_inspect_checkpoint)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (DataFormatError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (TensorError, RuntimeError, FloatingPointError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
