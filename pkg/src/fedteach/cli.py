"""Command line entry point: ``run``, ``compare`` and ``teacher-train``."""
import argparse
import json
import sys

from .config import load_config
from .errors import FedTeachError
from .pipeline import compare_runs, format_report, run_pipeline, run_teacher_only


def _add_config_args(p):
    p.add_argument("config", nargs="?", help="YAML/JSON config or a previous run manifest")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config value, e.g. federated.rounds=10")
    p.add_argument("--seed", type=int, help="root seed (same as --set seed=N)")
    p.add_argument("--output-dir", help="directory for run artifacts")


def _config(args):
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return load_config(args.config, overrides, output_dir=args.output_dir)


def cmd_run(args):
    cfg = _config(args)
    manifest = run_pipeline(cfg)
    with open(manifest.artifacts["metrics"]) as f:
        m = json.load(f)
    g = m["final"]["groups"]
    fmt = lambda v: "n/a" if v is None else f"{v:.4f}"
    print(f"stage={m['final_stage']} accuracy={m['final']['accuracy']:.4f} "
          f"many={fmt(g['many'])} medium={fmt(g['medium'])} few={fmt(g['few'])}")
    print(f"manifest: {cfg.output_dir}/manifest.json")
    return 0


def cmd_compare(args):
    report = compare_runs(args.manifest_a, args.manifest_b)
    if args.json:
        print(json.dumps(report, indent=1, sort_keys=True))
    else:
        print(format_report(report))
    return 0


def cmd_teacher_train(args):
    cfg = _config(args)
    path, teacher = run_teacher_only(cfg)
    print(f"teacher heldout accuracy={teacher.metadata['heldout_accuracy']:.4f}")
    print(f"checkpoint: {path}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fedteach",
        description="Simulate federated training on long-tailed data with a frozen teacher.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the full pipeline")
    _add_config_args(p)
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("compare", help="diff the final metrics of two runs")
    p.add_argument("manifest_a")
    p.add_argument("manifest_b")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_compare)
    p = sub.add_parser("teacher-train", help="train and save only the teacher bundle")
    _add_config_args(p)
    p.set_defaults(func=cmd_teacher_train)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FedTeachError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
