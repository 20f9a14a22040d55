"""Command line interface for experiments, sweeps, and checkpoint inspection.

Subcommands: run, sweep-labeled, sweep-beta, sweep-buckets, ablate, dump-dist,
eval.  An experiment is described by a JSON config file (see the README for
the schema); any field can be overridden by a flag, and flags win.  The
default output directory comes from the DRILL_OUT environment variable.

Exit codes: 0 success, 1 usage or configuration error, 2 training divergence.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from .augment import AugmentConfig
from .data import load_delimited
from .experiment import (
    DatasetSpec,
    ExperimentSpec,
    dump_distribution,
    evaluate_checkpoint,
    run_ablation,
    run_experiment,
    sweep_beta,
    sweep_buckets,
    sweep_labeled,
)
from .net import TrainingDivergenceError
from .trainer import TrainConfig

__all__ = ["main", "build_parser", "UsageError"]

SWEEP_DEFAULTS = {
    "sweep-labeled": "50,100,250,500",
    "sweep-beta": "0.1,1,10,100",
    "sweep-buckets": "50,100,200,400",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); the contract wants 1
        raise UsageError(message)


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated integer list, got {text!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"expected a comma-separated number list, got {text!r}")


def _build_dataclass(cls, payload: dict, where: str):
    known = {f.name for f in dataclasses.fields(cls)}
    for key in payload:
        if key not in known:
            raise UsageError(f"{where}.{key} is not a recognised field")
    try:
        return cls(**payload)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"{where}: {exc}")


def _load_spec(args) -> ExperimentSpec:
    payload = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                payload = json.load(fh)
        except OSError as exc:
            raise UsageError(f"--config: {exc}")
        except json.JSONDecodeError as exc:
            raise UsageError(f"--config {args.config}: invalid JSON ({exc})")
        if not isinstance(payload, dict):
            raise UsageError(f"--config {args.config}: top level must be an object")

    extra = set(payload) - {"dataset", "train", "n_labeled", "variants", "seeds", "out"}
    if extra:
        raise UsageError(f"config: unknown top-level keys {sorted(extra)}")
    ds_payload = dict(payload.get("dataset", {}))
    train_payload = dict(payload.get("train", {}))
    aug_payload = dict(train_payload.pop("augment", {}))

    # flag overrides (flags win over file values)
    if getattr(args, "family", None):
        ds_payload["family"] = args.family
        ds_payload.pop("path", None)
    if getattr(args, "data", None):
        ds_payload["path"] = args.data
        ds_payload["family"] = None
    if getattr(args, "noise_std", None) is not None:
        ds_payload["noise_std"] = args.noise_std
    if getattr(args, "beta", None) is not None:
        train_payload["beta"] = args.beta
    if getattr(args, "buckets", None) is not None:
        train_payload["bucket_count"] = args.buckets
    if getattr(args, "iterations", None) is not None:
        train_payload["iterations"] = args.iterations
    if getattr(args, "learning_rate", None) is not None:
        train_payload["learning_rate"] = args.learning_rate

    if "hidden_dims" in train_payload:
        train_payload["hidden_dims"] = tuple(train_payload["hidden_dims"])
    if train_payload.get("label_range") is not None:
        train_payload["label_range"] = tuple(train_payload["label_range"])
    train_payload["augment"] = _build_dataclass(AugmentConfig, aug_payload, "train.augment")

    spec = ExperimentSpec(
        dataset=_build_dataclass(DatasetSpec, ds_payload, "dataset"),
        train=_build_dataclass(TrainConfig, train_payload, "train"),
    )
    if "n_labeled" in payload:
        spec.n_labeled = payload["n_labeled"]
    if "variants" in payload:
        spec.variants = list(payload["variants"])
    if "seeds" in payload:
        spec.seeds = list(payload["seeds"])
    if "out" in payload:
        spec.out_dir = payload["out"]

    if getattr(args, "labeled", None) is not None:
        spec.n_labeled = args.labeled
    if getattr(args, "variant", None):
        spec.variants = [v.strip().replace("-", "_").upper() for v in args.variant.split(",")]
    if getattr(args, "seeds", None):
        spec.seeds = _ints(args.seeds)
    if getattr(args, "out", None):
        spec.out_dir = args.out
    elif "out" not in payload:
        spec.out_dir = os.path.join(os.environ.get("DRILL_OUT", "runs"), args.command)

    try:
        spec.validate()
    except ValueError as exc:
        raise UsageError(str(exc))
    return spec


def _add_experiment_flags(sub, sweep: str | None = None) -> None:
    sub.add_argument("--config", help="JSON experiment config")
    sub.add_argument("--variant", help="comma-separated variant list")
    sub.add_argument("--seeds", help="comma-separated seed list")
    if sweep == "labeled":
        sub.add_argument("--labeled", dest="sweep_values", help="comma-separated sizes to sweep")
    else:
        sub.add_argument("--labeled", type=int, help="number of labeled training samples")
    if sweep == "beta":
        sub.add_argument("--beta", dest="sweep_values", help="comma-separated weights to sweep")
    else:
        sub.add_argument("--beta", type=float, help="non-target alignment weight")
    if sweep == "buckets":
        sub.add_argument("--buckets", dest="sweep_values", help="comma-separated counts to sweep")
    else:
        sub.add_argument("--buckets", type=int, help="bucket count of the distribution head")
    sub.add_argument("--iterations", type=int, help="training iterations")
    sub.add_argument("--learning-rate", dest="learning_rate", type=float)
    sub.add_argument("--family", help="synthetic dataset family")
    sub.add_argument("--data", help="delimited-text dataset path")
    sub.add_argument("--noise-std", dest="noise_std", type=float, help="synthetic label noise std")
    sub.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="drill", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    _add_experiment_flags(subs.add_parser("run", help="train and evaluate every (variant, seed) pair"))
    _add_experiment_flags(subs.add_parser("ablate", help="run the standard ablation variant set"))
    _add_experiment_flags(subs.add_parser("sweep-labeled", help="sweep the labeled sample count"), "labeled")
    _add_experiment_flags(subs.add_parser("sweep-beta", help="sweep the non-target alignment weight"), "beta")
    _add_experiment_flags(subs.add_parser("sweep-buckets", help="sweep the bucket count"), "buckets")

    dump = subs.add_parser("dump-dist", help="dump bucket probabilities for one input")
    dump.add_argument("--checkpoint", required=True)
    dump.add_argument("--input", help="comma-separated raw feature vector")
    dump.add_argument("--data", help="delimited dataset to take the row from")
    dump.add_argument("--row", type=int, help="row index into --data")
    dump.add_argument("--label-column", dest="label_column", default="label")
    dump.add_argument("--out", help="write the record to this JSON file instead of stdout")

    ev = subs.add_parser("eval", help="evaluate a checkpoint on a delimited dataset")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--label-column", dest="label_column", default="label")
    ev.add_argument("--delimiter", default=",")
    return parser


def _print_rows(rows: list[dict]) -> None:
    if not rows:
        return
    fields = list(rows[0].keys())
    print("  ".join(fields))
    for row in rows:
        print("  ".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in (row[f] for f in fields)))


def _cmd_experiment(args) -> int:
    spec = _load_spec(args)
    if args.command == "run":
        _, summaries = run_experiment(spec)
    elif args.command == "ablate":
        _, summaries = run_ablation(spec)
    else:
        values = getattr(args, "sweep_values", None) or SWEEP_DEFAULTS[args.command]
        if args.command == "sweep-labeled":
            summaries = sweep_labeled(spec, _ints(values))
        elif args.command == "sweep-beta":
            summaries = sweep_beta(spec, _floats(values))
        else:
            summaries = sweep_buckets(spec, _ints(values))
    _print_rows(summaries)
    print(f"wrote {spec.out_dir}")
    return 0


def _cmd_dump(args) -> int:
    if (args.input is None) == (args.data is None):
        raise UsageError("dump-dist needs exactly one of --input or (--data and --row)")
    if args.input is not None:
        x = _floats(args.input)
    else:
        if args.row is None:
            raise UsageError("--row is required with --data")
        data = load_delimited(args.data, label_column=args.label_column)
        if not 0 <= args.row < data.n:
            raise UsageError(f"--row {args.row} outside [0, {data.n - 1}]")
        x = data.features[args.row]
    record = dump_distribution(args.checkpoint, x)
    text = json.dumps(record, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def _cmd_eval(args) -> int:
    report = evaluate_checkpoint(
        args.checkpoint, args.data, label_column=args.label_column, delimiter=args.delimiter
    )
    print(f"n {report.n}  mae {report.mae:.6g}  r2 {report.r2:.6g}  srcc {report.srcc:.6g}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command == "dump-dist":
            return _cmd_dump(args)
        if args.command == "eval":
            return _cmd_eval(args)
        return _cmd_experiment(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except TrainingDivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
