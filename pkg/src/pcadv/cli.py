"""Command-line entry point: ``pcadv gen-data | train | attack | matrix | export``.

Exit codes: 0 success, 2 usage error, 1 runtime error.
"""

import argparse
import dataclasses
import sys
from pathlib import Path

from .attack import ATTACK_KINDS, AttackConfig
from .evaluation import emit_report, run_job, run_matrix, write_run_log
from .geometry import MetricKind
from .io import write_ply
from .model import load_checkpoint, save_checkpoint
from .shapes import SHAPE_KINDS
from .train import TrainConfig, evaluate_accuracy, generate_dataset, load_dataset, save_dataset, train_model

# fields that get a dedicated flag or make no sense on the command line
_ATTACK_SKIP = {"target", "template", "k", "metric"}
_CHOICES = {"init_from": ("victim", "target"), "template_shape": SHAPE_KINDS}


class UsageError(Exception):
    pass


def _widths(text):
    try:
        out = tuple(int(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError("widths must be positive integers")
    return out


def _add_dataclass_flags(parser, cls, skip=(), prefix=""):
    group = parser.add_argument_group(f"{cls.__name__} fields")
    for f in dataclasses.fields(cls):
        if f.name in skip:
            continue
        flag = "--" + prefix + f.name.replace("_", "-")
        default = f.default
        kind = _widths if isinstance(default, tuple) else type(default)
        group.add_argument(flag, dest=prefix.replace("-", "_") + f.name, type=kind, default=None,
                           choices=_CHOICES.get(f.name), metavar=f.name.upper(),
                           help=f"default: {default}")


def _collect(args, cls, skip=(), prefix=""):
    out = {}
    for f in dataclasses.fields(cls):
        value = getattr(args, prefix.replace("-", "_") + f.name, None)
        if f.name not in skip and value is not None:
            out[f.name] = value
    return out


def _common_model_flags(p):
    p.add_argument("--data", required=True, type=Path, help="dataset directory")
    p.add_argument("--model", required=True, type=Path, help="checkpoint file")


def build_parser():
    parser = argparse.ArgumentParser(prog="pcadv", description=__doc__.splitlines()[0])
    parser.add_argument("--config", type=Path,
                        help="key=value file; its entries act as defaults beneath explicit flags")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate the synthetic shape dataset")
    p.add_argument("--classes", type=int, default=len(SHAPE_KINDS),
                   help=f"number of shape classes, 1..{len(SHAPE_KINDS)}")
    p.add_argument("--per-class", type=int, default=50)
    p.add_argument("--points", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)

    p = sub.add_parser("train", help="train the classifier and write a checkpoint")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path, help="checkpoint to write")
    _add_dataclass_flags(p, TrainConfig)

    for name, helptext in (("attack", "run one targeted attack"), ("matrix", "attack every victim/target pair")):
        p = sub.add_parser(name, help=helptext)
        _common_model_flags(p)
        p.add_argument("--kind", required=True, choices=ATTACK_KINDS)
        p.add_argument("--metric", choices=[MetricKind.HAUSDORFF.value, MetricKind.CHAMFER.value],
                       help="distance for --kind points (default chamfer)")
        p.add_argument("--k", type=int, choices=(1, 2, 3), default=1, help="clusters/objects to add")
        p.add_argument("--log", type=Path, help="append JSON-lines job records here")
        if name == "attack":
            p.add_argument("--victim-id", required=True, type=int, help="dataset example index")
            p.add_argument("--target", required=True, type=int, help="target class index")
            p.add_argument("--export-ply", type=Path, metavar="DIR",
                           help="write victim, adversarial and added-point clouds as PLY")
        else:
            p.add_argument("--victims-per-class", type=int, default=5)
            p.add_argument("--workers", type=int, default=1)
            p.add_argument("--out", required=True, type=Path, help="report directory")
            p.add_argument("--timing", action="store_true", help="include wall time in reports")
        _add_dataclass_flags(p, AttackConfig, skip=_ATTACK_SKIP)

    p = sub.add_parser("export", help="write one dataset example as PLY")
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--id", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    return parser


def read_config(path):
    """Parse ``key = value`` lines; ``#`` starts a comment. Keys use flag spelling."""
    entries = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        entries[key.lstrip("-").replace("-", "_")] = value
    return entries


def _parse(parser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", type=Path)
    known, rest = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((tok for tok in rest if tok in subparsers), None)
    if known.config is not None and command is not None:
        if not known.config.is_file():
            parser.error(f"config file {known.config} not found")
        try:
            entries = read_config(known.config)
        except UsageError as exc:
            parser.error(str(exc))
        sub = subparsers[command]
        actions = {a.dest: a for a in sub._actions if a.dest != "help"}
        unknown = sorted(set(entries) - set(actions))
        if unknown:
            parser.error(f"unknown config keys for {command}: {', '.join(unknown)}")
        defaults = {}
        for key, text in entries.items():
            action = actions[key]
            if action.nargs == 0:
                defaults[key] = text.lower() in ("1", "true", "yes", "on")
            else:
                defaults[key] = text
            action.required = False
        # string defaults still go through each flag's type conversion
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
        for key in defaults:
            action, value = actions[key], getattr(args, key)
            if action.choices is not None and value not in action.choices:
                parser.error(f"config value {value!r} invalid for --{key.replace('_', '-')}")
        return args
    return parser.parse_args(argv)


def _require_dir(path, what):
    if not path.is_dir():
        raise FileNotFoundError(f"{what} {path} does not exist")


def _require_file(path, what):
    if not path.is_file():
        raise FileNotFoundError(f"{what} {path} does not exist")


def _load_pair(args):
    _require_dir(args.data, "dataset directory")
    _require_file(args.model, "checkpoint")
    return load_checkpoint(args.model), load_dataset(args.data)


def _attack_config(args):
    fields = _collect(args, AttackConfig, skip=_ATTACK_SKIP)
    fields["k"] = args.k
    if args.metric is not None:
        if args.kind != "points":
            raise UsageError("--metric only applies to --kind points")
        fields["metric"] = args.metric
    try:
        return AttackConfig.for_kind(args.kind, **fields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_gen_data(args):
    if not 1 <= args.classes <= len(SHAPE_KINDS):
        raise UsageError(f"--classes must lie in 1..{len(SHAPE_KINDS)}")
    if args.per_class < 1 or args.points < 1:
        raise UsageError("--per-class and --points must be positive")
    data = generate_dataset(args.per_class, args.points, args.seed, SHAPE_KINDS[: args.classes])
    save_dataset(data, args.out)
    print(f"wrote {len(data.labels)} clouds to {args.out}")


def cmd_train(args):
    _require_dir(args.data, "dataset directory")
    try:
        cfg = TrainConfig(**_collect(args, TrainConfig))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    data = load_dataset(args.data)
    params = train_model(data, cfg)
    if args.out.parent != Path(""):
        args.out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(args.out, params)
    print(f"{evaluate_accuracy(params, data, 'train')!r} {evaluate_accuracy(params, data, 'test')!r}")


def _export(result, victim_id, directory):
    directory.mkdir(parents=True, exist_ok=True)
    stem = f"{result.kind}_{victim_id}_to_{result.target}"
    write_ply(directory / f"{stem}_victim.ply", result.original)
    union = result.union
    if union is not None:
        write_ply(directory / f"{stem}_adversarial.ply", union)
    if result.added is not None:
        write_ply(directory / f"{stem}_added.ply", result.added)


def cmd_attack(args):
    cfg = _attack_config(args)
    params, data = _load_pair(args)
    record = run_job(params, data, args.kind, cfg, args.victim_id, args.target)
    if args.log is not None:
        write_run_log([record], args.log)
    if args.export_ply is not None and record.result is not None:
        _export(record.result, args.victim_id, args.export_ply)
    print(record.to_json())
    if record.error:
        print(f"error: {record.error}", file=sys.stderr)
        return 1
    return 0


def cmd_matrix(args):
    cfg = _attack_config(args)
    if args.workers < 1 or args.victims_per_class < 1:
        raise UsageError("--workers and --victims-per-class must be positive")
    params, data = _load_pair(args)
    report = run_matrix(params, data, args.kind, cfg, args.victims_per_class, args.workers, args.log)
    paths = emit_report(report, args.out, include_timing=args.timing)
    rate = report.cases["average"].success_rate if report.cases else float("nan")
    print(f"{args.kind} k={cfg.k}: success_rate={rate!r} jobs={len(report.records)}")
    for path in paths:
        print(path)


def cmd_export(args):
    _require_dir(args.data, "dataset directory")
    data = load_dataset(args.data)
    if not 0 <= args.id < len(data.labels):
        raise UsageError(f"--id must lie in 0..{len(data.labels) - 1}")
    write_ply(args.out, data.clouds[args.id])


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "attack": cmd_attack,
    "matrix": cmd_matrix,
    "export": cmd_export,
}


def main(argv=None):
    parser = build_parser()
    args = _parse(parser, argv)
    try:
        return COMMANDS[args.command](args) or 0
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"pcadv: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"pcadv: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
