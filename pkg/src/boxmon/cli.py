"""Command-line surface: build, eval, check, synth, bench, inspect.

Exit codes: 0 success, 1 usage, 2 data/format error, 3 invariant
violation. Defaults may come from an INI config file (``--config`` or the
``BOXMON_CONFIG`` environment variable); explicit flags always win.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
from pathlib import Path

from . import __version__
from .bench import bench_throughput
from .clustering import ClusterConfig
from .errors import (
    BoxmonError,
    EmptyInputError,
    InvariantViolationError,
    SchemaError,
)
from .evaluation import GaussianMonitor, evaluate_registry, micro_f1_threshold
from .features import Label
from .formats import (
    load_registry,
    read_features,
    save_registry,
    sha256_file,
    write_bamf,
    write_csv,
)
from .monitor import BuildConfig, build_registry
from .synth import SynthConfig, SynthPreset, synth_generate
from .validation import as_float_vector, check_dimension

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INVARIANT = 3

CONFIG_ENV_VAR = "BOXMON_CONFIG"
_GLOBAL_SECTION = "boxmon"

_BOOL_WORDS = {
    "1": True, "true": True, "yes": True, "on": True,
    "0": False, "false": False, "no": False, "off": False,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _flag_schema(subparser) -> dict:
    """Map dest -> (flag, type, choices, is_bool) for one subcommand.

    Every long flag is mirrored by a config key of the same name, so a
    config file can default anything the command line can set.
    """
    schema = {}
    for action in subparser._actions:
        if not action.option_strings or action.dest in ("help",):
            continue
        is_bool = isinstance(
            action, (argparse._StoreTrueAction, argparse._StoreFalseAction)
        )
        schema[action.dest] = (
            action.option_strings[0],
            action.type or str,
            action.choices,
            is_bool,
        )
    return schema


def _parse_config_value(dest, raw, schema, where):
    flag, typ, choices, is_bool = schema[dest]
    if is_bool:
        try:
            return _BOOL_WORDS[raw.strip().lower()]
        except KeyError:
            raise SchemaError(f"{where}: {dest} must be a boolean, got {raw!r}")
    try:
        value = typ(raw)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: bad value for {dest!r}: {exc}")
    if choices is not None and value not in choices:
        raise SchemaError(f"{where}: {dest} must be one of {sorted(choices)}")
    return value


def _apply_config(parser, args, argv) -> None:
    """Fill unset flags from the INI file: a [boxmon] section supplies
    defaults for every command, a per-command section overrides it, and
    explicit command-line flags always win."""
    source = args.config or os.environ.get(CONFIG_ENV_VAR)
    if not source:
        return
    ini = configparser.ConfigParser()
    if not ini.read(source):
        raise SchemaError(f"config file not found: {source}")
    all_schemas = parser._command_schemas
    schema = all_schemas[args.command]
    known_anywhere = {d for s in all_schemas.values() for d in s}
    merged: dict[str, tuple[str, str]] = {}
    for section in (_GLOBAL_SECTION, args.command):
        if not ini.has_section(section):
            continue
        for key, raw in ini.items(section):
            dest = key.replace("-", "_")
            if dest not in known_anywhere:
                raise SchemaError(f"config file {source}: unknown key {key!r}")
            if dest in schema:
                merged[dest] = (f"config file {source} [{section}]", raw)
            elif section != _GLOBAL_SECTION:
                raise SchemaError(
                    f"config file {source}: key {key!r} does not apply to "
                    f"the {args.command} command"
                )
    tokens = list(argv) if argv is not None else sys.argv[1:]
    for dest, (where, raw) in merged.items():
        flag = schema[dest][0]
        explicit = any(t == flag or t.startswith(flag + "=") for t in tokens)
        if not explicit:
            setattr(args, dest, _parse_config_value(dest, raw, schema, where))


def _require(parser, args, *dests) -> None:
    for dest in dests:
        if getattr(args, dest, None) is None:
            flag = "--" + dest.replace("_", "-")
            parser.error(
                f"{flag} is required (set it on the command line or in the "
                f"config file)"
            )


def _build_config(args) -> BuildConfig:
    return BuildConfig(
        cluster=ClusterConfig(
            density=args.density,
            cap=args.cap,
            seed=args.seed,
            max_iterations=args.max_iterations,
            shift_tolerance=args.shift_tolerance,
        ),
        target_tpr=args.target_tpr,
        score_threshold=args.score_threshold,
        include_unlabeled=args.include_unlabeled,
    )


def cmd_build(args) -> int:
    features = read_features(args.features)
    score_threshold = args.score_threshold
    if args.auto_threshold:
        scored = [
            (float(features.scores[i]), int(features.labels[i]) == int(Label.ID))
            for i in range(len(features))
        ]
        total_gt = args.total_ground_truth
        if total_gt is None:
            total_gt = sum(1 for _, tp in scored if tp)
        choice = micro_f1_threshold(scored, total_gt)
        score_threshold = choice.threshold
        flag = " (degenerate: no threshold yields a true positive)" if choice.degenerate else ""
        print(f"auto threshold: {score_threshold} (micro F1 {choice.f1:.4f}){flag}")
    args.score_threshold = score_threshold
    config = _build_config(args)
    registry = build_registry(features, config, source_digest=sha256_file(args.features))
    save_registry(registry, args.out)
    print(f"monitor file written: {args.out}")
    print(f"layer_tag={registry.layer_tag} dimension={registry.dimension}")
    values = features.values64()
    print(f"{'class':<20} {'boxes':>7} {'records':>8} {'train_tpr':>10}")
    for key, monitor in registry.monitors.items():
        rows = [i for i, k in enumerate(features.class_keys) if k == key]
        tpr = monitor.coverage(values[rows])
        print(f"{key:<20} {monitor.box_count:>7} {len(rows):>8} {tpr:>10.4f}")
    return EXIT_OK


def cmd_eval(args) -> int:
    registry = load_registry(args.monitor)
    id_features = read_features(args.id)
    ood_features = read_features(args.ood)
    baseline = None
    if args.baseline == "gaussian":
        fit_on = read_features(args.baseline_fit) if args.baseline_fit else id_features
        baseline = GaussianMonitor.fit(fit_on, regularization=args.regularization)
    outcome = evaluate_registry(
        registry, id_features, ood_features, args.target_tpr, baseline
    )
    report = outcome.monitor_report
    print(f"{'monitor':<10} fpr@{args.target_tpr:g}={report.fpr:.4f} "
          f"threshold={report.distance_threshold:.6g} "
          f"achieved_tpr={report.achieved_tpr:.4f} "
          f"id={report.id_count} ood={report.ood_count}")
    if outcome.baseline_report is not None:
        b = outcome.baseline_report
        print(f"{'baseline':<10} fpr@{args.target_tpr:g}={b.fpr:.4f} "
              f"threshold={b.distance_threshold:.6g} "
              f"achieved_tpr={b.achieved_tpr:.4f}")
    print(f"verdict operating point: tpr={outcome.verdict_tpr:.4f} "
          f"fpr={outcome.verdict_fpr:.4f}")
    for key, sub in report.per_class.items():
        print(f"  class {key:<16} fpr={sub.fpr:.4f} "
              f"threshold={sub.distance_threshold:.6g} "
              f"id={sub.id_count} ood={sub.ood_count}")
    if outcome.skipped_id or outcome.skipped_ood:
        print(f"skipped unknown-class records: id={outcome.skipped_id} "
              f"ood={outcome.skipped_ood}")
    if args.report:
        doc = {
            "format": "boxmon-eval-report",
            "schema_version": 1,
            **outcome.to_dict(),
        }
        Path(args.report).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"report written: {args.report}")
    return EXIT_OK


def _check_line(registry, line: str):
    record = json.loads(line)
    if not isinstance(record, dict):
        raise ValueError("record must be a JSON object")
    try:
        class_key = str(record["class_key"])
        values = record["values"]
    except KeyError as exc:
        raise ValueError(f"missing field {exc.args[0]!r}")
    arr = as_float_vector(values, name="values")
    check_dimension(arr.size, registry.dimension, context="values")
    return registry.verdict(arr, class_key)


def cmd_check(args) -> int:
    registry = load_registry(args.monitor)
    stdin = args._stdin if args._stdin is not None else sys.stdin
    stdout = args._stdout if args._stdout is not None else sys.stdout
    failures = 0
    for raw in stdin:
        line = raw.rstrip("\n")
        try:
            verdict = _check_line(registry, line)
            payload = {
                "decision": verdict.decision.value,
                "distance": verdict.distance,
                "nearest_box_index": verdict.nearest_box_index,
            }
        except (ValueError, TypeError) as exc:
            failures += 1
            payload = {"error": str(exc)}
        stdout.write(json.dumps(payload) + "\n")
        stdout.flush()
    return EXIT_DATA if failures else EXIT_OK


def cmd_synth(args) -> int:
    if not args.out and not args.csv:
        raise SchemaError("pass --out and/or --csv so the samples go somewhere")
    config = SynthConfig(
        preset=SynthPreset(args.preset),
        n_points=args.n,
        dimension=args.dim,
        n_components=args.components,
        separation=args.separation,
        spread=args.spread,
        class_keys=tuple(args.class_keys.split(",")) if args.class_keys else None,
        exclusion_radius=args.exclusion_radius,
        margin=args.margin,
        ring_inner=args.ring_inner,
        ring_outer=args.ring_outer,
        seed=args.seed,
        layer_tag=args.layer_tag,
    )
    features = synth_generate(config)
    if args.out:
        write_bamf(features, args.out)
        print(f"dump written: {args.out} ({len(features)} records, "
              f"dimension {features.dimension})")
    if args.csv:
        write_csv(features, args.csv)
        print(f"csv written: {args.csv}")
    return EXIT_OK


def cmd_bench(args) -> int:
    report = bench_throughput(
        boxes=args.boxes,
        dimension=args.dim,
        queries=args.queries,
        inside_fraction=args.inside_fraction,
        seed=args.seed,
        threads=args.threads,
    )
    print(f"{'boxes':>8} {'dim':>6} {'queries':>8} {'inside':>7} "
          f"{'mean_ms':>9} {'median_ms':>10} {'p99_ms':>9} {'total_s':>8}")
    print(f"{report.boxes:>8} {report.dimension:>6} {report.queries:>8} "
          f"{report.inside_fraction:>7.2f} {report.mean_ms:>9.3f} "
          f"{report.median_ms:>10.3f} {report.p99_ms:>9.3f} "
          f"{report.total_seconds:>8.3f}")
    for entry in report.per_thread:
        print(f"  thread {entry['thread']}: {entry['queries']} queries, "
              f"mean {entry['mean_ms']:.3f} ms")
    if args.report:
        doc = {"format": "boxmon-bench-report", "schema_version": 1, **report.to_dict()}
        Path(args.report).write_text(
            json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"report written: {args.report}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    if args.features:
        features = read_features(args.features)
        labels = [int(x) for x in features.labels]
        print(f"valid feature dump: {args.features}")
        print(f"layer_tag={features.layer_tag} dimension={features.dimension} "
              f"records={len(features)}")
        print(f"classes: {', '.join(features.unique_class_keys()) or '(none)'}")
        print(f"labels: id={labels.count(0)} ood={labels.count(1)} "
              f"unlabeled={labels.count(2)}")
    if args.monitor:
        registry = load_registry(args.monitor)
        print(f"valid monitor file: {args.monitor}")
        print(f"layer_tag={registry.layer_tag} dimension={registry.dimension}")
        for key, monitor in registry.monitors.items():
            print(f"  class {key}: {monitor.box_count} boxes")
    if not args.features and not args.monitor:
        raise SchemaError("pass --features and/or --monitor")
    return EXIT_OK


def _add_build_flags(p):
    p.add_argument("--density", type=float, default=100.0,
                   help="targeted records per box (default 100)")
    p.add_argument("--cap", type=int, default=10000,
                   help="box budget per class (default 10000)")
    p.add_argument("--target-tpr", type=float, default=0.95, dest="target_tpr",
                   help="training coverage the boxes are enlarged to (default 0.95)")
    p.add_argument("--seed", type=int, default=0, help="clustering seed")
    p.add_argument("--max-iterations", type=int, default=100, dest="max_iterations")
    p.add_argument("--shift-tolerance", type=float, default=1e-6,
                   dest="shift_tolerance")


# flags that must end up set, via either the command line or the config
_REQUIRED = {
    "build": ("features", "out"),
    "eval": ("monitor", "id", "ood"),
    "check": ("monitor",),
    "synth": ("preset", "n"),
    "bench": ("boxes", "dim", "queries"),
    "inspect": (),
}


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="boxmon", description=__doc__)
    parser.add_argument("--version", action="version", version=f"boxmon {__version__}")
    parser.add_argument("--config", help="INI config file with [boxmon] and/or "
                        f"per-command sections (or set ${CONFIG_ENV_VAR})")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="build a monitor file from a feature dump")
    b.add_argument("--features", help="BAMF or CSV dump path")
    _add_build_flags(b)
    group = b.add_mutually_exclusive_group()
    group.add_argument("--score-threshold", type=float, default=0.0,
                       dest="score_threshold",
                       help="minimum prediction score for a record to participate")
    group.add_argument("--auto-threshold", action="store_true",
                       help="pick the score threshold maximizing micro F1 over "
                            "the dump's ID labels")
    b.add_argument("--total-ground-truth", type=int, default=None,
                   dest="total_ground_truth",
                   help="ground-truth object count for --auto-threshold "
                        "(default: the dump's ID-labeled record count)")
    b.add_argument("--include-unlabeled", action="store_true",
                   help="let UNLABELED records participate in the build")
    b.add_argument("--out", help="monitor file to write")
    b.set_defaults(func=cmd_build)

    e = sub.add_parser("eval", help="evaluate a monitor file against ID/OoD dumps")
    e.add_argument("--monitor")
    e.add_argument("--id", help="in-distribution dump")
    e.add_argument("--ood", help="out-of-distribution dump")
    e.add_argument("--target-tpr", type=float, default=0.95, dest="target_tpr")
    e.add_argument("--baseline", choices=["gaussian"], default=None,
                   help="also score a per-class Gaussian baseline")
    e.add_argument("--baseline-fit", default=None, dest="baseline_fit",
                   help="dump to fit the baseline on (default: the --id dump)")
    e.add_argument("--regularization", type=float, default=1e-6,
                   help="ridge added to baseline covariances")
    e.add_argument("--report", default=None, help="write a JSON report here")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("check", help="stream verdicts: JSON lines in, one verdict "
                                     "line out per input line")
    c.add_argument("--monitor")
    c.set_defaults(func=cmd_check, _stdin=None, _stdout=None)

    s = sub.add_parser("synth", help="generate a synthetic feature dump")
    s.add_argument("--preset", choices=[p.value for p in SynthPreset])
    s.add_argument("--n", type=int, help="number of records")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--components", type=int, default=3)
    s.add_argument("--separation", type=float, default=10.0)
    s.add_argument("--spread", type=float, default=1.0)
    s.add_argument("--class-keys", default=None, dest="class_keys",
                   help="comma-separated class keys (one per component, or one "
                        "shared key)")
    s.add_argument("--exclusion-radius", type=float, default=None,
                   dest="exclusion_radius")
    s.add_argument("--margin", type=float, default=0.0)
    s.add_argument("--ring-inner", type=float, default=None, dest="ring_inner")
    s.add_argument("--ring-outer", type=float, default=None, dest="ring_outer")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--layer-tag", default="synthetic", dest="layer_tag")
    s.add_argument("--out", default=None, help="BAMF output path")
    s.add_argument("--csv", default=None, help="CSV output path")
    s.set_defaults(func=cmd_synth)

    n = sub.add_parser("bench", help="time nearest-box queries on a random monitor")
    n.add_argument("--boxes", type=int)
    n.add_argument("--dim", type=int)
    n.add_argument("--queries", type=int)
    n.add_argument("--inside-fraction", type=float, default=0.0,
                   dest="inside_fraction")
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--threads", type=int, default=1)
    n.add_argument("--report", default=None)
    n.set_defaults(func=cmd_bench)

    i = sub.add_parser("inspect", help="validate a dump or monitor file and "
                                       "print a summary")
    i.add_argument("--features", default=None)
    i.add_argument("--monitor", default=None)
    i.set_defaults(func=cmd_inspect)

    parser._command_schemas = {
        name: _flag_schema(p)
        for name, p in (("build", b), ("eval", e), ("check", c),
                        ("synth", s), ("bench", n), ("inspect", i))
    }
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        _apply_config(parser, args, argv)
    except SchemaError as exc:
        print(f"boxmon: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    _require(parser, args, *_REQUIRED[args.command])
    try:
        return args.func(args)
    except InvariantViolationError as exc:
        print(f"boxmon: invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (BoxmonError, OSError, ValueError) as exc:
        print(f"boxmon: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
