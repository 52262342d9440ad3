"""Command-line entry point.

Exit codes: 0 success, 1 runtime error (any ``DetectorError``), 2 usage error.
Every subcommand accepts ``--config FILE``; keys of its ``[detector]`` section
become flag defaults, so explicit flags still win.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from pathlib import Path
from typing import Any, Callable

from detector import __version__
from detector._shared.config import load_config_file, log_level
from detector._shared.errors import DetectorError, InvalidConfig

logger = logging.getLogger("detector.cli")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off", ""}


def _int_list(text: str) -> list[int]:
    try:
        return [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _str_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


# --- argument groups -----------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="key-value file with a [detector] section")
    parent.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (env DETECTOR_LOG_LEVEL)")
    return parent


def _add_source_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("sample source")
    group.add_argument("--source", choices=("live", "replay", "synthetic"), default="live")
    group.add_argument("--replay", help="trace file for --source replay")
    group.add_argument("--loop", action="store_true", help="restart the replay file when it runs out")
    group.add_argument("--generator", default="benign-noise", help="generator for --source synthetic")
    group.add_argument("--source-seed", type=int, default=0)
    group.add_argument("--domain", choices=("package", "pp0", "pp1", "dram"), default="pp0")
    group.add_argument("--package", type=int, default=0)
    group.add_argument("--powercap-root", help="override the powercap root (env RAPL_POWERCAP_ROOT)")
    group.add_argument("--interval-us", type=int, default=500)


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("training")
    group.add_argument("--data", help="dataset root (benign/<class>/, attack/<attack>/)")
    group.add_argument("--samples", type=int, default=3000, help="input length in samples")
    group.add_argument("--seed", type=int, default=0)
    group.add_argument("--epochs", type=int, default=200)
    group.add_argument("--batch-size", type=int, default=32)
    group.add_argument("--patience", type=int, default=10)
    group.add_argument("--lr", type=float, default=1e-3)
    group.add_argument("--train-per-class", type=int, default=40)
    group.add_argument("--val-per-class", type=int, default=10)
    group.add_argument("--filters", type=_int_list, help="conv filter counts, e.g. 64,64,128")
    group.add_argument("--dense", type=_int_list, help="hidden dense widths, e.g. 128,64")
    group.add_argument("--pool-size", type=int, default=10)
    group.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    group.add_argument("--k", type=int, help="KNN neighbours (default 3 for ad, 2 for ar)")
    group.add_argument("--trees", type=int, default=100)
    group.add_argument("--max-depth", type=int, default=14)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    common = _common()
    parser = argparse.ArgumentParser(
        prog="detector",
        description="Record RAPL energy traces, train attack detectors and monitor a host.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    parsers: dict[str, argparse.ArgumentParser] = {}

    def add(name: str, handler: Callable[[argparse.Namespace], int], help_text: str, sub=commands) -> argparse.ArgumentParser:
        child = sub.add_parser(name, help=help_text, description=help_text, parents=[common])
        child.set_defaults(handler=handler, parser=child)
        parsers[name] = child
        return child

    collect = add("collect", _cmd_collect, "record a labeled measurement campaign")
    _add_source_args(collect)
    collect.add_argument("--label", help="class name; attack names map to the attack family")
    collect.add_argument("--out", help="dataset root to write traces into")
    collect.add_argument("--samples", type=int, default=3000)
    collect.add_argument("--measurements", type=int, default=50)
    collect.add_argument("--sleep", type=float, default=1.0, help="seconds between measurements")
    collect.add_argument("--start-hook", default="")
    collect.add_argument("--stop-hook", default="")
    collect.add_argument("--workload", help="command started before and stopped after every trace")

    train = add("train", _cmd_train, "train an AD or AR model")
    train.add_argument("--task", choices=("ad", "ar"))
    train.add_argument("--algorithm", choices=("cnn", "knn", "rf"), default="cnn")
    train.add_argument("--out", help="model file to write")
    _add_train_args(train)

    evaluate = add("evaluate", _cmd_evaluate, "evaluate saved models on a validation split or a test set")
    evaluate.add_argument("--model", action="append", help="model file; repeat to compare models")
    evaluate.add_argument("--data", help="dataset root; evaluates its validation split")
    evaluate.add_argument("--test-data", help="separate test dataset root; evaluated whole")
    evaluate.add_argument("--task", choices=("ad", "ar"), help="defaults to the task stored in the model")
    evaluate.add_argument("--threshold", type=float, default=0.5)
    evaluate.add_argument("--train-per-class", type=int, default=40)
    evaluate.add_argument("--val-per-class", type=int, default=10)
    evaluate.add_argument("--seed", type=int, default=0)
    evaluate.add_argument("--json", help="write the reports as JSON")
    evaluate.add_argument("--confusion-csv", help="write the confusion matrix of the first model")

    monitor = add("monitor", _cmd_monitor, "score consecutive windows and emit alerts")
    monitor.add_argument("--ad-model")
    monitor.add_argument("--ar-model")
    monitor.add_argument("--threshold", type=float, default=0.5)
    monitor.add_argument("--alerts", default="-", help="alert file, '-' for stdout")
    monitor.add_argument("--windows", type=int, help="stop after this many windows")
    monitor.add_argument("--queue-size", type=int, default=4)
    _add_source_args(monitor)

    bench = add("bench-overhead", _cmd_bench, "measure the sampler's slowdown of a command")
    bench.add_argument("--command", dest="bench_command", help="command to time")
    bench.add_argument("--repetitions", type=int, default=5)
    bench.add_argument("--pin-cpu", type=int, help="pin sampler and command to this CPU")
    bench.add_argument("--json", help="write the report as JSON")
    _add_source_args(bench)

    dataset = add("dataset", _cmd_dataset_usage, "inspect, convert or synthesize datasets")
    dataset_commands = dataset.add_subparsers(dest="dataset_command", metavar="ACTION")
    inspect = add("inspect", _cmd_dataset_inspect, "per-class trace counts and lengths", dataset_commands)
    inspect.add_argument("--data")
    convert = add("convert", _cmd_dataset_convert, "import per-class CSV matrices", dataset_commands)
    convert.add_argument("--matrix-dir")
    convert.add_argument("--out")
    convert.add_argument("--transpose", action="store_true", help="traces are columns, not rows")
    convert.add_argument("--delimiter", default=",")
    synth = add("synth", _cmd_dataset_synth, "write a synthetic dataset", dataset_commands)
    synth.add_argument("--out")
    synth.add_argument("--benign", type=int, default=35)
    synth.add_argument("--attack", type=int, default=15)
    synth.add_argument("--traces", type=int, default=50)
    synth.add_argument("--samples", type=int, default=3000)
    synth.add_argument("--seed", type=int, default=0)

    sweep = add("sweep", _cmd_sweep, "score CNN, KNN and RF over several input lengths")
    _add_train_args(sweep)
    sweep.add_argument("--samples-list", type=_int_list, default=[500, 1000, 1500, 2000, 2500, 3000])
    sweep.add_argument("--tasks", type=_str_list, default=["ad", "ar"])
    sweep.add_argument("--algorithms", type=_str_list, default=["cnn", "knn", "rf"])
    sweep.add_argument("--out", help="CSV file for the results")

    serve = add("serve", _cmd_serve, "serve the HTTP inspection and inference API")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)

    zones = add("zones", _cmd_zones, "list RAPL zones")
    zones.add_argument("--powercap-root")

    return parser, parsers


def _need(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{name.replace('_', '-')}" for name in names if getattr(args, name, None) in (None, [])]
    if missing:
        args.parser.error(f"the following arguments are required: {', '.join(missing)}")


def apply_config_file(parsers: dict[str, argparse.ArgumentParser], values: dict[str, str]) -> None:
    """Install file values as flag defaults on every subcommand that knows the key."""
    unknown = set(values)
    for parser in parsers.values():
        actions = {action.dest: action for action in parser._actions}
        defaults: dict[str, Any] = {}
        for key, raw in values.items():
            action = actions.get(key)
            if action is None or key in ("help", "config"):
                continue
            unknown.discard(key)
            if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
                lowered = raw.strip().lower()
                if lowered not in _TRUE | _FALSE:
                    raise InvalidConfig(f"Config key {key} expects a boolean, got {raw!r}.", key=key)
                defaults[key] = lowered in _TRUE
            else:
                defaults[key] = raw
        parser.set_defaults(**defaults)
    if unknown:
        raise InvalidConfig(f"Unknown config keys: {', '.join(sorted(unknown))}.", keys=sorted(unknown))


# --- shared builders ---------------------------------------------------------------


def _source(args: argparse.Namespace):
    from detector.sensor import LiveSource, PowerDomain, ReplaySource, SyntheticSource, discover_zones, select_zone

    if args.source == "replay":
        _need(args, "replay")
        return ReplaySource(path=args.replay, loop=args.loop)
    if args.source == "synthetic":
        return SyntheticSource(generator=args.generator, seed=args.source_seed)
    zone = select_zone(discover_zones(args.powercap_root), PowerDomain(args.domain), args.package)
    return LiveSource(zone=zone)


def _train_config(args: argparse.Namespace):
    from detector.models import TrainConfig

    return TrainConfig(
        epochs_max=args.epochs,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=args.seed,
        learning_rate=args.lr,
        n_samples=args.samples,
    )


def _net_config(args: argparse.Namespace):
    from detector.models import ConvNetConfig

    return ConvNetConfig(filters=args.filters, dense_units=args.dense, pool_size=args.pool_size, dtype=args.dtype)


def _split_spec(args: argparse.Namespace):
    from detector.traceio import SplitSpec

    return SplitSpec(train_per_class=args.train_per_class, val_per_class=args.val_per_class, seed=args.seed)


# --- handlers ------------------------------------------------------------------------


def _cmd_collect(args: argparse.Namespace) -> int:
    from detector.sensor import CollectorConfig, PowerDomain, collect_campaign

    _need(args, "label", "out")
    config = CollectorConfig(
        interval_us=args.interval_us,
        samples_per_trace=args.samples,
        measurements=args.measurements,
        domain=PowerDomain(args.domain),
        package=args.package,
        inter_measurement_sleep_s=args.sleep,
    )
    traces = collect_campaign(
        _source(args),
        config,
        args.label,
        start_hook=args.start_hook,
        stop_hook=args.stop_hook,
        workload=args.workload,
        output_dir=args.out,
    )
    print(f"collected={len(traces)} label={traces[0].label.name} out={args.out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    from detector.baselines import ForestConfig, KnnConfig
    from detector.metrics import format_report, report
    from detector.models import train_ad, train_ar, train_baseline
    from detector.traceio import load_dataset, split

    _need(args, "task", "data", "out")
    train, val = split(load_dataset(args.data), _split_spec(args))
    if args.algorithm == "cnn":
        trainer = train_ad if args.task == "ad" else train_ar
        trained = trainer(train, val, _train_config(args), out_path=args.out, net=_net_config(args))
    else:
        knn = KnnConfig(k=args.k) if args.k else None
        forest = ForestConfig(n_trees=args.trees, max_depth=args.max_depth, seed=args.seed)
        trained = train_baseline(args.algorithm, args.task, train, args.samples, knn=knn, forest=forest, out_path=args.out)
    sys.stdout.write(format_report(report(trained.model, val, args.task, model_id=Path(args.out).name)))
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    from detector.metrics import format_report, report, write_confusion_csv, write_report
    from detector.models import load_classifier, model_task
    from detector.traceio import KNOWN_BENIGN_APPS, load_dataset, split

    _need(args, "model")
    if isinstance(args.model, str):
        args.model = [args.model]
    if bool(args.data) == bool(args.test_data):
        args.parser.error("give exactly one of --data or --test-data")
    if args.data:
        _, dataset = split(load_dataset(args.data), _split_spec(args))
    else:
        dataset = load_dataset(args.test_data)
        unseen = [name for name, label in dataset.labels.items() if not label.is_attack and name not in KNOWN_BENIGN_APPS]
        if unseen:
            logger.info("cli unseen_benign_classes count=%s names=%s", len(unseen), ",".join(unseen))
    reports = []
    for path in args.model:
        model = load_classifier(path)
        task = args.task or model_task(model)
        if task not in ("ad", "ar"):
            args.parser.error(f"cannot tell the task of {path}; pass --task")
        result = report(model, dataset, task, threshold=args.threshold, model_id=Path(path).name)
        reports.append(result)
        sys.stdout.write(format_report(result))
    if args.json and len(reports) == 1:
        write_report(reports[0], args.json)
    elif args.json:
        Path(args.json).write_text(json.dumps([r.model_dump(mode="json") for r in reports], indent=2) + "\n", encoding="utf-8")
    if args.confusion_csv:
        write_confusion_csv(reports[0], args.confusion_csv)
    return 0


def _cmd_monitor(args: argparse.Namespace) -> int:
    from detector.engine.monitor import Monitor, MonitorConfig

    _need(args, "ad_model")
    config = MonitorConfig(
        ad_model=args.ad_model,
        ar_model=args.ar_model,
        interval_us=args.interval_us,
        threshold=args.threshold,
        alert_sink=args.alerts,
        queue_size=args.queue_size,
    )
    monitor = Monitor(config, _source(args))
    stop = threading.Event()
    try:
        for _ in monitor.run(stop, args.windows):
            pass
    except KeyboardInterrupt:
        stop.set()
    finally:
        monitor.sink.close()
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    from detector.engine.overhead import BenchConfig, bench_overhead

    _need(args, "bench_command")
    config = BenchConfig(
        command=args.bench_command, repetitions=args.repetitions, interval_us=args.interval_us, pin_cpu=args.pin_cpu
    )
    result = bench_overhead(config, _source(args))
    print(
        f"command={result.command} alone_s={result.runtime_alone_s:.4f} "
        f"with_sampling_s={result.runtime_with_sampling_s:.4f} overhead_pct={result.overhead_pct:.2f}"
    )
    if args.json:
        Path(args.json).write_text(result.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return 0


def _cmd_dataset_usage(args: argparse.Namespace) -> int:
    args.parser.print_usage(sys.stderr)
    return 2


def _cmd_dataset_inspect(args: argparse.Namespace) -> int:
    from detector.traceio import KNOWN_BENIGN_APPS, load_dataset

    _need(args, "data")
    dataset = load_dataset(args.data)
    for name, positions in dataset.class_index.items():
        label = dataset.labels[name]
        lengths = [len(dataset.traces[p]) for p in positions]
        note = ""
        if not label.is_attack and name not in KNOWN_BENIGN_APPS:
            note = " unseen=true"
        print(f"{label.family.value} {name} traces={len(positions)} min_length={min(lengths)} max_length={max(lengths)}{note}")
    print(f"total traces={len(dataset)} classes={len(dataset.class_index)}")
    return 0


def _cmd_dataset_convert(args: argparse.Namespace) -> int:
    from detector.traceio import import_matrix_dir, write_dataset

    _need(args, "matrix_dir", "out")
    dataset = import_matrix_dir(args.matrix_dir, transpose=args.transpose, delimiter=args.delimiter)
    write_dataset(dataset, args.out)
    print(f"converted traces={len(dataset)} classes={len(dataset.class_index)} out={args.out}")
    return 0


def _cmd_dataset_synth(args: argparse.Namespace) -> int:
    from detector.sensor import synth_dataset
    from detector.traceio import write_dataset

    _need(args, "out")
    dataset = synth_dataset(args.benign, args.attack, args.traces, args.samples, args.seed)
    write_dataset(dataset, args.out)
    print(f"synthesized traces={len(dataset)} classes={len(dataset.class_index)} out={args.out}")
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    from detector.baselines import ForestConfig
    from detector.engine.experiments import sweep, write_sweep_csv
    from detector.traceio import load_dataset

    _need(args, "data", "out")
    bad = sorted(set(args.tasks) - {"ad", "ar"}) + sorted(set(args.algorithms) - {"cnn", "knn", "rf"})
    if bad:
        args.parser.error(f"unknown task or algorithm: {', '.join(bad)}")
    rows = sweep(
        load_dataset(args.data),
        _split_spec(args),
        _train_config(args),
        sample_counts=tuple(args.samples_list),
        tasks=tuple(args.tasks),
        algorithms=tuple(args.algorithms),
        net=_net_config(args),
        forest=ForestConfig(n_trees=args.trees, max_depth=args.max_depth, seed=args.seed),
    )
    write_sweep_csv(rows, args.out)
    print(f"sweep rows={len(rows)} out={args.out}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    uvicorn.run("main:app", host=args.host, port=args.port)
    return 0


def _cmd_zones(args: argparse.Namespace) -> int:
    from detector.sensor import discover_zones

    zones = discover_zones(args.powercap_root)
    for zone in zones:
        print(zone.model_dump_json())
    if not zones:
        print("no RAPL zones found", file=sys.stderr)
    return 0


# --- dispatch ------------------------------------------------------------------------


def _configure_logging(level: str | None) -> None:
    logging.basicConfig(
        level=(level or log_level()).upper(),
        format="%(asctime)s %(levelname)s %(name)s %(message)s",
        stream=sys.stderr,
        force=True,
    )


def _print_error(error: DetectorError) -> None:
    print(f"error code={error.code} message={error.message}", file=sys.stderr)


def cli_dispatch(argv: list[str] | None = None) -> int:
    parser, parsers = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    try:
        apply_config_file(parsers, load_config_file(known.config))
    except InvalidConfig as error:
        _print_error(error)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if getattr(args, "handler", None) is None:
        parser.print_usage(sys.stderr)
        return 2
    _configure_logging(args.log_level)
    try:
        return args.handler(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    except DetectorError as error:
        logger.debug("cli failed command=%s code=%s details=%s", args.command, error.code, error.details)
        _print_error(error)
        return 1
    except KeyboardInterrupt:
        return 130


def main() -> None:
    sys.exit(cli_dispatch())
