"""Command-line entry point: ``xrtraffic {train,classify,evaluate,fia-report,synth}``.

Settings resolve as flags > config file > built-in defaults.  The config
file is JSON; ``--config`` names it, otherwise ``$XRTRAFFIC_CONFIG`` is
used when set.  Relative trace paths inside a config are resolved against
the config file's directory.

Exit codes: 0 success, 2 usage, 3 data error, 4 training stopped on budget.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import fia, persistence, synth
from .a2rot import A2RConfig, classify, evaluate, run_experiment
from .errors import DataError, XRTrafficError
from .fia import FiaConfig
from .forest import ForestParams
from .ingest import ColumnMapping, LabeledTrace, load_trace
from .metrics import metrics_table
from .segmenter import Segment, segment

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_BUDGET = 4

CONFIG_ENV = "XRTRAFFIC_CONFIG"

log = logging.getLogger("xrtraffic")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class TraceSpec:
    path: Path
    label: int
    name: str


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    schema: Optional[ColumnMapping] = None
    a2r: dict = field(default_factory=dict)
    fia: dict = field(default_factory=dict)
    output_dir: Optional[Path] = None


def parse_trace_arg(text: str) -> TraceSpec:
    """``LABEL[:NAME]=PATH`` as given on the command line."""
    m = re.fullmatch(r"(\d+)(?::([^=]*))?=(.+)", text)
    if not m:
        raise argparse.ArgumentTypeError(f"expected LABEL[:NAME]=PATH, got {text!r}")
    path = Path(m.group(3))
    name = m.group(2) or path.name.split(".")[0]
    return TraceSpec(path, int(m.group(1)), name)


def _trace_entry(d: dict, base: Path) -> TraceSpec:
    try:
        path = Path(d["path"])
        label = int(d["label"])
    except (KeyError, TypeError, ValueError):
        raise UsageError(f"trace entries need 'path' and integer 'label': {d!r}") from None
    if not path.is_absolute():
        path = base / path
    return TraceSpec(path, label, d.get("name") or path.name.split(".")[0])


def load_spec(path: Optional[Path]) -> ExperimentSpec:
    if path is None:
        return ExperimentSpec()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    base = Path(path).parent
    unknown = set(doc) - {"name", "train", "test", "schema", "a2r", "fia", "output_dir"}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    return ExperimentSpec(
        name=doc.get("name", Path(path).stem),
        train=[_trace_entry(d, base) for d in doc.get("train", [])],
        test=[_trace_entry(d, base) for d in doc.get("test", [])],
        schema=ColumnMapping.from_dict(doc["schema"]) if doc.get("schema") else None,
        a2r=dict(doc.get("a2r", {})),
        fia=dict(doc.get("fia", {})),
        output_dir=(base / doc["output_dir"]) if doc.get("output_dir") else None,
    )


def _config_path(args) -> Optional[Path]:
    if getattr(args, "config", None):
        return Path(args.config)
    env = os.environ.get(CONFIG_ENV)
    return Path(env) if env else None


def resolve_fia(args, spec: ExperimentSpec) -> FiaConfig:
    d = dict(spec.fia)
    if getattr(args, "len_th_abs", None) is not None:
        d["len_th_abs"] = args.len_th_abs
    if getattr(args, "bin_width", None) is not None:
        d["bin_width"] = args.bin_width
    try:
        return FiaConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad FIA settings: {exc}") from None


def resolve_a2r(args, spec: ExperimentSpec) -> A2RConfig:
    d = dict(spec.a2r)
    flag_map = {
        "segment_size": "initial_segment_size", "seed": "seed", "vr": "v_r",
        "e_th": "e_th", "es_th": "es_th", "ze_th": "ze_th", "s_max": "s_max",
        "trees": "n_trees", "test_fraction": "test_fraction", "jobs": "n_jobs",
    }
    for flag, key in flag_map.items():
        value = getattr(args, flag, None)
        if value is not None:
            d[key] = value
    if getattr(args, "fast", False) and getattr(args, "trees", None) is None:
        d["n_trees"] = 200
    d["fia"] = resolve_fia(args, spec).to_dict()
    d.setdefault("forest_params", ForestParams().to_dict())
    try:
        return A2RConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad training settings: {exc}") from None


def _schema(args, spec: ExperimentSpec) -> Optional[ColumnMapping]:
    if getattr(args, "wireshark", None):
        return ColumnMapping.wireshark(args.wireshark)
    if getattr(args, "schema", None):
        try:
            return ColumnMapping.from_dict(json.loads(Path(args.schema).read_text()))
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise UsageError(f"bad schema file {args.schema}: {exc}") from None
    return spec.schema


def _load(specs, schema) -> list[LabeledTrace]:
    out = []
    for s in specs:
        if not s.path.exists():
            raise DataError(f"trace file not found: {s.path}")
        out.append(load_trace(s.path, s.label, schema, s.name))
    return out


# -- commands -----------------------------------------------------------------

def cmd_train(args) -> int:
    spec = load_spec(_config_path(args))
    train_specs = list(args.trace or []) or spec.train
    test_specs = list(args.test or []) or spec.test
    if not train_specs:
        raise UsageError("no training traces (use --trace or a config file)")
    config = resolve_a2r(args, spec)
    schema = _schema(args, spec)
    train = _load(train_specs, schema)
    test = _load(test_specs, schema) if test_specs else None

    out = Path(args.output) if args.output else (
        (spec.output_dir or Path(".")) / (spec.name + persistence.MODEL_SUFFIX))
    out.parent.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    result = run_experiment(train, config, test)
    total = time.perf_counter() - t0
    datasets = persistence.dataset_fingerprints(
        [(s.path, s.label, s.name) for s in train_specs]
        + [(s.path, s.label, s.name) for s in test_specs])
    model_path, manifest_path = persistence.save_training_run(
        result.outcome, out, datasets, result.evaluation, total)

    o = result.outcome
    print(f"model: {model_path}")
    print(f"manifest: {manifest_path}")
    print(f"stop: {o.stop_reason.value}  segment size: {o.s}  segments/class: {o.s_t}  "
          f"iterations: {len(o.history)}  trees: {len(o.final_model)}  time: {total:.1f}s")
    if result.evaluation is not None:
        _print_table(metrics_table(result.evaluation.matrix, sorted(result.evaluation.segments)),
                     "text", sys.stdout)
    if o.no_convergence:
        print("warning: segment budget exhausted before a stopping criterion fired", file=sys.stderr)
        return EXIT_BUDGET
    return EXIT_OK


def cmd_classify(args) -> int:
    model = persistence.load_model(args.model)
    spec = load_spec(_config_path(args))
    trace = _load([TraceSpec(Path(args.trace), 0, Path(args.trace).name.split(".")[0])],
                  _schema(args, spec))[0]
    res = classify(model, trace, args.segment_size)
    w = csv.writer(sys.stdout, lineterminator="\n")
    cls = list(res.classes)
    w.writerow(["segment_index", "label", "class", *[f"votes_{c}" for c in cls]])
    for idx, lab, votes in zip(res.segment_index, res.labels, res.votes):
        w.writerow([idx, lab, model.class_names.get(lab, str(lab)), *votes.tolist()])
    plural = res.plurality
    print(f"plurality: {plural} ({model.class_names.get(plural, plural)}); "
          + ", ".join(f"{c}={n}" for c, n in res.counts.items()), file=sys.stderr)
    return EXIT_OK


def _print_table(rows: list[dict], fmt: str, stream) -> None:
    if fmt == "json":
        json.dump(rows, stream, indent=1)
        stream.write("\n")
        return
    if fmt == "csv":
        w = csv.DictWriter(stream, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return
    stream.write(f"{'Class':<16}{'Test Segments':>14}{'Accuracy (%)':>14}{'FNR':>8}"
                 f"{'Recall':>8}{'Precision':>11}{'F1':>8}\n")
    for r in rows:
        stream.write(f"{r['class']:<16}{r['test_segments']:>14}{r['accuracy_pct']:>14.2f}"
                     f"{r['fnr']:>8.3f}{r['recall']:>8.3f}{r['precision']:>11.3f}{r['f1']:>8.3f}\n")


def cmd_evaluate(args) -> int:
    model = persistence.load_model(args.model)
    spec = load_spec(_config_path(args))
    specs = list(args.trace or []) or spec.test
    if not specs:
        raise UsageError("no labeled traces to evaluate (use --trace or a config file)")
    traces = _load(specs, _schema(args, spec))
    ev = evaluate(model, traces)
    if ev.matrix.total == 0:
        raise DataError("no trace yields a full segment at the model's segment size")
    _print_table(metrics_table(ev.matrix, sorted(ev.segments)), args.format, sys.stdout)
    print(f"overall accuracy: {100 * ev.overall_accuracy:.2f}%", file=sys.stderr)
    return EXIT_OK


def cmd_fia_report(args) -> int:
    spec = load_spec(_config_path(args))
    config = resolve_fia(args, spec)
    trace = _load([TraceSpec(Path(args.trace), 0, Path(args.trace).name.split(".")[0])],
                  _schema(args, spec))[0]
    windows = segment(trace, args.segment_size) if args.segment_size else [Segment.whole(trace)]
    if not windows:
        raise DataError(f"trace has {len(trace)} packets, fewer than one segment")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["segment_index", "packets", "duration", "len_th", "dur_th", "t1", "t2",
                "frames", "frame_rate", "avg_frame_iat", "total_frame_duration"])
    for win in windows:
        frames = fia.detect(win, config)
        th = frames.thresholds
        dur = frames.segment_duration
        rate = frames.count / dur if dur > 0 else ""
        w.writerow([win.index, len(win), repr(dur), th.len_th, repr(th.dur_th),
                    "" if th.t1 is None else repr(th.t1), "" if th.t2 is None else repr(th.t2),
                    frames.count, rate if rate == "" else repr(rate),
                    repr(frames.avg_frame_iat), repr(frames.total_duration)])
    overall = fia.detect(trace, config)
    rate = fia.frame_rate(overall)
    print(f"frame rate: {rate:.3f} frames/s ({overall.count} frames)", file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.suite:
        return _synth_suite(args)
    if not args.profile or not args.output:
        raise UsageError("synth needs PROFILE and -o/--output (or --suite DIR)")
    overrides = {}
    if args.duration is not None:
        overrides["duration"] = args.duration
    if args.seed is not None:
        overrides["seed"] = args.seed
    if Path(args.profile).is_file():
        profile = replace(synth.load_profile(args.profile), **overrides)
    else:
        profile = synth.preset(args.profile, **overrides)
    if args.noise_free:
        profile = synth.noise_free(profile, args.frame_rate)
    elif args.frame_rate is not None:
        profile = replace(profile, frame_rate=args.frame_rate)
    gen = synth.generate(profile, args.label)
    out = Path(args.output)
    truth = Path(args.truth) if args.truth else out.with_name(out.name.split(".")[0] + ".truth.json")
    synth.write_generated(gen, out, truth)
    print(f"{out}: {len(gen.trace)} packets, {gen.n_frames} frames; truth in {truth}", file=sys.stderr)
    return EXIT_OK


def _synth_suite(args) -> int:
    out = Path(args.suite)
    out.mkdir(parents=True, exist_ok=True)
    duration = args.duration if args.duration is not None else 60.0
    seed = args.seed if args.seed is not None else 0
    entries = []
    for label, profile in enumerate(synth.preset_suite(duration, seed), start=1):
        stem = profile.name.lower().replace(" ", "_")
        gen = synth.generate(profile, label)
        synth.write_generated(gen, out / f"{stem}.csv", out / f"{stem}.truth.json")
        entries.append({"path": f"{stem}.csv", "label": label, "name": profile.name})
    config = {"name": "synthetic_suite", "train": entries, "a2r": {"n_trees": 200}}
    (out / "suite.json").write_text(json.dumps(config, indent=1) + "\n")
    print(f"wrote {len(entries)} traces and {out / 'suite.json'}", file=sys.stderr)
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def _common(p: argparse.ArgumentParser, fia_flags=True, schema_flags=True):
    p.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV})")
    if schema_flags:
        p.add_argument("--schema", help="JSON column mapping for the trace CSVs")
        p.add_argument("--wireshark", metavar="CLIENT_IP",
                       help="read Wireshark CSV exports; packets to CLIENT_IP are downlink")
    if fia_flags:
        p.add_argument("--len-th-abs", type=int, help="absolute frame-packet length threshold (bytes)")
        p.add_argument("--bin-width", type=float, help="inter-arrival histogram bin width (s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xrtraffic", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model with the online segment-size search")
    _common(p)
    p.add_argument("--trace", action="append", type=parse_trace_arg, metavar="LABEL[:NAME]=PATH")
    p.add_argument("--test", action="append", type=parse_trace_arg, metavar="LABEL[:NAME]=PATH",
                   help="held-out traces; default is the tail of each training trace")
    p.add_argument("-o", "--output", help="model file (*.dxr.json)")
    p.add_argument("--segment-size", type=int, help="initial segment size (packets)")
    p.add_argument("--seed", type=int)
    p.add_argument("--vr", type=float, help="validation ratio")
    p.add_argument("--e-th", type=float, help="error-plateau threshold")
    p.add_argument("--es-th", type=int, help="plateau count that stops training")
    p.add_argument("--ze-th", type=int, help="zero-error count that stops training")
    p.add_argument("--s-max", type=int, help="segment budget per class")
    p.add_argument("--trees", type=int, help="trees per iteration")
    p.add_argument("--fast", action="store_true", help="200 trees per iteration")
    p.add_argument("--test-fraction", type=float, help="trailing share of each trace held out")
    p.add_argument("--jobs", type=int, help="threads for tree growth")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label every segment of a trace")
    _common(p, fia_flags=False)
    p.add_argument("model")
    p.add_argument("trace")
    p.add_argument("--segment-size", type=int, help="must match the model's segment size")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("evaluate", help="per-class accuracy and FNR on labeled traces")
    _common(p, fia_flags=False)
    p.add_argument("model")
    p.add_argument("--trace", action="append", type=parse_trace_arg, metavar="LABEL[:NAME]=PATH")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("fia-report", help="per-segment frame statistics and overall frame rate")
    _common(p)
    p.add_argument("trace")
    p.add_argument("--segment-size", type=int, help="packets per segment (default: whole trace)")
    p.set_defaults(func=cmd_fia_report)

    p = sub.add_parser("synth", help="generate a synthetic trace with frame ground truth")
    p.add_argument("profile", nargs="?", help="preset name or profile JSON file")
    p.add_argument("-o", "--output", help="trace CSV")
    p.add_argument("--truth", help="ground-truth JSON (default: next to the CSV)")
    p.add_argument("--label", type=int, default=1)
    p.add_argument("--duration", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--frame-rate", type=float)
    p.add_argument("--noise-free", action="store_true", help="drop jitter and collisions")
    p.add_argument("--suite", metavar="DIR", help="write all presets and a training config to DIR")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (XRTrafficError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
