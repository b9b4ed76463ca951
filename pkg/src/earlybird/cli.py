"""Command-line front end.

    earlybird synth    --profile minife-like --out-dir out/
    earlybird validate --input out/trace.csv
    earlybird analyze  --input out/trace.csv --svg
    earlybird metrics  --input out/trace.csv --sections 0..19,19..200
    earlybird simulate --input out/trace.csv --bandwidth 12.5GB/s --timeout 1ms
    earlybird report   --input out/trace.csv

Every subcommand also accepts ``--config FILE`` with flat ``key=value``
lines named like the long flags; flags given on the command line win.

Exit codes: 0 success, 1 validation failure, 2 usage error, 3 internal error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from . import sim, stats, traceio
from .trace import NS_PER_MS, AggregationLevel, DatasetShape, GroupKey, ValidationError, group
from .units import parse_duration, parse_rate, parse_size

log = logging.getLogger("earlybird")

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_INTERNAL = 0, 1, 2, 3

DEFAULT_PERCENTILES = (5, 25, 50, 75, 95)
DEFAULT_BIN_WIDTHS = {"app": 10_000, "proc": 50_000}  # ns


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    subcommand: str
    input: Path | None = None
    shape: DatasetShape | None = None
    allow_partial: bool = False
    alpha: float = 0.05
    threshold: metrics_mod.LaggardThreshold = field(default_factory=metrics_mod.LaggardThreshold)
    bin_widths: dict[str, int] = field(default_factory=lambda: dict(DEFAULT_BIN_WIDTHS))
    percentiles: tuple[float, ...] = DEFAULT_PERCENTILES
    hist_groups: list[GroupKey] = field(default_factory=list)
    sections: list[tuple[int, int]] = field(default_factory=list)
    bandwidth: float = 12.5e9
    overhead: float = 1_000.0
    partition_bytes: int = 65_536
    timeout: float = 1e6
    strategies: tuple[sim.Strategy, ...] = tuple(sim.Strategy)
    detail_groups: list[GroupKey] = field(default_factory=list)
    profile: str | None = None
    phases: list[str] = field(default_factory=list)
    output: Path | None = None
    out_dir: Path = Path(".")
    seed: int = 0
    jobs: int = 1
    svg: bool = False


# ---------------------------------------------------------------------------
# argument parsing


def _common(p: argparse.ArgumentParser, needs_input: bool = True):
    p.add_argument("--config", type=Path, help="flat key=value file; flags win")
    if needs_input:
        p.add_argument("--input", type=Path, help="trace file")
        p.add_argument("--shape", help="T,P,I,N; required for headerless CSV")
        p.add_argument("--allow-partial", action="store_true",
                       help="analyze only complete process iterations")
    p.add_argument("--out-dir", type=Path, default=Path("."))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def _analysis_flags(p):
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--bin-width", default="app=10us,proc=50us",
                   help="one duration for every level, or app=DUR,proc=DUR")
    p.add_argument("--percentiles", default="5,25,50,75,95")
    p.add_argument("--hist-group", action="append", default=[],
                   help="extra group to histogram, e.g. proc.0.3.17 or iter.5")
    p.add_argument("--svg", action="store_true", help="also render SVG plots")


def _metrics_flags(p):
    p.add_argument("--laggard-threshold", default="1ms", help="duration (1ms) or percent of median (5%%)")
    p.add_argument("--sections", default="", help="half-open iteration ranges, e.g. 0..19,19..200")


def _sim_flags(p):
    p.add_argument("--bandwidth", default="12.5GB/s")
    p.add_argument("--overhead", default="1us", help="per-transfer setup cost")
    p.add_argument("--partition-bytes", default="65536")
    p.add_argument("--timeout", default="1ms", help="flush period for timeout_binned")
    p.add_argument("--strategies", default="bulk,earlybird,timeout_binned")
    p.add_argument("--detail-group", action="append", default=[],
                   help="write per-partition timelines for this proc.T.P.I group")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="earlybird", description="Thread arrival analysis and "
                                     "early-bird transmission simulation.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="check a trace for completeness and consistency")
    _common(p)

    p = sub.add_parser("analyze", help="normality tables, histograms, percentile series")
    _common(p)
    _analysis_flags(p)

    p = sub.add_parser("metrics", help="laggards, reclaimable time, idle ratio")
    _common(p)
    _metrics_flags(p)

    p = sub.add_parser("simulate", help="bulk vs early-bird vs timeout-binned transmission")
    _common(p)
    _sim_flags(p)

    p = sub.add_parser("report", help="analyze + metrics + simulate")
    _common(p)
    _analysis_flags(p)
    _metrics_flags(p)
    _sim_flags(p)

    p = sub.add_parser("synth", help="write a synthetic trace")
    _common(p, needs_input=False)
    p.add_argument("--shape", default="10,8,200,48")
    p.add_argument("--profile", choices=traceio.NAMED_PROFILES)
    p.add_argument("--phase", action="append", default=[],
                   help="COUNT:CLASS:MEDIAN_MS:IQR_MS[:PROB:LO-HI]; COUNT '*' = remaining "
                        "iterations; CLASS one of tight, laggard, wide")
    p.add_argument("--output", type=Path, help="trace path (default OUT_DIR/trace.csv)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    sub = parser._subparsers._group_actions[0].choices[args.subcommand]  # noqa: SLF001
    known = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for lineno, raw in enumerate(args.config.read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        dest = key.strip().replace("-", "_")
        if not eq or dest not in known or dest in ("config", "help"):
            raise UsageError(f"{args.config}:{lineno}: unknown config entry {line!r}")
        value = value.strip()
        action = known[dest]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[dest] = value.lower() in ("1", "true", "yes", "on")
        elif isinstance(action, argparse._AppendAction):  # noqa: SLF001
            defaults[dest] = [v.strip() for v in value.split(";") if v.strip()]
        elif action.type is not None:
            defaults[dest] = action.type(value)
        else:
            defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def _parse_bin_widths(text: str) -> dict[str, int]:
    text = text.strip()
    if "=" not in text:
        w = int(round(parse_duration(text)))
        return {"app": w, "proc": w}
    out = dict(DEFAULT_BIN_WIDTHS)
    for part in text.split(","):
        k, _, v = part.partition("=")
        k = k.strip()
        if k not in out:
            raise ValueError(f"bin width level must be app or proc, got {k!r}")
        out[k] = int(round(parse_duration(v)))
    if min(out.values()) <= 0:
        raise ValueError("bin widths must be positive")
    return out


def _parse_percentiles(text: str) -> tuple[float, ...]:
    ps = tuple(float(v) for v in text.split(",") if v.strip())
    if not ps or any(not 0 <= p <= 100 for p in ps):
        raise ValueError("percentiles must be in 0..100")
    return ps


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(args.subcommand, out_dir=args.out_dir, seed=args.seed, jobs=max(1, args.jobs))
    try:
        if getattr(args, "input", None):
            cfg.input = args.input
        if getattr(args, "shape", None):
            cfg.shape = DatasetShape.parse(args.shape)
        cfg.allow_partial = getattr(args, "allow_partial", False)
        if hasattr(args, "alpha"):
            cfg.alpha = args.alpha
            cfg.bin_widths = _parse_bin_widths(args.bin_width)
            cfg.percentiles = _parse_percentiles(args.percentiles)
            cfg.hist_groups = [GroupKey.parse(k) for k in args.hist_group]
            cfg.svg = args.svg
        if hasattr(args, "laggard_threshold"):
            cfg.threshold = metrics_mod.LaggardThreshold.parse(args.laggard_threshold)
            cfg.sections = metrics_mod.parse_sections(args.sections)
        if hasattr(args, "bandwidth"):
            cfg.bandwidth = parse_rate(args.bandwidth)
            cfg.overhead = parse_duration(args.overhead)
            cfg.partition_bytes = int(parse_size(args.partition_bytes))
            cfg.timeout = parse_duration(args.timeout)
            cfg.strategies = tuple(sim.Strategy(s.strip()) for s in args.strategies.split(",") if s.strip())
            cfg.detail_groups = [GroupKey.parse(k) for k in args.detail_group]
        if args.subcommand == "synth":
            cfg.profile = args.profile
            cfg.phases = args.phase
            cfg.output = args.output
            if bool(cfg.profile) == bool(cfg.phases):
                raise ValueError("synth needs exactly one of --profile or --phase")
    except ValueError as e:
        raise UsageError(str(e)) from None
    if args.subcommand != "synth" and cfg.input is None:
        raise UsageError("--input is required")
    return cfg


# ---------------------------------------------------------------------------
# output helpers


def _f(x: float, digits: int = 6) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.{digits}f}"


def _g(x: float) -> str:
    if x is None or math.isnan(x):
        return ""
    return format(float(x), ".12g")


def _ms(ns: float) -> str:
    return _f(ns / NS_PER_MS)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return None if math.isnan(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _pcol(p: float) -> str:
    return f"p{int(p):02d}" if float(p).is_integer() else f"p{p:g}"


def _width_label(ns: int) -> str:
    for unit, scale in (("ms", 1_000_000), ("us", 1_000)):
        if ns % scale == 0:
            return f"{ns // scale}{unit}"
    return f"{ns}ns"


# ---------------------------------------------------------------------------
# subcommands


def _load(cfg: RunConfig):
    return traceio.read_trace(cfg.input, cfg.shape, cfg.allow_partial)


def cmd_validate(cfg: RunConfig) -> int:
    ds = traceio.load_trace(cfg.input, cfg.shape, cfg.allow_partial)
    rep = ds.report
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    (cfg.out_dir / "validation.txt").write_text("\n".join(rep.lines()) + "\n", encoding="utf-8")
    print(f"{cfg.input}: {rep.summary()}")
    if rep.clean or (cfg.allow_partial and rep.usable_partial):
        return EXIT_OK
    return EXIT_INVALID


def _normality_outputs(cfg: RunConfig, ds) -> None:
    for level in AggregationLevel:
        table = stats.normality_summary(ds, level, cfg.alpha, cfg.seed)
        discordant = set(table.discordant())
        note = " | ".join(table.notes)
        rows = []
        for t in stats.NormalityTest:
            rows.append([t.value, table.passed(t), table.evaluated(t), table.skipped(t),
                         _f(table.pass_fraction(t)), cfg.alpha, table.n_groups, len(discordant), note])
        _write_csv(cfg.out_dir / f"normality_{level.value}.csv",
                   ["test", "passed", "evaluated", "skipped", "pass_fraction", "alpha", "n_groups",
                    "discordant_groups", "note"], rows)

        r = table.results
        k2, sw, ad = (r[stats.NormalityTest.DAGOSTINO], r[stats.NormalityTest.SHAPIRO_WILK],
                      r[stats.NormalityTest.ANDERSON_DARLING])

        def verdict(res, i):
            if res.skipped[i]:
                return "skipped"
            return stats.Verdict.REJECT.value if res.reject[i] else stats.Verdict.FAIL_TO_REJECT.value

        group_rows = []
        for i, key in enumerate(table.keys):
            n = int(table.sizes[i])
            group_rows.append([
                str(key), n,
                _g(k2.statistic[i]), _g(k2.p_value[i]), verdict(k2, i),
                _g(sw.statistic[i]), _g(sw.p_value[i]), verdict(sw, i),
                _g(ad.statistic[i]), _f(stats.anderson_critical(n, cfg.alpha)), _g(ad.p_value[i]), verdict(ad, i),
                int(key in discordant),
            ])
        _write_csv(cfg.out_dir / f"normality_{level.value}_groups.csv",
                   ["key", "n", "dagostino_k2", "dagostino_p", "dagostino",
                    "shapiro_w", "shapiro_p", "shapiro_wilk",
                    "anderson_a2", "anderson_critical", "anderson_p_approx", "anderson_darling",
                    "discordant"], group_rows)


def _histogram_outputs(cfg: RunConfig, ds) -> None:
    durations = ds.durations()
    targets: list[tuple[GroupKey, int]] = [(GroupKey(AggregationLevel.APPLICATION), cfg.bin_widths["app"])]
    proc_keys = []
    table = metrics_mod.group_metrics(ds, cfg.threshold)
    if len(table):
        proc_keys.append(table.keys[0])
        worst = int(np.argmax(table.max - table.median))
        if table.keys[worst] != table.keys[0]:
            proc_keys.append(table.keys[worst])
    for k in cfg.hist_groups:
        if k not in proc_keys and k.level is not AggregationLevel.APPLICATION:
            proc_keys.append(k)
    targets += [(k, cfg.bin_widths["proc"] if k.level is AggregationLevel.PROCESS_ITERATION
                 else cfg.bin_widths["app"]) for k in proc_keys]

    for key, width in targets:
        if key.level is AggregationLevel.APPLICATION:
            values = group(ds, key.level)[0][1]
        elif key.level is AggregationLevel.APPLICATION_ITERATION:
            if not 0 <= key.iteration < ds.shape.n_iterations:
                raise UsageError(f"no such group {key}")
            values = dict(group(ds, key.level))[key]
        else:
            try:
                values = durations[key.trial, key.process, key.iteration]
            except IndexError:
                raise UsageError(f"no such group {key}") from None
        h = stats.histogram(values, width)
        stem = f"hist_{key}_{_width_label(width)}"
        _write_csv(cfg.out_dir / f"{stem}.csv", ["lower_ms", "upper_ms", "count"],
                   [[_ms(lo), _ms(lo + width), c] for lo, c in h.bins])
        if cfg.svg:
            from .plots import histogram_plot

            histogram_plot(cfg.out_dir / f"{stem}.svg", [lo / NS_PER_MS for lo, _ in h.bins],
                           [c for _, c in h.bins], width / NS_PER_MS, f"{key}, bin {_width_label(width)}")


def _percentile_outputs(cfg: RunConfig, ds) -> None:
    ps = [p / 100 for p in cfg.percentiles]
    cols = [_pcol(p) for p in cfg.percentiles]
    rows = []
    series = {c: [] for c in cols}
    iters = []
    for key, values in group(ds, AggregationLevel.APPLICATION_ITERATION):
        if len(values) == 0:
            continue
        q = stats.percentiles(values, ps) / NS_PER_MS
        rows.append([key.iteration, *(_f(v) for v in q)])
        iters.append(key.iteration)
        for c, v in zip(cols, q):
            series[c].append(float(v))
    _write_csv(cfg.out_dir / "percentiles.csv", ["iteration", *cols], rows)
    if cfg.svg:
        from .plots import percentile_plot

        percentile_plot(cfg.out_dir / "percentiles.svg", iters, series, "compute time percentiles per iteration")


def cmd_analyze(cfg: RunConfig) -> int:
    ds = _load(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _normality_outputs(cfg, ds)
    _histogram_outputs(cfg, ds)
    _percentile_outputs(cfg, ds)
    return EXIT_OK


def cmd_metrics(cfg: RunConfig) -> int:
    ds = _load(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    table = metrics_mod.group_metrics(ds, cfg.threshold)
    rows = [[str(k), k.trial, k.process, k.iteration, _ms(table.median[i]), _ms(table.max[i]),
             int(table.laggard[i]), _ms(table.reclaimable[i]), _f(table.idle_ratio[i], 9), _ms(table.iqr[i])]
            for i, k in enumerate(table.keys)]
    _write_csv(cfg.out_dir / "group_metrics.csv",
               ["key", "trial", "process", "iteration", "median_ms", "max_ms", "laggard", "reclaimable_ms",
                "idle_ratio", "iqr_ms"], rows)
    summary = metrics_mod.summarize(ds, cfg.threshold, cfg.sections)
    _write_json(cfg.out_dir / "metrics_summary.json", summary.as_dict())
    o = summary.overall
    print(f"laggard_fraction={o.laggard_fraction:.4f} mean_median_ms={o.mean_median_ms:.3f} "
          f"avg_reclaimable_ms={o.avg_reclaimable_ms:.3f} mean_idle_ratio={o.mean_idle_ratio:.4f}")
    return EXIT_OK


def cmd_simulate(cfg: RunConfig) -> int:
    ds = _load(cfg)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    net = sim.NetworkModel(cfg.bandwidth, cfg.overhead)
    res = sim.sweep(ds, None, net, cfg.strategies, cfg.timeout, jobs=cfg.jobs,
                    partition_bytes=cfg.partition_bytes)
    order = [s for s in sim.Strategy if s in res.completion]
    rows = []
    for i, k in enumerate(res.keys):
        for s in order:
            rows.append([str(k), s.value, _ms(res.completion[s][i]), _ms(res.gain(s)[i]),
                         int(res.n_transfers[s][i])])
    _write_csv(cfg.out_dir / "transmissions.csv",
               ["key", "strategy", "completion_ms", "overlap_gain_ms", "n_transfers"], rows)
    for key in cfg.detail_groups:
        try:
            idx = res.keys.index(key)
        except ValueError:
            raise UsageError(f"no such process iteration {key}") from None
        prow = []
        for s in order:
            rep = res.report(idx, s)
            prow += [[s.value, p.thread, _ms(p.ready), _ms(p.initiate), _ms(p.start), _ms(p.finish)]
                     for p in rep.partitions]
        _write_csv(cfg.out_dir / f"partitions_{key}.csv",
                   ["strategy", "thread", "ready_ms", "initiate_ms", "start_ms", "finish_ms"], prow)
    _write_json(cfg.out_dir / "overlap_summary.json", {
        "network": {"bandwidth_bytes_per_s": net.bandwidth, "per_transfer_overhead_ns": net.per_transfer_overhead,
                    "link_discipline": net.link_discipline},
        "message": {"partition_bytes": res.msg.partition_bytes, "n_partitions": res.msg.n_partitions,
                    "total_bytes": res.msg.total_bytes},
        "timeout_ns": cfg.timeout if sim.Strategy.TIMEOUT_BINNED in order else None,
        "strategies": {s.value: res.summary[s].as_dict() for s in order if s in res.summary},
    })
    for s in order:
        if s in res.summary:
            sm = res.summary[s]
            print(f"{s.value}: mean_completion_ms={sm.mean_completion_ms:.4f} mean_gain_ms={sm.mean_gain_ms:.4f}")
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    for fn in (cmd_analyze, cmd_metrics, cmd_simulate):
        code = fn(cfg)
        if code:
            return code
    return EXIT_OK


_CLASSES = {c.value: c for c in traceio.ProfileClass}


def parse_phase(text: str, seed: int, k: int) -> traceio.Phase:
    parts = text.split(":")
    if len(parts) not in (4, 6):
        raise UsageError(f"bad phase {text!r}: expected COUNT:CLASS:MEDIAN_MS:IQR_MS[:PROB:LO-HI]")
    try:
        count = None if parts[0] == "*" else int(parts[0])
        cls = _CLASSES[parts[1]]
        prob, excess = 0.0, (0.0, 0.0)
        if len(parts) == 6:
            prob = float(parts[4])
            lo, _, hi = parts[5].partition("-")
            excess = (float(lo), float(hi))
        prof = traceio.GeneratorProfile(cls, float(parts[2]), float(parts[3]), prob, excess,
                                        traceio._phase_seed(seed, k))
    except (KeyError, ValueError) as e:
        raise UsageError(f"bad phase {text!r}: {e}") from None
    return prof, count


def cmd_synth(cfg: RunConfig) -> int:
    shape = cfg.shape or DatasetShape(10, 8, 200, 48)
    if cfg.profile:
        phases = traceio.named_profile(cfg.profile, cfg.seed)
        meta = {"application": cfg.profile}
    else:
        phases = [parse_phase(p, cfg.seed, k) for k, p in enumerate(cfg.phases)]
        meta = {"application": "custom"}
    meta["seed"] = str(cfg.seed)
    for k, (prof, count) in enumerate(phases):
        meta[f"phase{k}"] = (f"iterations={'rest' if count is None else count} class={prof.cls.value} "
                             f"median_ms={prof.median_ms} iqr_ms={prof.iqr_ms} laggard_prob={prof.laggard_prob} "
                             f"laggard_excess_ms={prof.laggard_excess_ms[0]}-{prof.laggard_excess_ms[1]}")
    try:
        ds = traceio.generate_phased(phases, shape, cfg.seed, meta)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = cfg.output or cfg.out_dir / "trace.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    traceio.write_trace(ds, out)
    print(f"wrote {out} ({len(ds)} samples, shape {shape})")
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "analyze": cmd_analyze,
    "metrics": cmd_metrics,
    "simulate": cmd_simulate,
    "report": cmd_report,
    "synth": cmd_synth,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = config_from_args(args)
        return COMMANDS[cfg.subcommand](cfg)
    except SystemExit as e:  # argparse usage errors
        return int(e.code) if isinstance(e.code, int) else EXIT_USAGE
    except UsageError as e:
        print(f"earlybird: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, traceio.TraceFormatError) as e:
        print(f"earlybird: {e}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as e:
        print(f"earlybird: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception:  # noqa: BLE001
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
