"""Generate the three built-in profiles at full shape and tabulate their metrics.

Prints measured values next to the published reference figures, including
both idle-ratio views (region-length and arrival-span denominators).

    python3 scripts/reproduce_profiles.py [--seed 1] [--out-dir out/profiles]
"""
import argparse
import json
from pathlib import Path

from earlybird import sim
from earlybird.metrics import summarize
from earlybird.trace import DatasetShape
from earlybird.traceio import NAMED_SECTIONS, generate_phased, named_profile, write_trace

SHAPE = DatasetShape(10, 8, 200, 48)
REFERENCE = {
    "minife-like": {"laggard_fraction": 0.224, "mean_median_ms": 26.30, "avg_reclaimable_ms": 42.82,
                    "mean_idle_ratio": 0.1928},
    "minimd-like": {"laggard_fraction": 0.048, "mean_median_ms": 24.74, "avg_reclaimable_ms": 17.61,
                    "mean_idle_ratio": 0.5012},
    "miniqmc-like": {"mean_median_ms": 60.91, "mean_iqr_ms": 9.05, "avg_reclaimable_ms": 708.03,
                     "mean_idle_ratio": 0.5033},
}


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--out-dir", type=Path)
    ap.add_argument("--write-traces", action="store_true")
    args = ap.parse_args()

    results = {}
    for name, ref in REFERENCE.items():
        ds = generate_phased(named_profile(name, args.seed), SHAPE, args.seed, {"application": name})
        sections = [(lo, SHAPE.n_iterations if hi is None else hi) for lo, hi in NAMED_SECTIONS.get(name, [])]
        s = summarize(ds, sections=sections)
        res = sim.sweep(ds, None, sim.NetworkModel(12.5e9, 1000), timeout=1e6, partition_bytes=65536)
        o = s.overall.as_dict()
        results[name] = {"summary": s.as_dict(),
                         "earlybird_mean_gain_ms": res.summary[sim.Strategy.EARLYBIRD].mean_gain_ms}
        print(f"\n{name}")
        for key in ("laggard_fraction", "mean_median_ms", "mean_iqr_ms", "avg_reclaimable_ms",
                    "mean_idle_ratio", "mean_span_idle_ratio"):
            want = ref.get(key)
            print(f"  {key:22s} {o[key]:10.4f}" + (f"   reference {want}" if want is not None else ""))
        for sec in s.sections:
            print(f"  section {sec.label:8s} mean_iqr_ms={sec.mean_iqr_ms:.3f} laggard={sec.laggard_fraction:.4f}")
        print(f"  early-bird mean gain   {results[name]['earlybird_mean_gain_ms']:10.4f} ms (12.5 GB/s, 64 KiB)")
        if args.out_dir and args.write_traces:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            write_trace(ds, args.out_dir / f"{name}.csv")
    if args.out_dir:
        args.out_dir.mkdir(parents=True, exist_ok=True)
        (args.out_dir / "profiles.json").write_text(json.dumps(results, indent=2, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
