"""Run the three coordination schemes on the 600-vehicle preset over several seeds.

Each seed gets a forecast sized at a fraction of that fleet's per-window
all-EV bound. Prints a per-window table and writes the time series of the
first seed per scheme under --out.

    python3 scripts/reproduce_presets.py --seeds 5 --out runs/presets
"""

import argparse
import dataclasses
import statistics
from pathlib import Path

from sponge.engine import probe_windows, run_scenario
from sponge.io import load_scenario, write_summary, write_timeseries
from sponge.targets import EnergyForecast

ROOT = Path(__file__).resolve().parent.parent
PRESETS = {"sponge": "commute_sponge.json", "exact": "commute_exact.json", "optimal": "commute_optimal.json"}


def sized(scenario, seed, fraction):
    sc = dataclasses.replace(scenario, fleet=dataclasses.replace(scenario.fleet, seed=seed))
    return dataclasses.replace(sc, forecast=EnergyForecast([fraction * b for b in probe_windows(sc)]))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--fraction", type=float, default=0.5, help="forecast as a fraction of the window bound")
    ap.add_argument("--out", type=Path, default=None)
    args = ap.parse_args()

    for name, file in PRESETS.items():
        base = load_scenario(ROOT / "scenarios" / file)
        rel_errors, overshoots, times = [], [], []
        for seed in range(args.seeds):
            records, summary = run_scenario(sized(base, seed, args.fraction))
            times.append(summary.wall_clock_s)
            for w in summary.windows:
                rel_errors.append((w.achieved - w.target) / w.target)
                overshoots.append(w.achieved - w.target <= w.overshoot_bound)
            if seed == 0 and args.out is not None:
                out = args.out / name
                out.mkdir(parents=True, exist_ok=True)
                write_timeseries(records, out / "timeseries.csv")
                write_summary(summary, out / "summary.json")
            if seed == 0:
                print(f"\n{name}: seed 0")
                print(f"{'win':>3} {'target':>9} {'achieved':>9} {'bound':>9}")
                for w in summary.windows:
                    print(f"{w.index:>3} {w.target:9.2f} {w.achieved:9.2f} {w.bound:9.2f}")
        print(f"{name}: relative error min {min(rel_errors):+.3%} max {max(rel_errors):+.3%}, "
              f"overshoot within bound {sum(overshoots)}/{len(overshoots)}, "
              f"mean run {statistics.mean(times):.3f} s")


if __name__ == "__main__":
    main()
