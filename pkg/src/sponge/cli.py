"""Command-line entry point: ``sponge run|oracle|probe|sweep``."""

from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
from pathlib import Path

from sponge.aimd import water_fill
from sponge.engine import probe_windows, run_scenario
from sponge.errors import ConfigError, DomainError
from sponge.io import parse_scenario, summary_dict, write_summary, write_timeseries
from sponge.targets import window_forecasts

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _values(text: str) -> list:
    out = []
    for x in text.split(","):
        x = x.strip()
        try:
            out.append(json.loads(x))
        except json.JSONDecodeError:
            out.append(x)
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sponge", description="Coordinate PHEV fleet EV/ICE modes against a renewable forecast.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    run = sub.add_parser("run", help="simulate a scenario, write time series and summary")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--seed", type=int)

    oracle = sub.add_parser("oracle", help="optimal EV shares for quadratic utilities")
    oracle.add_argument("--a", type=_floats, required=True, help="utility coefficients, comma separated")
    oracle.add_argument("--total", type=float, required=True, help="total EV share to allocate")

    probe = sub.add_parser("probe", help="per-window feasibility bounds (all-EV replay)")
    probe.add_argument("scenario", type=Path)
    probe.add_argument("--seed", type=int)

    sweep = sub.add_parser("sweep", help="one run per parameter value, one summary row each")
    sweep.add_argument("scenario", type=Path)
    sweep.add_argument("--param", required=True, help="dotted scenario key, e.g. controller.kp")
    sweep.add_argument("--values", type=_values, required=True)
    return p


def _load_raw(path: Path) -> tuple[dict, str]:
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc.strerror}") from None
    parse_scenario(text, path.parent)  # full validation with line numbers
    return json.loads(text), text


def _scenario(path: Path, seed: int | None):
    raw, _ = _load_raw(path)
    if seed is not None:
        raw["seed"] = seed
    return parse_scenario(json.dumps(raw), path.parent)


def _set_dotted(raw: dict, dotted: str, value) -> None:
    node = raw
    *parents, leaf = dotted.split(".")
    for part in parents:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError("not an object", key=dotted)
    node[leaf] = value


def _row(summary) -> dict:
    return {
        "final_deficit": summary.final_deficit,
        "final_surplus": summary.final_surplus,
        "max_overshoot": summary.max_overshoot,
        "terminal_relative_error": summary.terminal_relative_error,
        "consensus_spread": summary.consensus_spread,
        "infeasible_windows": sum(not w.feasible for w in summary.windows),
        "wall_clock_s": summary.wall_clock_s,
    }


def cmd_run(args) -> dict:
    scenario = _scenario(args.scenario, args.seed)
    records, summary = run_scenario(scenario)
    args.out.mkdir(parents=True, exist_ok=True)
    write_timeseries(records, args.out / "timeseries.csv")
    write_summary(summary, args.out / "summary.json")
    return summary_dict(summary)


def cmd_oracle(args) -> dict:
    x, lam = water_fill(args.a, args.total)
    return {"allocation": [round(v, 12) for v in x.tolist()], "multiplier": lam}


def cmd_probe(args) -> dict:
    scenario = _scenario(args.scenario, args.seed)
    windows = scenario.windows()
    forecasts = window_forecasts(scenario.forecast, windows, scenario.window_ticks)
    return {"windows": [
        {"index": w.index, "start_tick": w.start_tick, "end_tick": w.end_tick, "bound_kwh": b,
         "forecast_kwh": f, "feasible": f <= b}
        for w, b, f in zip(windows, probe_windows(scenario), forecasts)
    ]}


def cmd_sweep(args) -> dict:
    raw, _ = _load_raw(args.scenario)
    rows = []
    for value in args.values:
        variant = copy.deepcopy(raw)
        _set_dotted(variant, args.param, value)
        _, summary = run_scenario(parse_scenario(json.dumps(variant, indent=2), args.scenario.parent))
        rows.append({"value": value, **_row(summary)})
    return {"param": args.param, "rows": rows}


COMMANDS = {"run": cmd_run, "oracle": cmd_oracle, "probe": cmd_probe, "sweep": cmd_sweep}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        result = COMMANDS[args.command](args)
    except (ConfigError, DomainError) as exc:
        print(f"sponge {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"sponge {args.command}: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(json.dumps(result, indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
