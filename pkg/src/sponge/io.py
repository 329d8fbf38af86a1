"""Scenario and forecast files, time-series and summary output."""

from __future__ import annotations

import csv
import json
import math
import re
from dataclasses import asdict
from pathlib import Path
from typing import Any, Sequence

from sponge.engine import ControllerConfig, MetricsRecord, RunSummary, Scenario
from sponge.errors import ConfigError
from sponge.fleet import FleetConfig
from sponge.targets import EnergyForecast

FORECAST_HEADER = ("window_index", "e_av_kwh")
TIMESERIES_HEADER = (
    "tick", "window", "target_cum_kwh", "achieved_cum_kwh", "n_ev", "n_ice", "n_idle", "n_eligible",
    "signal_p", "consensus_spread", "deficit_kwh",
)

# key -> (required, default)
TOP_KEYS = {
    "seed": (False, 0),
    "n_vehicles": (True, None),
    "n_max": (False, 100_000),
    "horizon_s": (True, None),
    "window_s": (True, None),
    "tick_s": (False, 1.0),
    "controller": (False, {}),
    "vehicle": (False, {}),
    "trips": (False, {}),
    "forecast_file": (True, None),
}
CONTROLLER_KEYS = {
    "type", "kp", "ki", "p_min", "tracking", "alpha", "beta", "gamma", "congestion_window", "rate_target", "utility",
}
UTILITY_KEYS = {"form", "a_min", "a_max"}
VEHICLE_KEYS = {"battery_kwh", "min_soc_fraction", "ev_power_kw", "ice_power_kw", "fuel_kwh", "init_soc_range"}
TRIP_KEYS = {"start_window_fraction", "duration_range_fraction"}


def _line_of(text: str, dotted: str) -> int | None:
    """Line number of the innermost key of ``dotted`` in the JSON text, best effort."""
    pos = 0
    for part in dotted.split("."):
        m = re.compile(r'"%s"\s*:' % re.escape(part)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


class _Reader:
    def __init__(self, text: str):
        self.text = text

    def error(self, message: str, key: str) -> ConfigError:
        return ConfigError(message, key=key, line=_line_of(self.text, key))

    def check_keys(self, obj: Any, allowed: set[str], prefix: str) -> dict:
        if not isinstance(obj, dict):
            raise self.error("expected an object", prefix.rstrip(".") or "<root>")
        for k in obj:
            if k not in allowed:
                raise self.error("unknown key", prefix + k)
        return obj

    def number(self, obj: dict, key: str, prefix: str, default=None, *, integer: bool = False,
               positive: bool = False, nonneg: bool = False):
        full = prefix + key
        if key not in obj:
            return default
        v = obj[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (isinstance(v, float) and not math.isfinite(v)):
            raise self.error(f"expected a number, got {v!r}", full)
        if integer and not (isinstance(v, int) or float(v).is_integer()):
            raise self.error(f"expected an integer, got {v!r}", full)
        if positive and not v > 0:
            raise self.error(f"must be positive, got {v}", full)
        if nonneg and not v >= 0:
            raise self.error(f"must be non-negative, got {v}", full)
        return int(v) if integer else float(v)

    def number_or_range(self, obj: dict, key: str, prefix: str, default, *, positive: bool = False,
                        nonneg: bool = False):
        if key in obj and isinstance(obj[key], list):
            lo, hi = self.pair(obj, key, prefix, None)
            for x in (lo, hi):
                if (positive and not x > 0) or (nonneg and not x >= 0):
                    raise self.error(f"range bounds must be {'positive' if positive else 'non-negative'}",
                                     prefix + key)
            return (lo, hi)
        return self.number(obj, key, prefix, default, positive=positive, nonneg=nonneg)

    def pair(self, obj: dict, key: str, prefix: str, default):
        if key not in obj:
            return default
        v = obj[key]
        if (not isinstance(v, list) or len(v) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in v)):
            raise self.error(f"expected a [lo, hi] pair of numbers, got {v!r}", prefix + key)
        lo, hi = float(v[0]), float(v[1])
        if lo > hi:
            raise self.error(f"range must satisfy lo <= hi, got {v}", prefix + key)
        return (lo, hi)


def _ticks(seconds: float, tick_s: float, key: str, reader: _Reader) -> int:
    n = round(seconds / tick_s)
    if n < 1 or abs(n * tick_s - seconds) > 1e-9 * max(1.0, seconds):
        raise reader.error(f"must be a positive whole number of ticks ({tick_s} s), got {seconds}", key)
    return n


def parse_scenario(text: str, base_dir: Path = Path("."), forecast: EnergyForecast | None = None) -> Scenario:
    """Build a validated :class:`Scenario` from scenario-file text."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"parse error at column {exc.colno}: {exc.msg}", line=exc.lineno) from None
    r = _Reader(text)
    r.check_keys(raw, set(TOP_KEYS), "")
    for key, (required, _) in TOP_KEYS.items():
        if required and key not in raw:
            raise ConfigError("missing required key", key=key)

    tick_s = r.number(raw, "tick_s", "", 1.0, positive=True)
    horizon = _ticks(r.number(raw, "horizon_s", "", positive=True), tick_s, "horizon_s", r)
    window = _ticks(r.number(raw, "window_s", "", positive=True), tick_s, "window_s", r)

    c = r.check_keys(raw.get("controller", {}), CONTROLLER_KEYS, "controller.")
    u = r.check_keys(c.get("utility", {}), UTILITY_KEYS, "controller.utility.")
    v = r.check_keys(raw.get("vehicle", {}), VEHICLE_KEYS, "vehicle.")
    t = r.check_keys(raw.get("trips", {}), TRIP_KEYS, "trips.")
    for obj, key, prefix in ((c, "type", "controller."), (c, "tracking", "controller."),
                             (c, "rate_target", "controller."), (u, "form", "controller.utility.")):
        if key in obj and not isinstance(obj[key], str):
            raise r.error(f"expected a string, got {obj[key]!r}", prefix + key)

    defaults = FleetConfig(n_vehicles=1, horizon_ticks=1)
    fleet = FleetConfig(
        n_vehicles=r.number(raw, "n_vehicles", "", integer=True),
        n_max=r.number(raw, "n_max", "", defaults.n_max, integer=True, positive=True),
        horizon_ticks=horizon,
        dt=tick_s,
        seed=r.number(raw, "seed", "", 0, integer=True, nonneg=True),
        battery_kwh=r.number_or_range(v, "battery_kwh", "vehicle.", defaults.battery_kwh, positive=True),
        min_soc_fraction=r.number(v, "min_soc_fraction", "vehicle.", defaults.min_soc_fraction, nonneg=True),
        ev_power_kw=r.number_or_range(v, "ev_power_kw", "vehicle.", defaults.ev_power_kw, positive=True),
        ice_power_kw=r.number(v, "ice_power_kw", "vehicle.", defaults.ice_power_kw, positive=True),
        fuel_kwh=r.number_or_range(v, "fuel_kwh", "vehicle.", defaults.fuel_kwh, nonneg=True),
        initial_soc_range=r.pair(v, "init_soc_range", "vehicle.", defaults.initial_soc_range),
        start_window_fraction=r.number(t, "start_window_fraction", "trips.", defaults.start_window_fraction,
                                       nonneg=True),
        duration_range_fraction=r.pair(t, "duration_range_fraction", "trips.", defaults.duration_range_fraction),
    )
    cdef = ControllerConfig()
    controller = ControllerConfig(
        type=c.get("type", cdef.type),
        kp=r.number(c, "kp", "controller.", None, nonneg=True),
        ki=r.number(c, "ki", "controller.", None, nonneg=True),
        p_min=r.number(c, "p_min", "controller.", None, nonneg=True),
        tracking=c.get("tracking", cdef.tracking),
        alpha=r.number(c, "alpha", "controller.", cdef.alpha, positive=True),
        beta=r.number(c, "beta", "controller.", cdef.beta, positive=True),
        gamma=r.number(c, "gamma", "controller.", None, positive=True),
        congestion_window=r.number(c, "congestion_window", "controller.", cdef.congestion_window, integer=True,
                                   positive=True),
        rate_target=c.get("rate_target", cdef.rate_target),
        utility_form=u.get("form", cdef.utility_form),
        a_min=r.number(u, "a_min", "controller.utility.", cdef.a_min, positive=True),
        a_max=r.number(u, "a_max", "controller.utility.", cdef.a_max, positive=True),
    )

    if forecast is None:
        path = raw["forecast_file"]
        if not isinstance(path, str):
            raise r.error("expected a path string", "forecast_file")
        forecast = load_forecast(base_dir / path)
    scenario = Scenario(fleet, window, forecast, controller)
    try:
        scenario.validate()
    except ConfigError as exc:
        if exc.key is not None and exc.line is None:
            raise ConfigError(str(exc).rsplit(" (", 1)[0], key=exc.key, line=_line_of(text, exc.key)) from None
        raise
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc.strerror}") from None
    return parse_scenario(text, path.parent)


def load_forecast(path) -> EnergyForecast:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read forecast file {path}: {exc.strerror}", key="forecast_file") from None
    rows = list(csv.reader(text.splitlines()))
    if not rows or tuple(c.strip() for c in rows[0]) != FORECAST_HEADER:
        raise ConfigError(f"forecast file {path} must start with header '{','.join(FORECAST_HEADER)}'", line=1)
    values = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise ConfigError(f"forecast row must have 2 fields, got {len(row)}", line=lineno)
        try:
            k, e = int(row[0]), float(row[1])
        except ValueError:
            raise ConfigError(f"bad forecast row {row!r}", line=lineno) from None
        if k != len(values):
            raise ConfigError(f"window indices must be contiguous from 0; expected {len(values)}, got {k}",
                              line=lineno)
        if not (e >= 0 and math.isfinite(e)):
            raise ConfigError(f"e_av_kwh must be non-negative, got {e}", line=lineno)
        values.append(e)
    if not values:
        raise ConfigError(f"forecast file {path} has no rows")
    return EnergyForecast(values)


def write_forecast(forecast: EnergyForecast, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FORECAST_HEADER)
        for k, e in enumerate(forecast.per_window_energy):
            w.writerow([k, repr(float(e))])


def scenario_to_dict(scenario: Scenario, forecast_file: str) -> dict:
    f, c = scenario.fleet, scenario.controller

    def rng_or_num(x):
        return list(x) if isinstance(x, (tuple, list)) else x

    controller = {
        "type": c.type, "tracking": c.tracking, "alpha": c.alpha, "beta": c.beta,
        "congestion_window": c.congestion_window, "rate_target": c.rate_target,
        "utility": {"form": c.utility_form, "a_min": c.a_min, "a_max": c.a_max},
    }
    for key in ("kp", "ki", "p_min", "gamma"):
        if getattr(c, key) is not None:
            controller[key] = getattr(c, key)
    return {
        "seed": f.seed,
        "n_vehicles": f.n_vehicles,
        "n_max": f.n_max,
        "horizon_s": f.horizon_ticks * f.dt,
        "window_s": scenario.window_ticks * f.dt,
        "tick_s": f.dt,
        "controller": controller,
        "vehicle": {
            "battery_kwh": rng_or_num(f.battery_kwh), "min_soc_fraction": f.min_soc_fraction,
            "ev_power_kw": rng_or_num(f.ev_power_kw), "ice_power_kw": f.ice_power_kw,
            "fuel_kwh": rng_or_num(f.fuel_kwh), "init_soc_range": list(f.initial_soc_range),
        },
        "trips": {
            "start_window_fraction": f.start_window_fraction,
            "duration_range_fraction": list(f.duration_range_fraction),
        },
        "forecast_file": forecast_file,
    }


def dump_scenario(scenario: Scenario, path, forecast_path=None) -> None:
    """Write a scenario file plus its forecast file (default: ``<stem>_forecast.csv`` beside it)."""
    path = Path(path)
    forecast_path = Path(forecast_path) if forecast_path else path.with_name(path.stem + "_forecast.csv")
    write_forecast(scenario.forecast, forecast_path)
    rel = forecast_path.name if forecast_path.parent.resolve() == path.parent.resolve() else str(forecast_path)
    path.write_text(json.dumps(scenario_to_dict(scenario, rel), indent=2) + "\n")


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def write_timeseries(records: Sequence[MetricsRecord], path) -> None:
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TIMESERIES_HEADER)
        for r in records:
            w.writerow([
                r.tick, r.window, _fmt(r.cumulative_target), _fmt(r.achieved), r.n_ev, r.n_ice, r.n_idle,
                r.n_eligible, _fmt(r.signal_p), _fmt(r.consensus_spread), _fmt(r.deficit_running),
            ])


def summary_dict(summary: RunSummary, *, agents: bool = False) -> dict:
    d = asdict(summary)
    if not agents:
        d.pop("agents")
    return d


def write_summary(summary: RunSummary, path) -> None:
    Path(path).write_text(json.dumps(summary_dict(summary, agents=True), indent=2) + "\n")
