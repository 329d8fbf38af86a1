"""Forecast-driven per-window energy targets and their within-window trajectories."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from sponge.errors import ConfigError
from sponge.fleet import SECONDS_PER_HOUR, quantize


@dataclass(frozen=True)
class EnergyForecast:
    """Forecast renewable energy per window, in kWh.

    Entry ``k`` is the energy expected at the charging period that follows window ``k``.
    """

    per_window_energy: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_window_energy", tuple(float(e) for e in self.per_window_energy))
        for k, e in enumerate(self.per_window_energy):
            if not e >= 0:
                raise ConfigError(f"forecast entry {k} must be non-negative, got {e}")

    def __len__(self) -> int:
        return len(self.per_window_energy)

    def __getitem__(self, k: int) -> float:
        return self.per_window_energy[k]


@dataclass(frozen=True)
class Window:
    index: int
    start_tick: int
    end_tick: int
    dt: float = 1.0

    @property
    def n_ticks(self) -> int:
        return self.end_tick - self.start_tick

    @property
    def duration(self) -> float:
        """Window length in seconds."""
        return self.n_ticks * self.dt

    def contains(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick


def build_windows(horizon_ticks: int, window_ticks: int, dt: float = 1.0) -> list[Window]:
    """Split the horizon into contiguous windows; the last one may be truncated."""
    if window_ticks <= 0:
        raise ConfigError("window length must be at least one tick", key="window_s")
    if horizon_ticks <= 0:
        raise ConfigError("horizon must be at least one tick", key="horizon_s")
    return [
        Window(k, start, min(start + window_ticks, horizon_ticks), dt)
        for k, start in enumerate(range(0, horizon_ticks, window_ticks))
    ]


@dataclass(frozen=True)
class TargetTrajectory:
    """Uniform-rate trajectory reaching ``target_total`` at the end of ``window``."""

    window: Window
    target_total: float  # kWh

    @property
    def rate(self) -> float:
        """Target dissipation rate in kW."""
        return self.target_total / (self.window.duration / SECONDS_PER_HOUR)

    def cumulative_target(self, elapsed: float) -> float:
        """Energy that should have been dissipated ``elapsed`` seconds into the window."""
        if elapsed >= self.window.duration:
            return self.target_total
        if elapsed <= 0:
            return 0.0
        return self.target_total * (elapsed / self.window.duration)

    def cumulative_at_tick(self, tick: int) -> float:
        """Reference at the start of absolute ``tick``, i.e. after ``tick - start`` ticks have elapsed."""
        return self.cumulative_target((tick - self.window.start_tick) * self.window.dt)


def build_trajectory(window: Window, forecast_entry: float, deficit_in: float = 0.0) -> TargetTrajectory:
    if window.n_ticks <= 0 or not window.duration > 0:
        raise ConfigError(f"window {window.index} has zero duration")
    if forecast_entry < 0 or deficit_in < 0:
        raise ValueError("forecast entry and carried deficit must be non-negative")
    return TargetTrajectory(window, forecast_entry + deficit_in)


def carry_over(traj: TargetTrajectory, achieved: float) -> tuple[float, float]:
    """Return ``(deficit, surplus)`` of a finished window.

    The deficit is added to the next window's target. The surplus only matters in
    exact mode, where it is subtracted from the next target; see :func:`next_target`.
    """
    if achieved < 0:
        raise ValueError("achieved energy must be non-negative")
    return max(0.0, traj.target_total - achieved), max(0.0, achieved - traj.target_total)


def next_target(forecast_entry: float, deficit: float, surplus: float) -> tuple[float, float]:
    """Fold a carried deficit or surplus into a forecast entry.

    Returns ``(target_total, surplus_left)``. A surplus larger than the entry floors
    the target at zero and the remainder keeps rolling forward, so no energy is
    lost from the cross-window balance.
    """
    t = forecast_entry + deficit - surplus
    if t >= 0:
        return t, 0.0
    return 0.0, -t


def window_forecasts(forecast: EnergyForecast, windows: Sequence[Window], window_ticks: int) -> list[float]:
    """Per-window forecast energy; a truncated final window gets a pro-rata share."""
    if len(forecast) < len(windows):
        raise ConfigError(f"forecast has {len(forecast)} entries but the horizon has {len(windows)} windows",
                          key="forecast_file")
    out = []
    for w in windows:
        e = forecast[w.index]
        if w.n_ticks < window_ticks:
            e = quantize(e * w.n_ticks / window_ticks)
        out.append(quantize(e))
    return out
