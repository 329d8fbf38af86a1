"""Discrete-time loop tying fleet, targets and coordinator together."""

from __future__ import annotations

import logging
import time
import warnings
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from sponge.aimd import LINEAR, QUADRATIC, AimdPopulation, congestion_detect
from sponge.controllers import (
    BroadcastSignal,
    ControllerMode,
    ControllerState,
    TRACKING_MODES,
    SignalKind,
    pi_update,
    proportional_update,
)
from sponge.errors import ConfigError
from sponge.fleet import SECONDS_PER_HOUR, DriveMode, Fleet, FleetConfig, spawn_fleet
from sponge.targets import (
    EnergyForecast,
    TargetTrajectory,
    Window,
    build_trajectory,
    build_windows,
    carry_over,
    next_target,
    window_forecasts,
)

log = logging.getLogger(__name__)

CONTROLLER_TYPES = ("sponge", "exact", "optimal")
RATE_TARGETS = ("uniform", "remaining")


@dataclass
class ControllerConfig:
    type: str = "exact"
    kp: float | None = None  # relative to the window target; None picks the mode default
    ki: float | None = None  # 1/s, relative to the window target
    p_min: float | None = None  # proportional law offset; None picks the mode default
    tracking: str = "total"
    alpha: float = 0.01
    beta: float = 0.9
    gamma: float | None = None  # None -> 1 / (2 a_max)
    congestion_window: int = 10
    rate_target: str = "remaining"
    utility_form: str = QUADRATIC
    a_min: float = 0.05
    a_max: float = 1.0

    def validate(self) -> None:
        if self.type not in CONTROLLER_TYPES:
            raise ConfigError(f"controller type must be one of {CONTROLLER_TYPES}, got {self.type!r}",
                              key="controller.type")
        for key in ("kp", "ki"):
            value = getattr(self, key)
            if value is not None and value < 0:
                raise ConfigError("gain must be non-negative", key=f"controller.{key}")
        if self.p_min is not None and not 0.0 <= self.p_min <= 1.0:
            raise ConfigError(f"p_min must lie in [0, 1], got {self.p_min}", key="controller.p_min")
        if self.tracking not in TRACKING_MODES:
            raise ConfigError(f"tracking must be one of {TRACKING_MODES}, got {self.tracking!r}",
                              key="controller.tracking")
        if self.kp is not None and self.type != "optimal" and self.kp < 1:
            warnings.warn("kp * target_total < 1: the controller cannot request p = 1", stacklevel=2)
        if not self.alpha > 0:
            raise ConfigError("alpha must be positive", key="controller.alpha")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0, 1)", key="controller.beta")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError("gamma must be positive", key="controller.gamma")
        if self.congestion_window < 1:
            raise ConfigError("congestion window must be at least one tick", key="controller.congestion_window")
        if self.rate_target not in RATE_TARGETS:
            raise ConfigError(f"rate_target must be one of {RATE_TARGETS}, got {self.rate_target!r}",
                              key="controller.rate_target")
        if self.utility_form not in (QUADRATIC, LINEAR):
            raise ConfigError(f"utility form must be 'quadratic' or 'linear', got {self.utility_form!r}",
                              key="controller.utility.form")
        if not 0 < self.a_min <= self.a_max:
            raise ConfigError("utility coefficients need 0 < a_min <= a_max", key="controller.utility.a_min")

    @property
    def effective_gamma(self) -> float:
        return self.gamma if self.gamma is not None else 1.0 / (2.0 * self.a_max)


@dataclass
class Scenario:
    fleet: FleetConfig
    window_ticks: int
    forecast: EnergyForecast
    controller: ControllerConfig = field(default_factory=ControllerConfig)

    @property
    def seed(self) -> int:
        return self.fleet.seed

    @property
    def dt(self) -> float:
        return self.fleet.dt

    @property
    def horizon_ticks(self) -> int:
        return self.fleet.horizon_ticks

    def windows(self) -> list[Window]:
        return build_windows(self.horizon_ticks, self.window_ticks, self.dt)

    def validate(self) -> None:
        self.fleet.validate()
        self.controller.validate()
        windows = self.windows()
        if len(self.forecast) < len(windows):
            raise ConfigError(f"forecast has {len(self.forecast)} entries, need {len(windows)}", key="forecast_file")


@dataclass
class MetricsRecord:
    tick: int
    window: int
    cumulative_target: float
    achieved: float
    n_ev: int
    n_ice: int
    n_idle: int
    n_active: int
    n_eligible: int
    signal: BroadcastSignal | None
    signal_p: float | None
    consensus_spread: float | None
    deficit_running: float


@dataclass
class WindowSummary:
    index: int
    forecast: float
    target: float
    achieved: float
    deficit: float
    surplus: float
    bound: float
    feasible: bool
    n_active_max: int
    overshoot_bound: float


@dataclass
class RunSummary:
    windows: list[WindowSummary]
    terminal_relative_error: float | None
    max_overshoot: float
    consensus_spread: float | None
    final_deficit: float
    final_surplus: float
    wall_clock_s: float
    agents: list[dict] | None = None  # optimal mode: final per-agent coefficient, share and p_ev

    def to_dict(self) -> dict:
        return asdict(self)


def _window_bound(fleet: Fleet, window: Window) -> float:
    """Closed-form energy the fleet could draw in ``window`` driving EV whenever possible."""
    lo = np.maximum(fleet.start, window.start_tick)
    hi = np.minimum(fleet.end, window.end_tick)
    ticks = np.maximum(hi - lo, 0)
    headroom = np.where(fleet.eligible, fleet.soc - fleet.floor, 0.0)
    return float(np.minimum(fleet.ev_tick * ticks, headroom).sum())


def feasibility_probe(scenario: Scenario, window: Window, fleet: Fleet | None = None) -> float:
    """Energy dissipated in ``window`` when every eligible vehicle is forced into EV mode.

    Without ``fleet`` the replay starts from the freshly spawned fleet, which bounds
    what any policy can reach in that window. With ``fleet`` it starts from that
    state (typically the live fleet at the window boundary); the fleet is not modified.
    """
    if fleet is None:
        fleet = Fleet.from_vehicles(spawn_fleet(scenario.fleet), scenario.dt)
    replay = fleet.copy()
    replay.reset_window()
    for tick in range(window.start_tick, window.end_tick):
        replay.step(tick, 1.0)
    return replay.aggregate_dissipation()


def probe_windows(scenario: Scenario) -> list[float]:
    fleet = Fleet.from_vehicles(spawn_fleet(scenario.fleet), scenario.dt)
    return [_window_bound(fleet, w) for w in scenario.windows()]


def run_scenario(scenario: Scenario, on_tick=None) -> tuple[list[MetricsRecord], RunSummary]:
    """Simulate the whole horizon.

    ``on_tick(tick, fleet, signal, p_ev)``, if given, is called after every tick
    with the live fleet and the probabilities the vehicles acted on.
    """
    scenario.validate()
    t0 = time.perf_counter()
    cfg = scenario.controller
    dt = scenario.dt
    windows = scenario.windows()
    forecasts = window_forecasts(scenario.forecast, windows, scenario.window_ticks)

    fleet = Fleet.from_vehicles(spawn_fleet(scenario.fleet), dt)
    n = len(fleet)
    max_ev_tick = float(fleet.ev_power.max()) * dt / SECONDS_PER_HOUR
    optimal = cfg.type == "optimal"
    pop = None
    if optimal:
        pop = AimdPopulation.sample(fleet.ids, scenario.seed, (cfg.a_min, cfg.a_max), form=cfg.utility_form,
                                    alpha=cfg.alpha, beta=cfg.beta, gamma=cfg.effective_gamma)
    mode = ControllerMode.SPONGE if cfg.type == "sponge" else ControllerMode.EXACT
    carries_surplus = cfg.type != "sponge"

    records: list[MetricsRecord] = []
    summaries: list[WindowSummary] = []
    deficit = surplus = 0.0
    spread = None

    for w in windows:
        target, surplus_left = next_target(forecasts[w.index], deficit, surplus)
        traj = build_trajectory(w, target)
        bound = _window_bound(fleet, w)
        feasible = target <= bound
        if not feasible:
            log.info("window %d infeasible: target %.3f kWh > bound %.3f kWh", w.index, target, bound)
        ctrl = ControllerState.for_window(mode, traj, cfg.kp, cfg.ki, cfg.tracking, cfg.p_min)
        fleet.reset_window()
        achieved = 0.0
        recent = deque(maxlen=cfg.congestion_window)
        n_active_max = 0

        for tick in range(w.start_tick, w.end_tick):
            active = fleet.active(tick)
            programme = active & fleet.eligible
            n_active_max = max(n_active_max, int(programme.sum()))

            if not feasible:
                signal = BroadcastSignal.probability(1.0, tick)
                p = 1.0
            elif not optimal:
                if mode is ControllerMode.SPONGE:
                    signal = proportional_update(ctrl, achieved, tick)
                else:
                    signal = pi_update(ctrl, achieved, tick, dt)
                p = signal.effective_p
            elif achieved >= target:
                signal = BroadcastSignal.probability(0.0, tick)
                p = 0.0
            else:
                rate = sum(recent) / (len(recent) * dt / SECONDS_PER_HOUR) if recent else 0.0
                if cfg.rate_target == "remaining":
                    remaining_h = (w.end_tick - tick) * dt / SECONDS_PER_HOUR
                    target_rate = (target - achieved) / remaining_h
                else:
                    target_rate = traj.rate
                if congestion_detect(rate, target_rate):
                    signal = BroadcastSignal.congestion(tick)
                    pop.backoff(programme, tick)
                else:
                    signal = None
                    pop.increase(programme)
                p = pop.p_ev

            drawn = fleet.step(tick, p)
            if on_tick is not None:
                on_tick(tick, fleet, signal, p)
            recent.append(float(drawn.sum()))
            achieved = fleet.aggregate_dissipation()
            if optimal:
                pop.record(programme, fleet.mode == DriveMode.EV)
                spread = pop.spread(active & fleet.eligible)

            if signal is not None and signal.kind is not SignalKind.CONGESTION:
                signal_p = signal.effective_p
            elif programme.any():
                signal_p = float(fleet.p_ev[programme].mean())
            else:
                signal_p = None
            n_ev = int((fleet.mode == DriveMode.EV).sum())
            n_ice = int((fleet.mode == DriveMode.ICE).sum())
            records.append(MetricsRecord(
                tick=tick, window=w.index, cumulative_target=traj.cumulative_at_tick(tick + 1),
                achieved=achieved, n_ev=n_ev, n_ice=n_ice, n_idle=n - n_ev - n_ice,
                n_active=int(active.sum()), n_eligible=int(fleet.eligible.sum()), signal=signal,
                signal_p=signal_p, consensus_spread=spread if optimal else None,
                deficit_running=max(0.0, target - achieved),
            ))

        deficit, surplus = carry_over(traj, achieved)
        summaries.append(WindowSummary(
            index=w.index, forecast=forecasts[w.index], target=target, achieved=achieved, deficit=deficit,
            surplus=surplus, bound=bound, feasible=feasible, n_active_max=n_active_max,
            overshoot_bound=n_active_max * max_ev_tick,
        ))
        surplus = surplus + surplus_left if carries_surplus else 0.0

    last = summaries[-1]
    summary = RunSummary(
        windows=summaries,
        terminal_relative_error=abs(last.achieved - last.target) / last.target if last.target > 0 else None,
        max_overshoot=max(0.0, max(s.achieved - s.target for s in summaries)),
        consensus_spread=spread,
        final_deficit=deficit,
        final_surplus=surplus,
        wall_clock_s=time.perf_counter() - t0,
        agents=None if pop is None else [
            {"id": int(i), "a": float(a), "share": float(x), "p_ev": float(p), "in_consensus": bool(c)}
            for i, a, x, p, c in zip(pop.ids, pop.a, pop.share, pop.p_ev,
                                     fleet.active(windows[-1].end_tick - 1) & fleet.eligible & (pop.active_ticks > 0))
        ],
    )
    return records, summary
