"""Vehicle state, per-tick energy dynamics, mode selection and programme eligibility.

Energies are kept on a dyadic grid (multiples of ``ENERGY_QUANTUM`` kWh) so every
sum and difference of them is exact in float64. That is what makes the battery
bookkeeping drift-free and window totals independent of summation order.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from sponge import rng
from sponge.errors import ConfigError

ENERGY_QUANTUM = 2.0**-32  # kWh, about 0.84 mJ
SECONDS_PER_HOUR = 3600.0


def quantize(energy: float) -> float:
    """Round an energy down onto the exact grid."""
    return math.floor(energy / ENERGY_QUANTUM) * ENERGY_QUANTUM


def quantize_up(energy: float) -> float:
    return math.ceil(energy / ENERGY_QUANTUM) * ENERGY_QUANTUM


def tick_energy(power_kw: float, dt: float) -> float:
    """Energy drawn at constant power over one tick of ``dt`` seconds."""
    return quantize(power_kw * dt / SECONDS_PER_HOUR)


class DriveMode(enum.IntEnum):
    IDLE = 0
    EV = 1
    ICE = 2


@dataclass(frozen=True)
class BatterySpec:
    capacity: float  # kWh
    min_soc_fraction: float = 0.10
    ev_power: float = 20.0  # kW

    def __post_init__(self):
        if not self.capacity > 0:
            raise ConfigError("battery capacity must be positive", key="battery_kwh")
        if not self.ev_power > 0:
            raise ConfigError("EV power must be positive", key="ev_power_kw")
        if not 0 <= self.min_soc_fraction < 1:
            raise ConfigError("min_soc_fraction must lie in [0, 1)", key="min_soc_fraction")

    @property
    def floor(self) -> float:
        """Lowest energy the programme may leave in the battery."""
        return quantize_up(self.min_soc_fraction * self.capacity)


@dataclass(frozen=True)
class FuelSpec:
    tank_energy: float  # kWh-equivalent
    ice_power: float = 30.0  # kW-equivalent

    def __post_init__(self):
        if not self.tank_energy >= 0:
            raise ConfigError("fuel tank energy must be non-negative", key="fuel_kwh")
        if not self.ice_power > 0:
            raise ConfigError("ICE power must be positive", key="ice_power_kw")


@dataclass(frozen=True)
class TripPlan:
    start_tick: int
    end_tick: int

    def __post_init__(self):
        if not self.start_tick < self.end_tick:
            raise ConfigError(f"trip must start before it ends, got [{self.start_tick}, {self.end_tick})")

    def active(self, tick: int) -> bool:
        return self.start_tick <= tick < self.end_tick


@dataclass
class VehicleState:
    id: int
    battery: BatterySpec
    soc: float
    fuel: FuelSpec
    fuel_level: float
    seed: int = 0
    initial_soc: float | None = None
    mode: DriveMode = DriveMode.IDLE
    p_ev: float = 0.0
    dissipated_window: float = 0.0
    dissipated_total: float = 0.0
    trip: TripPlan | None = None
    eligible: bool = True

    def __post_init__(self):
        if self.initial_soc is None:
            self.initial_soc = self.soc


@dataclass
class FleetConfig:
    """Fleet generation parameters.

    Scalar physical parameters may be given as a ``(lo, hi)`` pair, in which case
    each vehicle draws its own value uniformly from that range.
    """

    n_vehicles: int
    horizon_ticks: int
    dt: float = 1.0
    n_max: int = 100_000
    seed: int = 0
    battery_kwh: float | tuple[float, float] = 16.0
    min_soc_fraction: float = 0.10
    ev_power_kw: float | tuple[float, float] = 20.0
    ice_power_kw: float = 30.0
    fuel_kwh: float | tuple[float, float] = 400.0
    initial_soc_range: tuple[float, float] = (0.2, 0.9)
    start_window_fraction: float = 0.2
    duration_range_fraction: tuple[float, float] = (0.5, 1.0)

    def validate(self) -> None:
        if not 1 <= self.n_vehicles <= self.n_max:
            raise ConfigError(f"n_vehicles must lie in [1, {self.n_max}], got {self.n_vehicles}", key="n_vehicles")
        if self.horizon_ticks < 1:
            raise ConfigError("horizon must span at least one tick", key="horizon_s")
        if not self.dt > 0:
            raise ConfigError("tick length must be positive", key="tick_s")
        lo, hi = self.initial_soc_range
        if not 0 <= lo <= hi <= 1:
            raise ConfigError(f"initial soc range must satisfy 0 <= lo <= hi <= 1, got [{lo}, {hi}]",
                              key="vehicle.init_soc_range")
        if not 0 <= self.start_window_fraction <= 1:
            raise ConfigError("start_window_fraction must lie in [0, 1]", key="trips.start_window_fraction")
        dlo, dhi = self.duration_range_fraction
        if not 0 < dlo <= dhi <= 1:
            raise ConfigError("duration_range_fraction must satisfy 0 < lo <= hi <= 1",
                              key="trips.duration_range_fraction")
        for key, value, strict in (("vehicle.battery_kwh", self.battery_kwh, True),
                                   ("vehicle.ev_power_kw", self.ev_power_kw, True),
                                   ("vehicle.ice_power_kw", self.ice_power_kw, True),
                                   ("vehicle.fuel_kwh", self.fuel_kwh, False)):
            for x in _as_range(value):
                if (strict and not x > 0) or (not strict and not x >= 0):
                    raise ConfigError(f"must be {'positive' if strict else 'non-negative'}, got {x}", key=key)
            lo_, hi_ = _as_range(value)
            if lo_ > hi_:
                raise ConfigError(f"range must satisfy lo <= hi, got {value}", key=key)
        if not 0 <= self.min_soc_fraction < 1:
            raise ConfigError("must lie in [0, 1)", key="vehicle.min_soc_fraction")


def _as_range(value) -> tuple[float, float]:
    if isinstance(value, (tuple, list)):
        return float(value[0]), float(value[1])
    return float(value), float(value)


def _draw(value, u: float) -> float:
    lo, hi = _as_range(value)
    return lo + (hi - lo) * u


def spawn_fleet(config: FleetConfig) -> list[VehicleState]:
    """Create ``config.n_vehicles`` vehicles, each from its own (seed, id) stream."""
    config.validate()
    seed = config.seed
    horizon = config.horizon_ticks
    vehicles = []
    for vid in range(config.n_vehicles):
        def u(stream, vid=vid):
            return rng.uniform_one(seed, vid, 0, stream)

        capacity = quantize(_draw(config.battery_kwh, u(rng.BATTERY)))
        battery = BatterySpec(capacity, config.min_soc_fraction, _draw(config.ev_power_kw, u(rng.EV_POWER)))
        fuel = FuelSpec(quantize(_draw(config.fuel_kwh, u(rng.FUEL))), config.ice_power_kw)
        soc = quantize(_draw(config.initial_soc_range, u(rng.INIT_SOC)) * capacity)

        latest_start = int(config.start_window_fraction * horizon)
        start = min(int(u(rng.TRIP_START) * latest_start), horizon - 1)
        remaining = horizon - start
        frac = _draw(config.duration_range_fraction, u(rng.TRIP_DURATION))
        duration = min(max(1, round(frac * remaining)), remaining)

        vehicles.append(VehicleState(
            id=vid, battery=battery, soc=soc, fuel=fuel, fuel_level=fuel.tank_energy, seed=seed,
            trip=TripPlan(start, start + duration),
        ))
        vehicles[-1].eligible = check_eligibility(vehicles[-1])
    return vehicles


def check_eligibility(v: VehicleState) -> bool:
    """False once the battery is at its floor or the tank is empty; never re-admits."""
    return bool(v.eligible and v.soc > v.battery.floor and v.fuel_level > 0)


def step_vehicle(v: VehicleState, signal, dt: float, tick: int | None = None) -> VehicleState:
    """Advance one vehicle by one tick under a broadcast signal.

    ``signal`` is a :class:`~sponge.controllers.BroadcastSignal` or ``None`` (no
    broadcast this tick, the vehicle keeps its current ``p_ev``). A congestion
    event also leaves ``p_ev`` alone here; the AIMD layer owns it.
    """
    from sponge.controllers import SignalKind

    if tick is None:
        tick = signal.tick
    v = dataclasses.replace(v)
    if signal is not None:
        if signal.kind is SignalKind.MODE_PROBABILITY:
            v.p_ev = signal.p
        elif signal.kind is SignalKind.FREE:
            v.p_ev = 0.5

    if v.trip is None or not v.trip.active(tick):
        v.mode = DriveMode.IDLE
        return v

    if v.eligible:
        u = rng.uniform_one(v.seed, v.id, tick, rng.MODE)
        v.mode = DriveMode.EV if u < v.p_ev else DriveMode.ICE
    elif v.fuel_level > 0:
        v.mode = DriveMode.ICE
    else:
        v.mode = DriveMode.IDLE  # stranded: out of programme and out of fuel

    if v.mode is DriveMode.EV:
        e = min(tick_energy(v.battery.ev_power, dt), v.soc - v.battery.floor)
        v.soc -= e
        v.dissipated_window += e
        v.dissipated_total += e
    elif v.mode is DriveMode.ICE:
        v.fuel_level -= min(tick_energy(v.fuel.ice_power, dt), v.fuel_level)
    v.eligible = check_eligibility(v)
    return v


def aggregate_dissipation(fleet: Sequence[VehicleState]) -> float:
    total = 0.0
    for v in sorted(fleet, key=lambda v: v.id):
        total += v.dissipated_window
    return total


@dataclass
class Fleet:
    """Struct-of-arrays view of a fleet, stepped with numpy.

    Produces the same trajectories as calling :func:`step_vehicle` on every
    vehicle in id order; the tests hold it to that.
    """

    ids: np.ndarray
    seed: int
    dt: float
    capacity: np.ndarray
    floor: np.ndarray
    ev_power: np.ndarray
    ice_power: np.ndarray
    ev_tick: np.ndarray
    ice_tick: np.ndarray
    soc: np.ndarray
    initial_soc: np.ndarray
    fuel_level: np.ndarray
    start: np.ndarray
    end: np.ndarray
    p_ev: np.ndarray
    mode: np.ndarray
    eligible: np.ndarray
    dissipated_window: np.ndarray
    dissipated_total: np.ndarray
    _specs: list = field(default_factory=list, repr=False)

    @classmethod
    def from_vehicles(cls, vehicles: Sequence[VehicleState], dt: float) -> "Fleet":
        vs = sorted(vehicles, key=lambda v: v.id)
        seeds = {v.seed for v in vs}
        if len(seeds) > 1:
            raise ValueError("all vehicles in a fleet must share one seed")

        def arr(f, dtype=np.float64):
            return np.array([f(v) for v in vs], dtype=dtype)

        return cls(
            ids=arr(lambda v: v.id, np.int64),
            seed=seeds.pop() if seeds else 0,
            dt=dt,
            capacity=arr(lambda v: v.battery.capacity),
            floor=arr(lambda v: v.battery.floor),
            ev_power=arr(lambda v: v.battery.ev_power),
            ice_power=arr(lambda v: v.fuel.ice_power),
            ev_tick=arr(lambda v: tick_energy(v.battery.ev_power, dt)),
            ice_tick=arr(lambda v: tick_energy(v.fuel.ice_power, dt)),
            soc=arr(lambda v: v.soc),
            initial_soc=arr(lambda v: v.initial_soc),
            fuel_level=arr(lambda v: v.fuel_level),
            start=arr(lambda v: v.trip.start_tick if v.trip else 0, np.int64),
            end=arr(lambda v: v.trip.end_tick if v.trip else 0, np.int64),
            p_ev=arr(lambda v: v.p_ev),
            mode=arr(lambda v: int(v.mode), np.int8),
            eligible=arr(lambda v: v.eligible, bool),
            dissipated_window=arr(lambda v: v.dissipated_window),
            dissipated_total=arr(lambda v: v.dissipated_total),
            _specs=[(v.battery, v.fuel, v.trip) for v in vs],
        )

    def __len__(self) -> int:
        return len(self.ids)

    def copy(self) -> "Fleet":
        return dataclasses.replace(
            self, **{f.name: getattr(self, f.name).copy() for f in dataclasses.fields(self)
                     if isinstance(getattr(self, f.name), np.ndarray)})

    def to_vehicles(self) -> list[VehicleState]:
        return [
            VehicleState(
                id=int(self.ids[i]), battery=b, soc=float(self.soc[i]), fuel=f,
                fuel_level=float(self.fuel_level[i]), seed=self.seed, initial_soc=float(self.initial_soc[i]),
                mode=DriveMode(int(self.mode[i])), p_ev=float(self.p_ev[i]),
                dissipated_window=float(self.dissipated_window[i]),
                dissipated_total=float(self.dissipated_total[i]), trip=t, eligible=bool(self.eligible[i]),
            )
            for i, (b, f, t) in enumerate(self._specs)
        ]

    def active(self, tick: int) -> np.ndarray:
        return (self.start <= tick) & (tick < self.end)

    def step(self, tick: int, p_ev: np.ndarray | float | None = None) -> np.ndarray:
        """Advance every vehicle one tick; returns the EV energy drawn per vehicle."""
        if p_ev is not None:
            self.p_ev[:] = p_ev
        active = self.active(tick)
        u = rng.uniform(self.seed, self.ids, tick, rng.MODE)
        ev = active & self.eligible & (u < self.p_ev)
        ice = active & ~ev & (self.eligible | (self.fuel_level > 0))
        self.mode[:] = DriveMode.IDLE
        self.mode[ev] = DriveMode.EV
        self.mode[ice] = DriveMode.ICE

        drawn = np.where(ev, np.minimum(self.ev_tick, self.soc - self.floor), 0.0)
        self.soc -= drawn
        self.dissipated_window += drawn
        self.dissipated_total += drawn
        self.fuel_level -= np.where(ice, np.minimum(self.ice_tick, self.fuel_level), 0.0)
        self.eligible &= (self.soc > self.floor) & (self.fuel_level > 0)
        return drawn

    def aggregate_dissipation(self) -> float:
        return float(self.dissipated_window.sum())

    def reset_window(self) -> None:
        self.dissipated_window[:] = 0.0
