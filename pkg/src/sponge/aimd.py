"""AIMD allocation of EV-mode probability under private utilities.

Each agent raises its EV probability additively every tick and, when the
coordinator broadcasts a congestion event, backs off multiplicatively with a
probability proportional to f'(x)/x of its own utility. The coordinator never
sees the utilities. With quadratic utilities the long-run EV shares equalise
the derivatives f'(x), which is the optimality condition of the allocation
problem solved exactly by :func:`kkt_oracle`.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from sponge import rng
from sponge.errors import DomainError
from sponge.fleet import DriveMode

QUADRATIC = "quadratic"
LINEAR = "linear"


@dataclass(frozen=True)
class UtilityFunction:
    """Private cost of driving a share ``x`` of trip time in EV mode."""

    a: float
    form: str = QUADRATIC

    def __post_init__(self):
        if not self.a > 0:
            raise DomainError(f"utility coefficient must be positive, got {self.a}")
        if self.form not in (QUADRATIC, LINEAR):
            raise ValueError(f"unknown utility form {self.form!r}")

    def __call__(self, x: float) -> float:
        return self.a * x * x if self.form == QUADRATIC else self.a * x

    def derivative(self, x: float) -> float:
        return 2.0 * self.a * x if self.form == QUADRATIC else self.a

    def derivative_over_argument(self, x: float) -> float:
        """f'(x)/x, taking the analytic limit at x = 0."""
        if self.form == QUADRATIC:
            return 2.0 * self.a
        return math.inf if x == 0 else self.a / x


@dataclass
class AimdAgentState:
    id: int
    utility: UtilityFunction
    p_ev: float = 0.0
    alpha: float = 0.01
    beta: float = 0.9
    gamma: float = 0.5
    ev_ticks: int = 0
    active_ticks: int = 0
    active: bool = True
    seed: int = 0

    @property
    def share(self) -> float:
        """EV share of the active ticks so far; 0 before the first one."""
        return self.ev_ticks / self.active_ticks if self.active_ticks else 0.0

    @property
    def backoff_probability(self) -> float:
        return min(1.0, self.gamma * self.utility.derivative_over_argument(self.share))


def additive_increase(agent: AimdAgentState) -> AimdAgentState:
    return replace(agent, p_ev=min(1.0, agent.p_ev + agent.alpha))


def congestion_detect(achieved_rate: float, target_rate: float) -> bool:
    """True when the fleet's (smoothed) EV dissipation rate has reached the target rate."""
    return achieved_rate >= target_rate


def backoff_decision(agent: AimdAgentState, event) -> AimdAgentState:
    """React to a congestion event: back off by ``beta`` with the agent's own probability."""
    u = rng.uniform_one(agent.seed, agent.id, event.tick, rng.BACKOFF)
    if u < agent.backoff_probability:
        return replace(agent, p_ev=agent.beta * agent.p_ev)
    return agent


def update_share(agent: AimdAgentState, mode: DriveMode) -> AimdAgentState:
    return replace(agent, ev_ticks=agent.ev_ticks + (mode is DriveMode.EV), active_ticks=agent.active_ticks + 1)


def coefficient_of_variation(values: Sequence[float]) -> float | None:
    if len(values) < 2:
        return None
    mean = statistics.fmean(values)
    if mean == 0:
        return 0.0 if all(v == 0 for v in values) else None
    return statistics.pstdev(values) / mean


def consensus_spread(agents: Sequence[AimdAgentState]) -> float | None:
    """Coefficient of variation of f'(x) over active agents; ``None`` with fewer than two."""
    return coefficient_of_variation([a.utility.derivative(a.share) for a in agents if a.active])


def water_fill(coefficients: Sequence[float], total_share: float) -> tuple[np.ndarray, float]:
    """Minimise sum(a_i x_i^2) s.t. sum(x_i) = S, 0 <= x_i <= 1.

    Returns the allocation and the common derivative ``lam`` of the agents that
    are not clipped at 1.
    """
    a = np.asarray(coefficients, dtype=np.float64)
    n = len(a)
    if n == 0:
        raise DomainError("need at least one agent")
    if np.any(~(a > 0)):
        raise DomainError("utility coefficients must be positive")
    if not 0 <= total_share <= n:
        raise DomainError(f"total share must lie in [0, {n}], got {total_share}")

    order = np.argsort(a, kind="stable")
    inv = 1.0 / a[order]
    tail = np.cumsum(inv[::-1])[::-1]  # tail[m] = sum of 1/a over sorted[m:]
    x = np.ones(n)
    lam = 2.0 * float(a.max())
    if total_share == n:
        return x, lam
    for m in range(n):
        # agents sorted[:m] sit at the upper bound
        lam_m = 2.0 * (total_share - m) / tail[m]
        if lam_m <= 2.0 * a[order[m]]:
            lam = lam_m
            x[order[m:]] = np.minimum(1.0, lam / (2.0 * a[order[m:]]))
            break
    return x, lam


def kkt_oracle(coefficients: Sequence[float], total_share: float) -> np.ndarray:
    return water_fill(coefficients, total_share)[0]


@dataclass
class AimdPopulation:
    """Vectorised agent states, indexed like :class:`~sponge.fleet.Fleet`."""

    ids: np.ndarray
    seed: int
    a: np.ndarray
    form: str = QUADRATIC
    alpha: float = 0.01
    beta: float = 0.9
    gamma: float = 0.5
    p_ev: np.ndarray = field(default=None)
    ev_ticks: np.ndarray = field(default=None)
    active_ticks: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.ids)
        if self.p_ev is None:
            self.p_ev = np.zeros(n)
        if self.ev_ticks is None:
            self.ev_ticks = np.zeros(n, dtype=np.int64)
        if self.active_ticks is None:
            self.active_ticks = np.zeros(n, dtype=np.int64)

    @classmethod
    def sample(cls, ids: np.ndarray, seed: int, a_range: tuple[float, float], **params) -> "AimdPopulation":
        lo, hi = a_range
        a = lo + (hi - lo) * rng.uniform(seed, ids, 0, rng.UTILITY)
        return cls(ids=np.asarray(ids), seed=seed, a=a, **params)

    @property
    def share(self) -> np.ndarray:
        return np.divide(self.ev_ticks, self.active_ticks, out=np.zeros(len(self.ids)),
                         where=self.active_ticks > 0)

    def derivatives(self) -> np.ndarray:
        if self.form == QUADRATIC:
            return 2.0 * self.a * self.share
        return self.a.copy()

    def backoff_probability(self) -> np.ndarray:
        if self.form == QUADRATIC:
            ratio = 2.0 * self.a
        else:
            x = self.share
            ratio = np.divide(self.a, x, out=np.full(len(x), np.inf), where=x > 0)
        return np.minimum(1.0, self.gamma * ratio)

    def increase(self, mask: np.ndarray) -> None:
        self.p_ev[mask] = np.minimum(1.0, self.p_ev[mask] + self.alpha)

    def backoff(self, mask: np.ndarray, tick: int) -> None:
        u = rng.uniform(self.seed, self.ids, tick, rng.BACKOFF)
        hit = mask & (u < self.backoff_probability())
        self.p_ev[hit] *= self.beta

    def record(self, mask: np.ndarray, ev: np.ndarray) -> None:
        self.active_ticks[mask] += 1
        self.ev_ticks[mask & ev] += 1

    def spread(self, mask: np.ndarray) -> float | None:
        d = self.derivatives()[mask & (self.active_ticks > 0)]
        if len(d) < 2:
            return None
        mean = d.mean()
        if mean == 0:
            return 0.0
        return float(d.std() / mean)

    def agent(self, i: int) -> AimdAgentState:
        return AimdAgentState(
            id=int(self.ids[i]), utility=UtilityFunction(float(self.a[i]), self.form), p_ev=float(self.p_ev[i]),
            alpha=self.alpha, beta=self.beta, gamma=self.gamma, ev_ticks=int(self.ev_ticks[i]),
            active_ticks=int(self.active_ticks[i]), seed=self.seed,
        )
