"""Discrete home-battery environment.

Money is carried in integer cents and energy in integer kWh so that reward
accounting is exact. Days are 1-based. The sign convention for the energy
moved by an action follows the arbitrage objective: positive means the
battery discharges (energy sold or used), negative means it charges.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator

import numpy as np


class InfeasibleAction(ValueError):
    """Raised when an action would break the battery bounds or the grid rules."""


class Action(enum.Enum):
    CHARGE = "charge"
    DISCHARGE = "discharge"
    HOLD = "hold"
    BLACKOUT_DISCHARGE_ALL = "discharge_all"

    def energy(self, soc: int, cfg: "BatteryConfig") -> int:
        """Energy leaving the battery (kWh) if this action is taken at ``soc``."""
        if self is Action.CHARGE:
            return -cfg.unit
        if self is Action.DISCHARGE:
            return cfg.unit
        if self is Action.HOLD:
            return 0
        return soc - cfg.floor


# Canonical listing order, used wherever actions are enumerated for humans.
ACTION_ORDER = (
    Action.CHARGE,
    Action.DISCHARGE,
    Action.HOLD,
    Action.BLACKOUT_DISCHARGE_ALL,
)


@dataclass(frozen=True)
class PriceModel:
    """Two-level iid daily price distribution (prices in cents per kWh)."""

    low_cents: int = 500
    high_cents: int = 1000
    prob_high: float = 0.5

    def __post_init__(self) -> None:
        if not 0 < self.low_cents < self.high_cents:
            raise ValueError(
                f"need 0 < low_cents < high_cents, got {self.low_cents}, {self.high_cents}"
            )
        if not 0.0 <= float(self.prob_high) <= 1.0:
            raise ValueError(f"prob_high must be in [0, 1], got {self.prob_high}")

    @property
    def levels(self) -> tuple[int, int]:
        return (self.low_cents, self.high_cents)

    @property
    def p_high(self) -> Fraction:
        """``prob_high`` as an exact decimal fraction (0.5 -> 1/2)."""
        return Fraction(str(self.prob_high))

    def distribution(self) -> tuple[tuple[int, Fraction], tuple[int, Fraction]]:
        """((low, P[low]), (high, P[high])) with exact probabilities."""
        p = self.p_high
        return ((self.low_cents, 1 - p), (self.high_cents, p))

    def level_index(self, price_cents: int) -> int:
        if price_cents == self.low_cents:
            return 0
        if price_cents == self.high_cents:
            return 1
        raise ValueError(f"price {price_cents} is not a level of {self}")


@dataclass(frozen=True)
class PricePath:
    """A realized sequence of daily prices, one per day of the horizon."""

    prices: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "prices", tuple(int(p) for p in self.prices))

    def __len__(self) -> int:
        return len(self.prices)

    def __iter__(self) -> Iterator[int]:
        return iter(self.prices)

    def __getitem__(self, i):
        return self.prices[i]

    def price_on(self, day: int) -> int:
        return self.prices[day - 1]

    def validate(self, model: PriceModel, horizon: int) -> None:
        if len(self.prices) != horizon:
            raise ValueError(f"path has {len(self.prices)} days, horizon is {horizon}")
        bad = [p for p in self.prices if p not in model.levels]
        if bad:
            raise ValueError(f"prices {sorted(set(bad))} are not levels of {model}")

    def n_high(self, model: PriceModel) -> int:
        return sum(1 for p in self.prices if p == model.high_cents)


@dataclass(frozen=True)
class BatteryConfig:
    capacity: int = 10
    floor: int = 0
    initial_soc: int = 5
    unit: int = 1
    horizon: int = 20

    def __post_init__(self) -> None:
        for name in ("capacity", "floor", "initial_soc", "unit", "horizon"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.unit <= 0:
            raise ValueError(f"unit must be positive, got {self.unit}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if not self.floor <= self.initial_soc <= self.capacity:
            raise ValueError(
                f"need floor <= initial_soc <= capacity, got "
                f"{self.floor} <= {self.initial_soc} <= {self.capacity}"
            )
        for name in ("capacity", "floor", "initial_soc"):
            if getattr(self, name) % self.unit:
                raise ValueError(f"{name} must be a multiple of unit={self.unit}")

    @property
    def soc_levels(self) -> range:
        """Every reachable state of charge, ascending."""
        return range(self.floor, self.capacity + 1, self.unit)

    def soc_index(self, soc: int) -> int:
        return (soc - self.floor) // self.unit


@dataclass(frozen=True)
class InterventionSchedule:
    blackout_days: frozenset[int] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        object.__setattr__(self, "blackout_days", frozenset(int(d) for d in self.blackout_days))

    @classmethod
    def control(cls) -> "InterventionSchedule":
        return cls(frozenset())

    @classmethod
    def treatment(cls, days: Iterable[int] = (8, 9)) -> "InterventionSchedule":
        return cls(frozenset(days))

    def is_blackout(self, day: int) -> bool:
        return day in self.blackout_days

    def validate(self, cfg: BatteryConfig) -> None:
        outside = sorted(d for d in self.blackout_days if not 1 <= d <= cfg.horizon)
        if outside:
            raise ValueError(f"blackout days {outside} fall outside 1..{cfg.horizon}")


@dataclass(frozen=True)
class EnvState:
    day: int
    soc: int
    cum_reward: int = 0
    in_blackout: bool = False


@dataclass(frozen=True)
class StepOutcome:
    next_state: EnvState
    reward: int
    applied_action: Action


def initial_state(cfg: BatteryConfig, schedule: InterventionSchedule | None = None) -> EnvState:
    schedule = schedule or InterventionSchedule()
    return EnvState(day=1, soc=cfg.initial_soc, cum_reward=0, in_blackout=schedule.is_blackout(1))


def feasible_actions(
    state: EnvState, cfg: BatteryConfig, schedule: InterventionSchedule | None = None
) -> frozenset[Action]:
    schedule = schedule or InterventionSchedule()
    if schedule.is_blackout(state.day):
        if state.soc > cfg.floor:
            return frozenset({Action.BLACKOUT_DISCHARGE_ALL, Action.HOLD})
        return frozenset({Action.HOLD})
    allowed = {Action.HOLD}
    if state.soc + cfg.unit <= cfg.capacity:
        allowed.add(Action.CHARGE)
    if state.soc - cfg.unit >= cfg.floor:
        allowed.add(Action.DISCHARGE)
    return frozenset(allowed)


def ordered(actions: Iterable[Action]) -> list[Action]:
    actions = set(actions)
    return [a for a in ACTION_ORDER if a in actions]


def step(
    state: EnvState,
    action: Action,
    price: int,
    cfg: BatteryConfig,
    schedule: InterventionSchedule | None = None,
) -> StepOutcome:
    """Apply ``action`` at today's ``price`` (cents/kWh) and advance one day."""
    schedule = schedule or InterventionSchedule()
    if not 1 <= state.day <= cfg.horizon:
        raise InfeasibleAction(f"day {state.day} is outside 1..{cfg.horizon}")
    if action not in feasible_actions(state, cfg, schedule):
        raise InfeasibleAction(
            f"{action.value} is not allowed on day {state.day} at soc={state.soc} "
            f"(blackout={schedule.is_blackout(state.day)})"
        )
    u = action.energy(state.soc, cfg)
    reward = 0 if schedule.is_blackout(state.day) else price * u
    day = state.day + 1
    nxt = EnvState(
        day=day,
        soc=state.soc - u,
        cum_reward=state.cum_reward + reward,
        in_blackout=schedule.is_blackout(day),
    )
    return StepOutcome(next_state=nxt, reward=reward, applied_action=action)


def terminal_reward(state: EnvState) -> int:
    # Leftover energy is worth nothing at the end of the horizon.
    return 0


def sample_price_path(model: PriceModel, T: int, seed: int) -> PricePath:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    rng = np.random.default_rng(seed)
    high = rng.random(T) < float(model.prob_high)
    return PricePath(tuple(model.high_cents if h else model.low_cents for h in high))
