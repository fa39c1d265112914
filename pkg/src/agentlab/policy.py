"""Rationality benchmarks: exact DP, the greedy rule, and the complexity metric.

All expectations are exact ``Fraction`` values of cents. The actor observes
today's price before choosing, so values are indexed by (day, soc, price level)
and the expectation is taken over tomorrow's price.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Protocol

from .env import (
    Action,
    BatteryConfig,
    EnvState,
    InterventionSchedule,
    PriceModel,
    PricePath,
    feasible_actions,
    initial_state,
    step,
)

DP_SCHEMA = "agentlab.dp/1"

# Ties resolve to the earliest entry.
TIE_ORDER = (Action.DISCHARGE, Action.HOLD, Action.CHARGE)

EASY_MAX = 0.3
MEDIUM_MAX = 0.8


class DegenerateScenario(ValueError):
    """The DP reward on a path is not positive, so rho is undefined."""


class Policy(Protocol):
    def act(self, day: int, soc: int, price: int, in_blackout: bool = False) -> Action: ...


@dataclass(frozen=True)
class HoldPolicy:
    name: str = "hold"

    def act(self, day: int, soc: int, price: int, in_blackout: bool = False) -> Action:
        return Action.HOLD


@dataclass(frozen=True)
class GreedyPolicy:
    cfg: BatteryConfig
    model: PriceModel
    name: str = "greedy"

    def act(self, day: int, soc: int, price: int, in_blackout: bool = False) -> Action:
        if in_blackout:
            return Action.HOLD
        return greedy_action(price, soc, self.cfg, self.model)


def greedy_action(
    price: int, soc: int, cfg: BatteryConfig, model: PriceModel | None = None
) -> Action:
    """Charge on low-price days, discharge on high-price days, within bounds."""
    model = model or PriceModel()
    if price == model.low_cents and soc + cfg.unit <= cfg.capacity:
        return Action.CHARGE
    if price == model.high_cents and soc - cfg.unit >= cfg.floor:
        return Action.DISCHARGE
    return Action.HOLD


@dataclass(frozen=True)
class ValueTable:
    """Optimal reward-to-go ``values[t-1][soc_index][price_level]`` for t in 1..T+1."""

    cfg: BatteryConfig
    model: PriceModel
    values: tuple[tuple[tuple[Fraction, Fraction], ...], ...]

    def value(self, day: int, soc: int, level: int) -> Fraction:
        return self.values[day - 1][self.cfg.soc_index(soc)][level]

    def expected(self, day: int, soc: int) -> Fraction:
        """Value before today's price is revealed."""
        (_, p_lo), (_, p_hi) = self.model.distribution()
        return p_lo * self.value(day, soc, 0) + p_hi * self.value(day, soc, 1)


@dataclass(frozen=True)
class DpPolicy:
    cfg: BatteryConfig
    model: PriceModel
    actions: tuple[tuple[tuple[Action, Action], ...], ...]
    name: str = field(default="dp")

    def action(self, day: int, soc: int, level: int) -> Action:
        return self.actions[day - 1][self.cfg.soc_index(soc)][level]

    def act(self, day: int, soc: int, price: int, in_blackout: bool = False) -> Action:
        if in_blackout:
            return Action.HOLD
        return self.action(day, soc, self.model.level_index(price))


def _bellman_options(cfg: BatteryConfig, soc: int, price: int, cont: dict[int, Fraction]):
    state = EnvState(day=1, soc=soc)
    allowed = feasible_actions(state, cfg)
    for action in TIE_ORDER:
        if action in allowed:
            u = action.energy(soc, cfg)
            yield action, price * u + cont[soc - u]


def solve_dp(cfg: BatteryConfig, model: PriceModel) -> tuple[ValueTable, DpPolicy]:
    """Backward induction over every (day, soc, price level)."""
    levels = model.distribution()
    socs = list(cfg.soc_levels)
    zero = tuple((Fraction(0), Fraction(0)) for _ in socs)
    values: list = [None] * (cfg.horizon + 1)
    actions: list = [None] * cfg.horizon
    values[cfg.horizon] = zero
    for t in range(cfg.horizon, 0, -1):
        nxt = values[t]
        cont = {s: sum(p * nxt[i][k] for k, (_, p) in enumerate(levels)) for i, s in enumerate(socs)}
        v_rows, a_rows = [], []
        for s in socs:
            v_row, a_row = [], []
            for price, _ in levels:
                best_a, best_v = None, None
                for a, v in _bellman_options(cfg, s, price, cont):
                    if best_v is None or v > best_v:
                        best_a, best_v = a, v
                v_row.append(best_v)
                a_row.append(best_a)
            v_rows.append(tuple(v_row))
            a_rows.append(tuple(a_row))
        values[t - 1] = tuple(v_rows)
        actions[t - 1] = tuple(a_rows)
    return ValueTable(cfg, model, tuple(values)), DpPolicy(cfg, model, tuple(actions))


def exact_expected_reward(
    policy: Policy, cfg: BatteryConfig, model: PriceModel, initial_soc: int | None = None
) -> Fraction:
    """E[sum of price * energy] by pushing the exact soc distribution forward."""
    dist = {cfg.initial_soc if initial_soc is None else initial_soc: Fraction(1)}
    total = Fraction(0)
    for day in range(1, cfg.horizon + 1):
        nxt: dict[int, Fraction] = {}
        for soc, p_soc in dist.items():
            for price, p_price in model.distribution():
                if p_price == 0:
                    continue
                action = policy.act(day, soc, price)
                out = step(EnvState(day=day, soc=soc), action, price, cfg)
                w = p_soc * p_price
                total += w * out.reward
                nxt[out.next_state.soc] = nxt.get(out.next_state.soc, 0) + w
        dist = nxt
    return total


def evaluate_on_path(
    policy: Policy,
    path: PricePath,
    cfg: BatteryConfig,
    schedule: InterventionSchedule | None = None,
) -> tuple[list[EnvState], int]:
    """Roll ``policy`` out on a fixed price path; returns states for days 1..T+1."""
    if len(path) != cfg.horizon:
        raise ValueError(f"path has {len(path)} days, horizon is {cfg.horizon}")
    schedule = schedule or InterventionSchedule()
    state = initial_state(cfg, schedule)
    trajectory = [state]
    for price in path:
        action = policy.act(state.day, state.soc, price, state.in_blackout)
        state = step(state, action, price, cfg, schedule).next_state
        trajectory.append(state)
    return trajectory, state.cum_reward


def classify(rho: float) -> str:
    if rho < EASY_MAX:
        return "Easy"
    if rho < MEDIUM_MAX:
        return "Medium"
    return "Hard"


@dataclass(frozen=True)
class ComplexityReport:
    rho: float | None
    r_dp: Fraction
    r_greedy: Fraction
    label: str | None
    path: PricePath | None = None
    seed: int | None = None
    flags: tuple[str, ...] = ()

    @property
    def degenerate(self) -> bool:
        return "degenerate" in self.flags


def _report(r_dp, r_g, path=None, seed=None) -> ComplexityReport:
    if r_dp <= 0:
        raise DegenerateScenario(f"DP reward {r_dp} is not positive; rho is undefined")
    rho = float(Fraction(r_dp - r_g) / Fraction(r_dp))
    flags = ("negative_greedy",) if r_g < 0 else ()
    return ComplexityReport(rho, r_dp, r_g, classify(rho), path, seed, flags)


def complexity_rho(
    path: PricePath,
    cfg: BatteryConfig,
    model: PriceModel,
    dp_policy: DpPolicy | None = None,
    seed: int | None = None,
) -> ComplexityReport:
    """rho = (r_dp - r_greedy) / r_dp from realized rollouts on ``path``."""
    if dp_policy is None:
        dp_policy = solve_dp(cfg, model)[1]
    _, r_dp = evaluate_on_path(dp_policy, path, cfg)
    _, r_g = evaluate_on_path(GreedyPolicy(cfg, model), path, cfg)
    return _report(r_dp, r_g, path, seed)


def expected_complexity(
    cfg: BatteryConfig, model: PriceModel, dp_policy: DpPolicy | None = None
) -> ComplexityReport:
    """rho on the stochastic model, using exact expectations of both policies."""
    if dp_policy is None:
        dp_policy = solve_dp(cfg, model)[1]
    r_dp = exact_expected_reward(dp_policy, cfg, model)
    r_g = exact_expected_reward(GreedyPolicy(cfg, model), cfg, model)
    return _report(r_dp, r_g)


def dp_to_json(table: ValueTable, policy: DpPolicy) -> str:
    cfg, model = table.cfg, table.model
    flat_v, flat_a = [], []
    for t in range(cfg.horizon + 1):
        for i in range(len(cfg.soc_levels)):
            for k in range(2):
                v = table.values[t][i][k]
                flat_v.append(f"{v.numerator}/{v.denominator}")
                if t < cfg.horizon:
                    flat_a.append(policy.actions[t][i][k].value)
    doc = {
        "schema": DP_SCHEMA,
        "battery": {
            "capacity": cfg.capacity,
            "floor": cfg.floor,
            "initial_soc": cfg.initial_soc,
            "unit": cfg.unit,
            "horizon": cfg.horizon,
        },
        "prices": {
            "low_cents": model.low_cents,
            "high_cents": model.high_cents,
            "prob_high": str(model.prob_high),
        },
        "index": {
            "order": ["day", "soc", "price_level"],
            "days": [1, cfg.horizon + 1],
            "soc": list(cfg.soc_levels),
            "price_levels": ["low", "high"],
        },
        "values_cents": flat_v,
        "actions": flat_a,
    }
    return json.dumps(doc, indent=1)


def dp_from_json(text: str) -> tuple[ValueTable, DpPolicy]:
    doc = json.loads(text)
    if doc.get("schema") != DP_SCHEMA:
        raise ValueError(f"unsupported DP document schema {doc.get('schema')!r}")
    cfg = BatteryConfig(**doc["battery"])
    p = doc["prices"]
    model = PriceModel(p["low_cents"], p["high_cents"], float(p["prob_high"]))
    n_s = len(cfg.soc_levels)
    vals = [Fraction(v) for v in doc["values_cents"]]
    acts = [Action(a) for a in doc["actions"]]

    def nest(flat, days):
        return tuple(
            tuple(tuple(flat[(t * n_s + i) * 2 + k] for k in range(2)) for i in range(n_s))
            for t in range(days)
        )

    return (
        ValueTable(cfg, model, nest(vals, cfg.horizon + 1)),
        DpPolicy(cfg, model, nest(acts, cfg.horizon)),
    )
