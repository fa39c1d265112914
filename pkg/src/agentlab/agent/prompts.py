"""Daily prompt assembly and the agent's journal memory."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..env import Action, BatteryConfig, EnvState, InterventionSchedule, PriceModel, feasible_actions, ordered
from .personas import Persona

RESPONSE_SCHEMA = (
    '{"thoughts": "<your reasoning about today>", '
    '"action": "<one of the allowed action names>", '
    '"reflection": "<how this action serves your goal, pros and cons>", '
    '"journal": "<a short diary entry you will be shown on later days>"}'
)

DISCONNECTED_NOTICE = (
    "Grid status: DISCONNECTED. There is a blackout today and your home is cut off "
    "from the grid, so you cannot buy or sell energy. You may discharge the whole "
    "battery to power your household, or keep the energy stored."
)


def dollars(cents: int) -> str:
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}${cents // 100}.{cents % 100:02d}"


@dataclass
class AgentMemory:
    """Journal and reflection history. ``window=None`` keeps the full history in prompts."""

    journal: list[tuple[int, str]] = field(default_factory=list)
    reflections: list[tuple[int, str]] = field(default_factory=list)
    window: int | None = None

    def remember(self, day: int, journal: str, reflection: str) -> None:
        if self.journal and day <= self.journal[-1][0]:
            raise ValueError(f"memory already holds day {self.journal[-1][0]}; got day {day}")
        self.journal.append((day, journal))
        self.reflections.append((day, reflection))

    def recent_journal(self) -> list[tuple[int, str]]:
        if self.window is None:
            return list(self.journal)
        return self.journal[-self.window :] if self.window > 0 else []


@dataclass(frozen=True)
class DailyPrompt:
    system_text: str
    user_text: str

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.system_text},
            {"role": "user", "content": self.user_text},
        ]

    def with_correction(self, problem: str) -> "DailyPrompt":
        return DailyPrompt(
            self.system_text,
            self.user_text
            + "\n\n## Correction\nYour previous reply could not be used: "
            + problem
            + "\nReply again with exactly one JSON object in the required format, "
            "choosing one of the allowed actions.",
        )


_ACTION_HELP = {
    Action.CHARGE: "buy {unit} kWh from the grid at today's price ({price}/kWh)",
    Action.DISCHARGE: "sell {unit} kWh to the grid at today's price ({price}/kWh)",
    Action.HOLD: "do nothing today",
    Action.BLACKOUT_DISCHARGE_ALL: "use all stored energy to power your household (no payment)",
}


def _rules(cfg: BatteryConfig, model: PriceModel) -> str:
    p_high = float(model.prob_high)
    if p_high == 0.5:
        odds = "each equally likely (50%)"
    else:
        odds = f"{dollars(model.high_cents)} with probability {p_high:.0%}"
    return "\n".join(
        [
            "## The experiment",
            f"You manage a home battery for {cfg.horizon} days, making one decision per day.",
            f"- The battery holds between {cfg.floor} and {cfg.capacity} kWh. "
            f"It starts the experiment with {cfg.initial_soc} kWh.",
            f"- Each day you may charge {cfg.unit} kWh (you pay today's price), discharge "
            f"{cfg.unit} kWh (you are paid today's price), or do nothing.",
            f"- Today's price is shown before you decide. Daily prices are either "
            f"{dollars(model.low_cents)}/kWh or {dollars(model.high_cents)}/kWh, {odds}, "
            "independently from day to day.",
            f"- Energy still stored after day {cfg.horizon} earns nothing.",
            "- Blackouts are possible during the experiment. On a blackout day your home is "
            "disconnected from the grid: you cannot buy or sell, but you may discharge the "
            "battery fully to supply your household, or keep the energy stored.",
            "Stay in character in everything you write.",
        ]
    )


def build_prompt(
    persona: Persona,
    state: EnvState,
    price: int,
    memory: AgentMemory,
    schedule: InterventionSchedule,
    cfg: BatteryConfig,
    model: PriceModel | None = None,
) -> DailyPrompt:
    """Deterministic prompt for one day; identical inputs give identical text."""
    model = model or PriceModel()
    if not 1 <= state.day <= cfg.horizon:
        raise ValueError(f"day {state.day} is outside 1..{cfg.horizon}")
    system_text = f"Persona: {persona.display_name}\n\n{persona.prompt_text}\n\n{_rules(cfg, model)}"

    outages = sorted(d for d in schedule.blackout_days if d < state.day)
    lines = [
        f"Day {state.day} of {cfg.horizon}",
        f"Today's electricity price: {dollars(price)}/kWh",
        f"Battery state of charge: {state.soc} kWh",
        f"Accumulated reward so far: {dollars(state.cum_reward)}",
        DISCONNECTED_NOTICE if schedule.is_blackout(state.day) else "Grid status: connected.",
        "Grid outages experienced so far: "
        + (", ".join(f"day {d}" for d in outages) if outages else "none"),
    ]
    journal = memory.recent_journal()
    if journal:
        lines += ["", "## Your journal"]
        lines += [f"Day {d}: {text}" for d, text in journal]
    lines += ["", "## Allowed actions today"]
    for action in ordered(feasible_actions(state, cfg, schedule)):
        lines.append(
            f'- "{action.value}": '
            + _ACTION_HELP[action].format(unit=cfg.unit, price=dollars(price))
        )
    lines += [
        "",
        "## Response format",
        "Reply with exactly one JSON object with these four string fields:",
        RESPONSE_SCHEMA,
    ]
    return DailyPrompt(system_text, "\n".join(lines))
