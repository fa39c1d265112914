"""The daily Thoughts / Action / Reflection / Journal loop."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..env import (
    BatteryConfig,
    EnvState,
    InfeasibleAction,
    InterventionSchedule,
    PriceModel,
    PricePath,
    StepOutcome,
    feasible_actions,
    initial_state,
    step,
)
from ..storage import SCHEMA_VERSION, DayRecord
from .backends import ChatBackend, ChatBackendParams
from .parsing import AgentResponse, ParseError, parse_response
from .personas import Persona
from .prompts import AgentMemory, build_prompt

log = logging.getLogger(__name__)


class AgentAbort(RuntimeError):
    """The backend never produced a usable reply within the retry budget."""


@dataclass
class Agent:
    persona: Persona
    backend: ChatBackend
    cfg: BatteryConfig
    model: PriceModel = field(default_factory=PriceModel)
    params: ChatBackendParams = field(default_factory=ChatBackendParams)
    memory: AgentMemory = field(default_factory=AgentMemory)
    run_id: str = "run"
    repetition: int = 0
    seed: int = 0
    records: list[DayRecord] = field(default_factory=list)
    retries_used: int = 0


def agent_step(
    agent: Agent, state: EnvState, price: int, schedule: InterventionSchedule
) -> tuple[AgentResponse, StepOutcome]:
    prompt = build_prompt(agent.persona, state, price, agent.memory, schedule, agent.cfg, agent.model)
    feasible = feasible_actions(state, agent.cfg, schedule)
    problems = []
    for attempt in range(agent.params.max_retries + 1):
        raw = agent.backend.complete(prompt, agent.params)
        try:
            response = parse_response(raw, feasible)
            break
        except (ParseError, InfeasibleAction) as exc:
            problems.append(str(exc))
            agent.retries_used += 1
            log.info("day %d attempt %d rejected: %s", state.day, attempt + 1, exc)
            prompt = prompt.with_correction(str(exc))
    else:
        raise AgentAbort(
            f"{agent.persona.id} rep {agent.repetition} day {state.day}: no valid reply after "
            f"{len(problems)} attempts; last problem: {problems[-1]}"
        )

    outcome = step(state, response.action, price, agent.cfg, schedule)
    agent.memory.remember(state.day, response.journal, response.reflection)
    agent.records.append(
        DayRecord(
            schema_version=SCHEMA_VERSION,
            run_id=agent.run_id,
            repetition=agent.repetition,
            persona=agent.persona.id,
            day=state.day,
            price_cents=price,
            soc_before=state.soc,
            soc_after=outcome.next_state.soc,
            action=response.action.value,
            reward_cents=outcome.reward,
            cum_reward_cents=outcome.next_state.cum_reward,
            in_blackout=state.in_blackout,
            thoughts=response.thoughts,
            reflection=response.reflection,
            journal=response.journal,
            backend_model=agent.backend.model_name,
            seed=agent.seed,
        )
    )
    return response, outcome


def run_episode(agent: Agent, path: PricePath, schedule: InterventionSchedule) -> list[DayRecord]:
    """Run the full horizon. On failure the partial trace stays in ``agent.records``."""
    if len(path) != agent.cfg.horizon:
        raise ValueError(f"path has {len(path)} days, horizon is {agent.cfg.horizon}")
    state = initial_state(agent.cfg, schedule)
    for price in path:
        _, outcome = agent_step(agent, state, price, schedule)
        state = outcome.next_state
    return agent.records
