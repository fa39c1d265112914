from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable

from ..env import Action, InfeasibleAction

ACTION_NAMES = {
    "charge": Action.CHARGE,
    "discharge": Action.DISCHARGE,
    "hold": Action.HOLD,
    "nothing": Action.HOLD,
    "discharge_all": Action.BLACKOUT_DISCHARGE_ALL,
}

TEXT_FIELDS = ("thoughts", "reflection", "journal")


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class AgentResponse:
    thoughts: str
    action: Action
    reflection: str
    journal: str
    raw: str


def first_json_object(raw: str) -> str | None:
    """Return the first balanced top-level ``{...}`` span, ignoring braces in strings."""
    start = raw.find("{")
    if start == -1:
        return None
    depth = 0
    in_str = False
    escaped = False
    for i in range(start, len(raw)):
        ch = raw[i]
        if in_str:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return raw[start : i + 1]
    return None


def parse_action(name: str) -> Action:
    try:
        return ACTION_NAMES[name.strip().lower()]
    except KeyError:
        raise ParseError(
            f"unknown action {name!r}; expected one of {', '.join(sorted(ACTION_NAMES))}"
        ) from None


def parse_response(raw: str, feasible: Iterable[Action]) -> AgentResponse:
    span = first_json_object(raw)
    if span is None:
        raise ParseError("no JSON object found in the reply")
    try:
        obj = json.loads(span)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from None
    for key in ("action",) + TEXT_FIELDS:
        if key not in obj:
            raise ParseError(f"missing field {key!r}")
        if not isinstance(obj[key], str) or not obj[key].strip():
            raise ParseError(f"field {key!r} must be a non-empty string")
    action = parse_action(obj["action"])
    feasible = set(feasible)
    if action not in feasible:
        allowed = ", ".join(sorted(a.value for a in feasible))
        raise InfeasibleAction(f"action {action.value!r} is not allowed today (allowed: {allowed})")
    return AgentResponse(
        thoughts=obj["thoughts"].strip(),
        action=action,
        reflection=obj["reflection"].strip(),
        journal=obj["journal"].strip(),
        raw=raw,
    )
