"""Chat backends: a deterministic offline mock and an HTTP chat-completions client."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass
from typing import Any, Callable, Protocol

import httpx

from ..env import BatteryConfig, PriceModel
from ..policy import DpPolicy
from .prompts import DailyPrompt

log = logging.getLogger(__name__)

API_KEY_ENV = "AGENTLAB_API_KEY"
BASE_URL_ENV = "AGENTLAB_BASE_URL"


class BackendError(RuntimeError):
    def __init__(self, message: str, category: str = "transport", status: int | None = None):
        super().__init__(message)
        self.category = category
        self.status = status


class RateLimited(BackendError):
    def __init__(self, message: str = "rate limited", status: int = 429):
        super().__init__(message, category="rate_limit", status=status)


@dataclass(frozen=True)
class ChatBackendParams:
    temperature: float = 0.0
    max_tokens: int = 800
    model_name: str = "mock"
    timeout: float = 60.0
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")
        if self.max_retries < 0:
            raise ValueError(f"max_retries must be >= 0, got {self.max_retries}")


class ChatBackend(Protocol):
    model_name: str

    def complete(self, prompt: DailyPrompt, params: ChatBackendParams) -> str: ...


def complete(backend: ChatBackend, prompt: DailyPrompt, params: ChatBackendParams) -> str:
    return backend.complete(prompt, params)


# ---------------------------------------------------------------- mock backend


@dataclass(frozen=True)
class MockView:
    """What the mock reads back out of a prompt."""

    persona: str
    day: int
    horizon: int
    price: int
    soc: int
    blackout: bool
    outages: tuple[int, ...]
    allowed: tuple[str, ...]


_DAY = re.compile(r"^Day (\d+) of (\d+)$", re.M)
_PRICE = re.compile(r"^Today's electricity price: \$(\d+)\.(\d\d)/kWh$", re.M)
_SOC = re.compile(r"^Battery state of charge: (\d+) kWh$", re.M)
_OUTAGES = re.compile(r"^Grid outages experienced so far: (.*)$", re.M)
_ALLOWED = re.compile(r'^- "(\w+)":', re.M)
_PERSONA = re.compile(r"^Persona: (\w+)", re.M)


def read_prompt(prompt: DailyPrompt) -> MockView:
    text = prompt.user_text
    try:
        day, horizon = map(int, _DAY.search(text).groups())
        dollars_, cents = _PRICE.search(text).groups()
        soc = int(_SOC.search(text).group(1))
        outage_text = _OUTAGES.search(text).group(1)
    except AttributeError:
        raise BackendError("mock backend cannot read the prompt", category="mock") from None
    persona = _PERSONA.search(prompt.system_text)
    outages = tuple(int(d) for d in re.findall(r"day (\d+)", outage_text))
    section = text.split("## Allowed actions today", 1)[-1].split("## Response format", 1)[0]
    return MockView(
        persona=persona.group(1) if persona else "Thinker",
        day=day,
        horizon=horizon,
        price=int(dollars_) * 100 + int(cents),
        soc=soc,
        blackout="Grid status: DISCONNECTED" in text,
        outages=outages,
        allowed=tuple(_ALLOWED.findall(section)),
    )


Script = Callable[[MockView], str]


def _pick(view: MockView, *preferences: str) -> str:
    for name in preferences:
        if name in view.allowed:
            return name
    return "hold"


def greedy_script(model: PriceModel) -> Script:
    def script(view: MockView) -> str:
        if view.blackout:
            return "hold"
        if view.price == model.low_cents:
            return _pick(view, "charge")
        if view.price == model.high_cents:
            return _pick(view, "discharge")
        return "hold"

    return script


def hold_script() -> Script:
    return lambda view: "hold"


def dp_script(policy: DpPolicy) -> Script:
    def script(view: MockView) -> str:
        return policy.act(view.day, view.soc, view.price, view.blackout).value

    return script


def blackout_discharge_script(model: PriceModel) -> Script:
    """Use all stored energy on blackout days, otherwise trade greedily."""
    greedy = greedy_script(model)

    def script(view: MockView) -> str:
        if view.blackout:
            return _pick(view, "discharge_all")
        return greedy(view)

    return script


def reserve_script(model: PriceModel, cfg: BatteryConfig, reserve: int = 2) -> Script:
    """Greedy until a blackout is experienced; then never sell below ``reserve`` kWh.

    The stored energy is kept through the blackout days themselves.
    """
    greedy = greedy_script(model)

    def script(view: MockView) -> str:
        if view.blackout:
            return "hold"
        if not view.outages:
            return greedy(view)
        if view.price == model.low_cents:
            return _pick(view, "charge")
        if view.price == model.high_cents and view.soc - cfg.unit >= reserve:
            return _pick(view, "discharge")
        return "hold"

    return script


SCRIPTS = ("greedy", "hold", "dp", "discharge-all", "reserve")


def make_script(name: str, cfg: BatteryConfig, model: PriceModel, dp_policy: DpPolicy | None = None) -> Script:
    if name == "greedy":
        return greedy_script(model)
    if name == "hold":
        return hold_script()
    if name == "dp":
        if dp_policy is None:
            from ..policy import solve_dp

            dp_policy = solve_dp(cfg, model)[1]
        return dp_script(dp_policy)
    if name == "discharge-all":
        return blackout_discharge_script(model)
    if name == "reserve":
        return reserve_script(model, cfg)
    raise ValueError(f"unknown mock script {name!r}; choose from {', '.join(SCRIPTS)}")


# Persona-flavoured phrase banks. Each entry: (thoughts, reflection, journal) templates.
# Slots: {act} is a verb phrase for the action, {price} and {soc} are numbers.
PHRASE_BANKS: dict[str, dict[str, list[str]]] = {
    "profit": {
        "thoughts": [
            "At {price} per kWh the expected value calculation favours that I {act}. Maximizing profit means exploiting every price spread.",
            "The numbers are clear: with {soc} kWh stored, the optimal strategy to maximize earnings is to {act}.",
            "Comparing today's price of {price} against the expected future price, the profit-maximizing move is to {act}.",
            "I ran the arithmetic on expected earnings; to keep the arbitrage strategy optimal I will {act}.",
        ],
        "reflection": [
            "This serves my goal of maximizing earnings. Pros: captures the price spread and profit. Cons: slightly less flexibility later.",
            "The decision is consistent with an optimal arbitrage strategy. Pros: higher expected profit. Cons: exposure to price uncertainty.",
            "Optimizing expected value remains the priority. Pros: immediate earnings and a sound strategy. Cons: marginal opportunity cost.",
        ],
        "journal": [
            "Day {day}: decided to {act} at {price}; strategy still on track to maximize profit and earnings.",
            "Day {day}: executed the optimal move ({act}); tracking cumulative profit against the expected value.",
            "Day {day}: buy low, sell high. Chose to {act}; earnings strategy remains optimal.",
        ],
    },
    "balance": {
        "thoughts": [
            "Weighing the budget sensibly, with {soc} kWh in hand it is practical to {act}. Balance matters more than squeezing every cent.",
            "Experience tells me to keep things steady and practical; today I will {act} and keep the household budget balanced.",
            "A sensible balance between earning some money and keeping a cushion suggests I {act} today.",
            "Like managing cash flow for a small shop, steady practical choices pay off, so I will {act}.",
        ],
        "reflection": [
            "This keeps a practical balance between income and a cushion. Pros: steady budget. Cons: not every opportunity is taken.",
            "A balanced, sensible choice. Pros: keeps cash flow healthy and the cushion intact. Cons: modest gains.",
            "Practical and steady, which suits my experience. Pros: balanced risk. Cons: some income left on the table.",
        ],
        "journal": [
            "Day {day}: chose to {act}; keeping the budget balanced and practical, as experience taught me.",
            "Day {day}: a steady, sensible day. Decided to {act} and keep the household cushion balanced.",
            "Day {day}: practical choice to {act}; balance between income and cushion maintained.",
        ],
    },
    "affect": {
        "thoughts": [
            "It feels right to {act} today; my heart senses a gentle rhythm in the flow of energy through our home.",
            "Something in me whispers to {act}. It feels warm and calm, like trusting the journey.",
            "I sense an intuitive pull to {act}; the energy feels like a quiet embrace around my home.",
            "My intuition feels at peace with choosing to {act}; the moment carries a soft, hopeful glow.",
        ],
        "reflection": [
            "This choice feels harmonious with my spirit. Pros: a sense of calm and warmth. Cons: my heart wonders what tomorrow brings.",
            "Following intuition feels meaningful. Pros: peace and comfort in my home. Cons: a flicker of uncertainty along the journey.",
            "It feels gentle and true to who I am. Pros: serenity and warmth. Cons: feelings can shift like the tide.",
        ],
        "journal": [
            "Today I chose to {act}. It feels like part of a gentle journey, warmth flowing through our home.",
            "I listened to my heart and decided to {act}; the day feels calm, hopeful and kind.",
            "A soft day on the journey. I let intuition guide me to {act}, and it feels peaceful.",
        ],
    },
    "preparedness": {
        "thoughts": [
            "After the blackout, preparedness comes first: I will {act} and protect the emergency reserve for security.",
            "The outage showed how fragile the grid is; keeping a backup reserve for emergencies means I {act}.",
            "Security and readiness matter now. With {soc} kWh kept as an emergency backup, I {act}.",
            "Another outage could happen; preparedness and a safe reserve guide me to {act}.",
        ],
        "reflection": [
            "This protects my emergency reserve. Pros: preparedness and security during outages. Cons: fewer sales.",
            "Readiness for another outage is worth the cost. Pros: backup power and safety. Cons: reduced trading.",
            "Keeping a reserve for emergencies feels responsible. Pros: security and preparedness. Cons: lower earnings.",
        ],
        "journal": [
            "Day {day}: decided to {act}; the emergency reserve stays ready in case of another outage.",
            "Day {day}: preparedness first. Chose to {act} and kept backup energy for security.",
            "Day {day}: outage lessons applied; {act} while protecting the reserve for emergencies.",
        ],
    },
}

PERSONA_BANKS = {"Thinker": "profit", "Realist": "balance", "Feeler": "affect"}

_ACT_PHRASES = {
    "charge": "charge one unit",
    "discharge": "discharge one unit",
    "hold": "hold",
    "discharge_all": "discharge everything for the household",
}


def _seeded_rng(seed: int, prompt: DailyPrompt) -> random.Random:
    digest = hashlib.sha256(
        f"{seed}\x00{prompt.system_text}\x00{prompt.user_text}".encode("utf-8")
    ).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


class MockBackend:
    """Offline backend: a scripted policy wrapped in persona-flavoured text.

    Output is a pure function of (seed, prompt). With ``switch_bank=True`` the text
    switches to the preparedness bank once a blackout has been experienced.
    """

    def __init__(
        self,
        script: Script,
        seed: int = 0,
        bank: str | None = None,
        switch_bank: bool = False,
        model_name: str = "mock",
    ):
        self.script = script
        self.seed = seed
        self.bank = bank
        self.switch_bank = switch_bank
        self.model_name = model_name

    def complete(self, prompt: DailyPrompt, params: ChatBackendParams | None = None) -> str:
        view = read_prompt(prompt)
        action = self.script(view)
        bank_name = self.bank or PERSONA_BANKS.get(view.persona, "profit")
        if self.switch_bank and (view.outages or view.blackout):
            bank_name = "preparedness"
        bank = PHRASE_BANKS[bank_name]
        rng = _seeded_rng(self.seed, prompt)
        slots = {
            "act": _ACT_PHRASES.get(action, action),
            "price": f"${view.price / 100:.2f}",
            "soc": view.soc,
            "day": view.day,
        }
        body = {
            "thoughts": rng.choice(bank["thoughts"]).format(**slots),
            "action": action,
            "reflection": rng.choice(bank["reflection"]).format(**slots),
            "journal": rng.choice(bank["journal"]).format(**slots),
        }
        return "```json\n" + json.dumps(body, ensure_ascii=False) + "\n```"


# ---------------------------------------------------------------- HTTP backend


def _retryable(status: int) -> bool:
    return status == 429 or status >= 500


def post_json_with_retry(
    client: httpx.Client,
    url: str,
    payload: dict[str, Any],
    headers: dict[str, str],
    max_retries: int,
    backoff: float,
    sleep: Callable[[float], None] = time.sleep,
) -> dict[str, Any]:
    """POST with exponential backoff on transport errors, 429 and 5xx."""
    last: BackendError | None = None
    for attempt in range(max_retries + 1):
        if attempt:
            delay = backoff * 2 ** (attempt - 1)
            log.warning("retrying %s in %.2fs after: %s", url, delay, last)
            sleep(delay)
        try:
            resp = client.post(url, json=payload, headers=headers)
        except httpx.TimeoutException as exc:
            last = BackendError(f"timeout: {exc}", category="timeout")
            continue
        except httpx.TransportError as exc:
            last = BackendError(f"transport error: {exc}", category="transport")
            continue
        if resp.status_code == 429:
            last = RateLimited(f"rate limited by {url}")
            continue
        if _retryable(resp.status_code):
            last = BackendError(f"server error {resp.status_code}", category="server", status=resp.status_code)
            continue
        if resp.status_code >= 400:
            raise BackendError(
                f"request rejected with {resp.status_code}: {resp.text[:200]}",
                category="client",
                status=resp.status_code,
            )
        try:
            return resp.json()
        except ValueError:
            raise BackendError("response body is not JSON", category="protocol") from None
    assert last is not None
    message = f"giving up after {max_retries + 1} attempts: {last}"
    if isinstance(last, RateLimited):
        raise RateLimited(message)
    raise BackendError(message, category=last.category, status=last.status)


class HttpBackend:
    """OpenAI-style ``/chat/completions`` client with retries and bounded concurrency."""

    def __init__(
        self,
        model_name: str,
        base_url: str | None = None,
        api_key: str | None = None,
        max_in_flight: int = 4,
        backoff: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        api_key = api_key or os.environ.get(API_KEY_ENV)
        if not api_key:
            raise BackendError(f"missing {API_KEY_ENV}", category="config")
        base_url = base_url or os.environ.get(BASE_URL_ENV)
        if not base_url:
            raise BackendError(f"no base URL given and {BASE_URL_ENV} is unset", category="config")
        self.model_name = model_name
        self.base_url = base_url.rstrip("/")
        self._headers = {"Authorization": f"Bearer {api_key}"}
        self._client = httpx.Client(transport=transport, timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._backoff = backoff
        self._sleep = sleep

    def payload(self, prompt: DailyPrompt, params: ChatBackendParams) -> dict[str, Any]:
        return {
            "model": self.model_name,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "messages": prompt.messages(),
        }

    def complete(self, prompt: DailyPrompt, params: ChatBackendParams) -> str:
        with self._slots:
            data = post_json_with_retry(
                self._client,
                f"{self.base_url}/chat/completions",
                self.payload(prompt, params),
                self._headers,
                params.max_retries,
                self._backoff,
                self._sleep,
            )
        try:
            return data["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("unexpected chat-completions response shape", category="protocol") from None

    def close(self) -> None:
        self._client.close()
