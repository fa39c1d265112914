import json

import httpx
import pytest

from agentlab.agent import (
    Agent,
    AgentAbort,
    AgentMemory,
    BackendError,
    ChatBackendParams,
    DailyPrompt,
    HttpBackend,
    MockBackend,
    ParseError,
    RateLimited,
    agent_step,
    build_prompt,
    bundled_personas,
    load_persona,
    make_script,
    parse_response,
    run_episode,
)
from agentlab.agent.backends import API_KEY_ENV, BASE_URL_ENV, read_prompt
from agentlab.agent.parsing import first_json_object
from agentlab.agent.personas import parse_persona
from agentlab.agent.prompts import DISCONNECTED_NOTICE, RESPONSE_SCHEMA, dollars
from agentlab.env import (
    Action,
    BatteryConfig,
    EnvState,
    InfeasibleAction,
    InterventionSchedule,
    PriceModel,
    PricePath,
    sample_price_path,
)
from agentlab.policy import GreedyPolicy, evaluate_on_path

CFG = BatteryConfig()
MODEL = PriceModel()
NONE = InterventionSchedule.control()
BLACKOUT = InterventionSchedule.treatment((8, 9))
LOW, HIGH = 500, 1000


def reply(action, **extra):
    body = {"thoughts": "t", "action": action, "reflection": "r", "journal": "j", **extra}
    return json.dumps(body)


class Scripted:
    """Backend returning canned replies in order."""

    model_name = "scripted"

    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt, params):
        self.prompts.append(prompt)
        return self.replies.pop(0)


# ---------------------------------------------------------------- personas


def test_bundled_personas():
    ps = bundled_personas()
    assert [p.id for p in ps] == ["Thinker", "Realist", "Feeler"]
    assert all(p.prompt_text.strip() for p in ps)
    assert ps[0].display_name == "Thinker (Rational)"
    assert {p.mbti_axis for p in ps} == {"T", "T/F", "F"}
    assert load_persona("feeler") == ps[2]


def test_persona_file_round_trip(tmp_path):
    text = "---\nid: Tester\ndisplay_name: Tester (Custom)\nmbti_axis: T\n---\nYou test things.\n"
    path = tmp_path / "tester.txt"
    path.write_text(text)
    p = load_persona(path)
    assert (p.id, p.display_name, p.prompt_text) == ("Tester", "Tester (Custom)", "You test things.")
    with pytest.raises(KeyError):
        load_persona("nobody")
    with pytest.raises(ValueError):
        parse_persona("no front matter")


# ---------------------------------------------------------------- prompts


def test_day_one_prompt():
    p = build_prompt(load_persona("Thinker"), EnvState(1, 5), LOW, AgentMemory(), NONE, CFG, MODEL)
    assert "Thinker (Rational)" in p.system_text and load_persona("Thinker").prompt_text in p.system_text
    assert "Blackouts are possible" in p.system_text
    assert "Day 1 of 20" in p.user_text and "$5.00/kWh" in p.user_text
    assert "## Your journal" not in p.user_text
    assert RESPONSE_SCHEMA in p.user_text
    assert p == build_prompt(load_persona("Thinker"), EnvState(1, 5), LOW, AgentMemory(), NONE, CFG, MODEL)
    assert [m["role"] for m in p.messages()] == ["system", "user"]


def test_blackout_prompt_lists_only_blackout_actions():
    p = build_prompt(load_persona("Realist"), EnvState(8, 4, in_blackout=True), HIGH, AgentMemory(), BLACKOUT, CFG)
    assert DISCONNECTED_NOTICE in p.user_text
    assert read_prompt(p).allowed == ("hold", "discharge_all")


def test_control_and_treatment_share_the_notice_and_early_prompts():
    persona = load_persona("Feeler")
    for day in range(1, 8):
        s = EnvState(day, 5)
        a = build_prompt(persona, s, LOW, AgentMemory(), NONE, CFG)
        b = build_prompt(persona, s, LOW, AgentMemory(), BLACKOUT, CFG)
        assert a == b


def test_outage_history_after_blackout():
    p = build_prompt(load_persona("Thinker"), EnvState(12, 5), LOW, AgentMemory(), BLACKOUT, CFG)
    assert "Grid outages experienced so far: day 8, day 9" in p.user_text
    assert read_prompt(p).outages == (8, 9)


def test_memory_window_and_order():
    mem = AgentMemory(window=2)
    for d in (1, 2, 3):
        mem.remember(d, f"entry {d}", f"refl {d}")
    assert mem.recent_journal() == [(2, "entry 2"), (3, "entry 3")]
    p = build_prompt(load_persona("Thinker"), EnvState(4, 5), LOW, mem, NONE, CFG)
    assert "entry 1" not in p.user_text and "Day 3: entry 3" in p.user_text
    with pytest.raises(ValueError):
        mem.remember(3, "again", "again")
    assert AgentMemory(window=0).recent_journal() == []


def test_prompt_rejects_out_of_range_day():
    with pytest.raises(ValueError):
        build_prompt(load_persona("Thinker"), EnvState(21, 5), LOW, AgentMemory(), NONE, CFG)


def test_dollars():
    assert dollars(750) == "$7.50" and dollars(-2500) == "-$25.00" and dollars(5) == "$0.05"


# ---------------------------------------------------------------- parsing

ALL = {Action.CHARGE, Action.DISCHARGE, Action.HOLD}


def test_parse_happy_path_in_prose():
    raw = "Sure! Here is my answer:\n```json\n" + reply("Discharge") + "\n```\nThanks."
    r = parse_response(raw, ALL)
    assert r.action is Action.DISCHARGE and r.thoughts == "t" and r.raw == raw


@pytest.mark.parametrize("name,action", [("nothing", Action.HOLD), ("HOLD", Action.HOLD), ("charge", Action.CHARGE)])
def test_action_aliases(name, action):
    assert parse_response(reply(name), ALL).action is action


def test_braces_inside_strings():
    raw = reply("hold", thoughts="a {weird} thought }")
    assert json.loads(first_json_object("x " + raw + " {junk"))["thoughts"] == "a {weird} thought }"


@pytest.mark.parametrize(
    "raw",
    [
        "I will charge today.",
        '{"thoughts": "t", "action": "charge"',
        '{"thoughts": "t", "action": "charge", "reflection": "r"}',
        reply("sell"),
        reply("hold", journal="   "),
        reply("hold", thoughts=3),
        '{"a": 1,}',
    ],
)
def test_parse_errors(raw):
    with pytest.raises(ParseError):
        parse_response(raw, ALL)


def test_infeasible_action():
    with pytest.raises(InfeasibleAction):
        parse_response(reply("charge"), {Action.DISCHARGE, Action.HOLD})


# ---------------------------------------------------------------- mock backend


def test_mock_greedy_action_and_determinism():
    backend = MockBackend(make_script("greedy", CFG, MODEL), seed=4)
    p = build_prompt(load_persona("Thinker"), EnvState(3, 5), LOW, AgentMemory(), NONE, CFG)
    out = backend.complete(p)
    assert parse_response(out, ALL).action is Action.CHARGE
    assert out == MockBackend(make_script("greedy", CFG, MODEL), seed=4).complete(p)
    texts = {MockBackend(make_script("greedy", CFG, MODEL), seed=s).complete(p) for s in range(30)}
    assert len(texts) > 1  # seed changes wording, not the action


def test_mock_phrase_banks_follow_persona():
    backend = MockBackend(make_script("hold", CFG, MODEL))
    feeler = backend.complete(build_prompt(load_persona("Feeler"), EnvState(2, 5), LOW, AgentMemory(), NONE, CFG))
    thinker = backend.complete(build_prompt(load_persona("Thinker"), EnvState(2, 5), LOW, AgentMemory(), NONE, CFG))
    assert "feel" in feeler and "feel" not in thinker


def test_mock_switches_bank_after_outage():
    backend = MockBackend(make_script("reserve", CFG, MODEL), switch_bank=True)
    early = backend.complete(build_prompt(load_persona("Realist"), EnvState(3, 5), LOW, AgentMemory(), BLACKOUT, CFG))
    late = backend.complete(build_prompt(load_persona("Realist"), EnvState(12, 5), LOW, AgentMemory(), BLACKOUT, CFG))
    assert "reserve" not in json.loads(first_json_object(early))["thoughts"] + json.loads(first_json_object(early))["journal"]
    body = json.loads(first_json_object(late))
    assert any(w in (body["thoughts"] + body["journal"]).lower() for w in ("reserve", "preparedness", "backup"))


def test_reserve_script_keeps_two_units_after_outage():
    backend = MockBackend(make_script("reserve", CFG, MODEL))
    persona = load_persona("Thinker")
    act = lambda soc, price, day: parse_response(  # noqa: E731
        backend.complete(build_prompt(persona, EnvState(day, soc), price, AgentMemory(), BLACKOUT, CFG)), ALL
        | {Action.BLACKOUT_DISCHARGE_ALL}).action
    assert act(2, HIGH, 3) is Action.DISCHARGE  # before any outage it is greedy
    assert act(2, HIGH, 12) is Action.HOLD
    assert act(3, HIGH, 12) is Action.DISCHARGE
    assert act(3, HIGH, 8) is Action.HOLD  # keeps energy through the blackout


def test_unknown_script():
    with pytest.raises(ValueError):
        make_script("nope", CFG, MODEL)


# ---------------------------------------------------------------- runtime


def make_agent(backend, **kw):
    return Agent(load_persona("Thinker"), backend, CFG, MODEL, ChatBackendParams(max_retries=2), **kw)


def test_agent_step_greedy_discharge():
    agent = make_agent(MockBackend(make_script("greedy", CFG, MODEL)))
    resp, out = agent_step(agent, EnvState(1, 5), HIGH, NONE)
    assert resp.action is Action.DISCHARGE and out.reward == 1000 and out.next_state.soc == 4
    rec = agent.records[0]
    assert (rec.day, rec.soc_before, rec.soc_after, rec.action, rec.reward_cents) == (1, 5, 4, "discharge", 1000)
    assert agent.memory.journal[0][0] == 1 and rec.journal == agent.memory.journal[0][1]


def test_retry_with_correction_then_success():
    backend = Scripted(["no json here", reply("charge"), reply("discharge")])
    agent = make_agent(backend)
    resp, out = agent_step(agent, EnvState(1, 10), HIGH, NONE)
    assert resp.action is Action.DISCHARGE and agent.retries_used == 2
    assert "## Correction" not in backend.prompts[0].user_text
    assert "## Correction" in backend.prompts[1].user_text and "not allowed" in backend.prompts[2].user_text
    assert len(agent.memory.journal) == 1 and len(agent.records) == 1


def test_abort_after_retry_budget_leaves_state_untouched():
    agent = make_agent(Scripted(["x"] * 3))
    with pytest.raises(AgentAbort):
        agent_step(agent, EnvState(1, 5), LOW, NONE)
    assert agent.records == [] and agent.memory.journal == []


def test_hold_script_episode():
    agent = make_agent(MockBackend(make_script("hold", CFG, MODEL)))
    recs = run_episode(agent, sample_price_path(MODEL, 20, 1), NONE)
    assert len(recs) == 20 and all(r.soc_after == 5 and r.reward_cents == 0 for r in recs)
    assert [d for d, _ in agent.memory.journal] == list(range(1, 21))


def test_greedy_episode_matches_rollout():
    path = sample_price_path(MODEL, 20, 11)
    agent = make_agent(MockBackend(make_script("greedy", CFG, MODEL)))
    recs = run_episode(agent, path, NONE)
    traj, total = evaluate_on_path(GreedyPolicy(CFG, MODEL), path, CFG)
    assert [r.soc_before for r in recs] + [recs[-1].soc_after] == [s.soc for s in traj]
    assert recs[-1].cum_reward_cents == total


def test_prompts_only_see_earlier_days():
    backend = Scripted([reply("hold", journal=f"note-{d}") for d in range(1, 21)])
    run_episode(make_agent(backend), PricePath((LOW,) * 20), NONE)
    for d, p in enumerate(backend.prompts, start=1):
        assert f"note-{d}" not in p.user_text
        assert d == 1 or f"note-{d - 1}" in p.user_text


def test_episode_length_checked():
    with pytest.raises(ValueError):
        run_episode(make_agent(Scripted([])), PricePath((LOW,) * 3), NONE)


# ---------------------------------------------------------------- HTTP backend


def chat_ok(content):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": content}}]})


def test_http_missing_key(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(BackendError, match="missing AGENTLAB_API_KEY"):
        HttpBackend("m", base_url="http://x")


def test_http_missing_base_url(monkeypatch):
    monkeypatch.delenv(BASE_URL_ENV, raising=False)
    with pytest.raises(BackendError):
        HttpBackend("m", api_key="k")


def test_http_wire_format(monkeypatch):
    seen = []

    def handler(request):
        seen.append(request)
        return chat_ok(reply("hold"))

    monkeypatch.setenv(API_KEY_ENV, "secret")
    monkeypatch.setenv(BASE_URL_ENV, "http://llm.test/v1/")
    backend = HttpBackend("some-model", transport=httpx.MockTransport(handler))
    prompt = DailyPrompt("sys", "user")
    assert backend.complete(prompt, ChatBackendParams(temperature=0, max_tokens=50)) == reply("hold")
    req = seen[0]
    assert str(req.url) == "http://llm.test/v1/chat/completions"
    assert req.headers["authorization"] == "Bearer secret"
    body = json.loads(req.content)
    assert body == {
        "model": "some-model",
        "temperature": 0,
        "max_tokens": 50,
        "messages": [{"role": "system", "content": "sys"}, {"role": "user", "content": "user"}],
    }


def test_http_retries_transient_failures_with_backoff():
    codes = iter([429, 503])
    delays = []

    def handler(request):
        code = next(codes, 200)
        return chat_ok("ok") if code == 200 else httpx.Response(code)

    backend = HttpBackend("m", "http://x", "k", backoff=0.5, transport=httpx.MockTransport(handler), sleep=delays.append)
    assert backend.complete(DailyPrompt("s", "u"), ChatBackendParams(max_retries=3)) == "ok"
    assert delays == [0.5, 1.0]


def test_http_gives_up_after_max_retries():
    def handler(request):
        raise httpx.ConnectError("unreachable", request=request)

    delays = []
    backend = HttpBackend("m", "http://x", "k", transport=httpx.MockTransport(handler), sleep=delays.append)
    with pytest.raises(BackendError) as info:
        backend.complete(DailyPrompt("s", "u"), ChatBackendParams(max_retries=2))
    assert info.value.category == "transport" and len(delays) == 2


def test_http_rate_limit_exhaustion():
    backend = HttpBackend("m", "http://x", "k", transport=httpx.MockTransport(lambda r: httpx.Response(429)),
                          sleep=lambda s: None)
    with pytest.raises(RateLimited):
        backend.complete(DailyPrompt("s", "u"), ChatBackendParams(max_retries=1))


def test_http_client_error_not_retried():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(401, text="bad key")

    backend = HttpBackend("m", "http://x", "k", transport=httpx.MockTransport(handler), sleep=lambda s: None)
    with pytest.raises(BackendError) as info:
        backend.complete(DailyPrompt("s", "u"), ChatBackendParams(max_retries=3))
    assert info.value.status == 401 and len(calls) == 1


def test_http_bad_shape():
    backend = HttpBackend("m", "http://x", "k", transport=httpx.MockTransport(lambda r: httpx.Response(200, json={})))
    with pytest.raises(BackendError):
        backend.complete(DailyPrompt("s", "u"), ChatBackendParams())


def test_params_validation():
    with pytest.raises(ValueError):
        ChatBackendParams(temperature=-1)
    with pytest.raises(ValueError):
        ChatBackendParams(max_retries=-1)
