from fractions import Fraction

import pytest

from agentlab.env import Action, BatteryConfig, EnvState, PriceModel, PricePath, feasible_actions, step
from agentlab.policy import (
    DegenerateScenario,
    GreedyPolicy,
    HoldPolicy,
    classify,
    complexity_rho,
    dp_from_json,
    dp_to_json,
    evaluate_on_path,
    exact_expected_reward,
    expected_complexity,
    greedy_action,
    solve_dp,
)

from oracles import all_paths, first_day_values, greedy_u, path_average, rollout

LOW, HIGH = 500, 1000
MODEL = PriceModel()
CFG = BatteryConfig()


@pytest.fixture(scope="module")
def dp20():
    return solve_dp(CFG, MODEL)


def test_last_day_discharges(dp20):
    table, policy = dp20
    for s in range(1, 11):
        for level, price in enumerate((LOW, HIGH)):
            assert table.value(20, s, level) == price
            assert policy.action(20, s, level) is Action.DISCHARGE
    assert all(table.value(21, s, k) == 0 for s in range(11) for k in (0, 1))


def test_two_day_values_from_enumeration():
    cfg = BatteryConfig(horizon=2, initial_soc=0)
    table, policy = solve_dp(cfg, MODEL)
    assert table.value(1, 0, 0) == 250  # charge -5, then E[price] = 7.5 on day 2
    assert policy.action(1, 0, 0) is Action.CHARGE
    assert table.value(1, 0, 1) == 0
    assert policy.action(1, 0, 1) is Action.HOLD


def test_greedy_rule():
    assert greedy_action(LOW, 5, CFG) is Action.CHARGE
    assert greedy_action(HIGH, 5, CFG) is Action.DISCHARGE
    assert greedy_action(HIGH, 0, CFG) is Action.HOLD
    assert greedy_action(LOW, 10, CFG) is Action.HOLD


def test_exact_expected_reward_small_cases():
    cfg = BatteryConfig(horizon=2, initial_soc=0)
    assert exact_expected_reward(HoldPolicy(), CFG, MODEL) == 0
    assert exact_expected_reward(GreedyPolicy(cfg, MODEL), cfg, MODEL) == -250


@pytest.mark.parametrize("T", [1, 3, 6, 9])
def test_greedy_expectation_matches_path_enumeration(T):
    cfg = BatteryConfig(horizon=T)
    for s0 in (0, 3, 10):
        assert exact_expected_reward(GreedyPolicy(cfg, MODEL), cfg, MODEL, s0) == path_average(greedy_u, T, s0)


@pytest.mark.parametrize(
    "prices,reward,final_soc",
    [((LOW,) * 20, -2500, 10), ((LOW, HIGH) * 10, 5000, 5), ((HIGH,) * 20, 5000, 0)],
)
def test_greedy_on_fixed_paths(prices, reward, final_soc):
    traj, r = evaluate_on_path(GreedyPolicy(CFG, MODEL), PricePath(prices), CFG)
    assert r == reward and traj[-1].soc == final_soc and len(traj) == 21
    assert (traj[-1].soc, r) == (rollout(greedy_u, prices, 5)[0][-1], rollout(greedy_u, prices, 5)[1])


def test_bellman_consistency_and_feasibility(dp20):
    table, policy = dp20
    for t in range(1, 21):
        for s in range(11):
            for level, price in enumerate((LOW, HIGH)):
                a = policy.action(t, s, level)
                assert a in feasible_actions(EnvState(t, s), CFG)
                nxt = step(EnvState(t, s), a, price, CFG).next_state.soc
                rhs = price * (s - nxt) + table.expected(t + 1, nxt)
                assert table.value(t, s, level) == rhs
                # no other feasible action does strictly better
                for b in feasible_actions(EnvState(t, s), CFG):
                    ns = step(EnvState(t, s), b, price, CFG).next_state.soc
                    assert price * (s - ns) + table.expected(t + 1, ns) <= rhs


def test_value_monotonicity_and_marginal_bound(dp20):
    table, _ = dp20
    for t in range(1, 22):
        for k in (0, 1):
            col = [table.value(t, s, k) for s in range(11)]
            diffs = [b - a for a, b in zip(col, col[1:])]
            assert all(0 <= d <= HIGH for d in diffs)


def test_high_price_day_is_not_always_worth_more():
    # With little stored energy and many days left, a cheap day to buy beats a
    # dear day to sell. The history-tree oracle agrees on the ordering.
    cfg = BatteryConfig(horizon=12)
    table, _ = solve_dp(cfg, MODEL)
    low, high = first_day_values(12)
    for s in range(11):
        assert table.value(1, s, 0) == low[s] and table.value(1, s, 1) == high[s]
    assert high[1] < low[1]
    assert all(high[s] >= low[s] for s in range(2, 11))
    # one day before the end, the dear day always wins once there is energy to sell
    for s in range(1, 11):
        assert table.value(12, s, 1) >= table.value(12, s, 0)


def test_tie_break_prefers_discharge_then_hold():
    # T=1, soc 0, high price: hold (0) beats charge (-10); with soc 1 discharge wins
    cfg = BatteryConfig(horizon=1, initial_soc=0)
    _, policy = solve_dp(cfg, MODEL)
    assert policy.action(1, 0, 1) is Action.HOLD
    assert policy.action(1, 1, 1) is Action.DISCHARGE
    # a free price makes every action tie; discharge wins
    zero = PriceModel(low_cents=1, high_cents=2, prob_high=0.0)
    _, p = solve_dp(BatteryConfig(horizon=2), zero)
    assert p.action(2, 5, 0) is Action.DISCHARGE


def test_dominance_and_gap_at_default(dp20):
    _, policy = dp20
    r_dp = exact_expected_reward(policy, CFG, MODEL)
    r_g = exact_expected_reward(GreedyPolicy(CFG, MODEL), CFG, MODEL)
    assert r_dp > r_g
    rep = expected_complexity(CFG, MODEL, policy)
    assert rep.rho == pytest.approx(float((r_dp - r_g) / r_dp))


def test_dp_beats_greedy_on_every_short_path():
    cfg = BatteryConfig(horizon=8)
    _, policy = solve_dp(cfg, MODEL)
    greedy = GreedyPolicy(cfg, MODEL)
    total_dp = total_g = 0
    for p in all_paths(8):
        total_dp += evaluate_on_path(policy, PricePath(p), cfg)[1]
        total_g += evaluate_on_path(greedy, PricePath(p), cfg)[1]
    assert Fraction(total_dp, 256) == exact_expected_reward(policy, cfg, MODEL)
    assert total_dp >= total_g


def test_classification_thresholds():
    assert classify(0.0) == "Easy" and classify(0.2999) == "Easy"
    assert classify(0.3) == "Medium" and classify(0.7999) == "Medium"
    assert classify(0.8) == "Hard" and classify(1.2) == "Hard"


def test_rho_on_fixed_paths(dp20):
    _, policy = dp20
    rep = complexity_rho(PricePath((HIGH,) * 20), CFG, MODEL, policy)
    assert rep.rho == 0 and rep.label == "Easy" and rep.r_dp == rep.r_greedy == 5000
    rep = complexity_rho(PricePath((LOW, HIGH) * 10), CFG, MODEL, policy)
    assert rep.r_greedy == 5000 and rep.r_dp >= 5000
    assert rep.rho <= 1 or rep.r_greedy < 0


def test_negative_greedy_is_flagged(dp20):
    _, policy = dp20
    rep = complexity_rho(PricePath((LOW,) * 19 + (HIGH,)), CFG, MODEL, policy)
    assert rep.r_greedy < 0 and "negative_greedy" in rep.flags and rep.rho > 1


def test_degenerate_scenario():
    cfg = BatteryConfig(initial_soc=0, horizon=3)
    with pytest.raises(DegenerateScenario):
        complexity_rho(PricePath((LOW,) * 3), cfg, MODEL)


def test_json_round_trip(dp20):
    table, policy = dp20
    text = dp_to_json(table, policy)
    t2, p2 = dp_from_json(text)
    assert t2 == table and p2 == policy
    assert dp_to_json(t2, p2) == text
    with pytest.raises(ValueError):
        dp_from_json('{"schema": "other"}')
