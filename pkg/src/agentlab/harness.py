"""Seeded Monte Carlo experiments: repetitions, blackout pairs and scenario scans.

Repetition ``i`` of a run uses seed ``base_seed + i`` both for its sampled price
path and for the mock backend's text, so a run can be extended or replayed
without touching the other repetitions.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .agent import (
    Agent,
    AgentAbort,
    BackendError,
    ChatBackendParams,
    HttpBackend,
    MockBackend,
    load_persona,
    make_script,
    run_episode,
)
from .agent.backends import ChatBackend
from .env import (
    BatteryConfig,
    InterventionSchedule,
    PriceModel,
    PricePath,
    initial_state,
    sample_price_path,
    step,
)
from .policy import (
    ComplexityReport,
    DegenerateScenario,
    DpPolicy,
    GreedyPolicy,
    HoldPolicy,
    Policy,
    complexity_rho,
    evaluate_on_path,
    solve_dp,
)
from .storage import (
    SCHEMA_VERSION,
    DayRecord,
    RecordSink,
    RunManifest,
    write_csv,
    write_manifest,
)

log = logging.getLogger(__name__)

REFERENCE_RHOS = (0.067, 0.692, 0.909)
BENCHMARKS = ("dp", "greedy", "hold")


@dataclass(frozen=True)
class FixedPath:
    path: PricePath


@dataclass(frozen=True)
class Sampled:
    """Draw a fresh path per repetition from the price model."""


@dataclass(frozen=True)
class AgentKind:
    persona: str = "Thinker"
    backend: str = "mock:greedy"
    switch_bank: bool = False
    base_url: str | None = None


@dataclass(frozen=True)
class RunSpec:
    run_id: str
    scenario: FixedPath | Sampled = field(default_factory=Sampled)
    policy_kind: str | AgentKind = "greedy"
    repetitions: int = 40
    intervention: InterventionSchedule = field(default_factory=InterventionSchedule)
    base_seed: int = 0
    cfg: BatteryConfig = field(default_factory=BatteryConfig)
    model: PriceModel = field(default_factory=PriceModel)
    params: ChatBackendParams = field(default_factory=ChatBackendParams)
    workers: int = 1

    def __post_init__(self) -> None:
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if isinstance(self.policy_kind, str) and self.policy_kind not in BENCHMARKS:
            raise ValueError(f"policy_kind must be one of {BENCHMARKS} or an AgentKind")
        if isinstance(self.scenario, FixedPath):
            self.scenario.path.validate(self.model, self.cfg.horizon)
        self.intervention.validate(self.cfg)

    def path_for(self, repetition: int) -> PricePath:
        if isinstance(self.scenario, FixedPath):
            return self.scenario.path
        return sample_price_path(self.model, self.cfg.horizon, self.base_seed + repetition)

    def snapshot(self) -> dict[str, Any]:
        kind = self.policy_kind if isinstance(self.policy_kind, str) else {"agent": asdict(self.policy_kind)}
        scenario = (
            {"fixed_path": list(self.scenario.path.prices)}
            if isinstance(self.scenario, FixedPath)
            else {"sampled": True}
        )
        return {
            "run_id": self.run_id,
            "scenario": scenario,
            "policy_kind": kind,
            "repetitions": self.repetitions,
            "blackout_days": sorted(self.intervention.blackout_days),
            "base_seed": self.base_seed,
            "cfg": asdict(self.cfg),
            "model": asdict(self.model),
            "params": asdict(self.params),
        }


@dataclass
class SummaryStats:
    n: int
    mean_terminal_reward: float
    sd_terminal_reward: float
    mean_soc_by_day: list[float]
    sd_soc_by_day: list[float]
    mean_cum_reward_by_day: list[float]
    sd_cum_reward_by_day: list[float]
    terminal_soc_histogram: dict[int, int]
    failure_count: int = 0


@dataclass
class RunResult:
    spec: RunSpec
    stats: SummaryStats
    records: list[DayRecord]
    failed_records: list[DayRecord]
    run_dir: Path | None = None

    def trajectories(self) -> dict[int, list[DayRecord]]:
        out: dict[int, list[DayRecord]] = {}
        for r in self.records:
            out.setdefault(r.repetition, []).append(r)
        return out


def _sd(x: np.ndarray, axis: int = 0) -> np.ndarray:
    if x.shape[axis] < 2:
        return np.zeros(np.delete(x.shape, axis))
    return x.std(axis=axis, ddof=1)


def summarize(records: Sequence[DayRecord], cfg: BatteryConfig, failure_count: int = 0) -> SummaryStats:
    """Statistics over repetitions, computed from the day records alone."""
    by_rep: dict[int, list[DayRecord]] = {}
    for r in records:
        by_rep.setdefault(r.repetition, []).append(r)
    reps = sorted(by_rep)
    T = cfg.horizon
    soc = np.zeros((len(reps), T + 1))
    cum = np.zeros((len(reps), T + 1))
    for row, rep in enumerate(reps):
        days = sorted(by_rep[rep], key=lambda r: r.day)
        if [r.day for r in days] != list(range(1, T + 1)):
            raise ValueError(f"repetition {rep} does not cover days 1..{T}")
        soc[row, 0] = days[0].soc_before
        soc[row, 1:] = [r.soc_after for r in days]
        cum[row, 1:] = [r.cum_reward_cents for r in days]
    hist = {int(s): 0 for s in cfg.soc_levels}
    for s in soc[:, T]:
        hist[int(s)] += 1
    if not reps:
        nan = [math.nan] * (T + 1)
        return SummaryStats(0, math.nan, math.nan, nan, nan, nan, nan, hist, failure_count)
    return SummaryStats(
        n=len(reps),
        mean_terminal_reward=float(cum[:, T].mean()),
        sd_terminal_reward=float(_sd(cum[:, T:])[0]),
        mean_soc_by_day=soc.mean(axis=0).tolist(),
        sd_soc_by_day=_sd(soc).tolist(),
        mean_cum_reward_by_day=cum.mean(axis=0).tolist(),
        sd_cum_reward_by_day=_sd(cum).tolist(),
        terminal_soc_histogram=hist,
        failure_count=failure_count,
    )


def summary_rows(run_id: str, label: str, stats: SummaryStats, cfg: BatteryConfig) -> tuple[list[str], list[list[str]]]:
    T = cfg.horizon
    header = ["run_id", "persona", "n", "failure_count", "mean_terminal_reward", "sd_terminal_reward"]
    header += [f"mean_soc_day_{d}" for d in range(1, T + 2)]
    row = [run_id, label, str(stats.n), str(stats.failure_count)]
    row += [f"{stats.mean_terminal_reward / 100:.6f}", f"{stats.sd_terminal_reward / 100:.6f}"]
    row += [f"{v:.6f}" for v in stats.mean_soc_by_day]
    return header, [row]


def _benchmark_policy(kind: str, spec: RunSpec, dp_policy: DpPolicy | None) -> Policy:
    if kind == "dp":
        return dp_policy or solve_dp(spec.cfg, spec.model)[1]
    if kind == "greedy":
        return GreedyPolicy(spec.cfg, spec.model)
    return HoldPolicy()


def rollout_records(
    policy: Policy,
    path: PricePath,
    spec: RunSpec,
    repetition: int,
    label: str,
    schedule: InterventionSchedule | None = None,
) -> list[DayRecord]:
    cfg = spec.cfg
    schedule = spec.intervention if schedule is None else schedule
    state = initial_state(cfg, schedule)
    out = []
    for price in path:
        action = policy.act(state.day, state.soc, price, state.in_blackout)
        res = step(state, action, price, cfg, schedule)
        out.append(
            DayRecord(
                schema_version=SCHEMA_VERSION,
                run_id=spec.run_id,
                repetition=repetition,
                persona=label,
                day=state.day,
                price_cents=price,
                soc_before=state.soc,
                soc_after=res.next_state.soc,
                action=action.value,
                reward_cents=res.reward,
                cum_reward_cents=res.next_state.cum_reward,
                in_blackout=state.in_blackout,
                thoughts="",
                reflection="",
                journal="",
                backend_model="",
                seed=spec.base_seed + repetition,
            )
        )
        state = res.next_state
    return out


BackendFactory = Callable[[int], ChatBackend]


def backend_factory(kind: AgentKind, spec: RunSpec, dp_policy: DpPolicy | None = None) -> BackendFactory:
    """Per-repetition backend constructor for an agent run."""
    name, _, script_name = kind.backend.partition(":")
    if name == "mock":
        script = make_script(script_name or "greedy", spec.cfg, spec.model, dp_policy)

        def make(seed: int) -> ChatBackend:
            return MockBackend(script, seed=seed, switch_bank=kind.switch_bank, model_name=kind.backend)

        return make
    if name == "http":
        shared = HttpBackend(spec.params.model_name, base_url=kind.base_url, timeout=spec.params.timeout)
        return lambda seed: shared
    raise ValueError(f"unknown backend {kind.backend!r}; use 'mock:<script>' or 'http'")


def _run_agent_rep(kind, spec, factory, rep, schedule):
    seed = spec.base_seed + rep
    agent = Agent(
        persona=load_persona(kind.persona),
        backend=factory(seed),
        cfg=spec.cfg,
        model=spec.model,
        params=spec.params,
        run_id=spec.run_id,
        repetition=rep,
        seed=seed,
    )
    try:
        run_episode(agent, spec.path_for(rep), schedule)
    except (AgentAbort, BackendError) as exc:
        log.warning("%s repetition %d failed: %s", spec.run_id, rep, exc)
        return agent.records, str(exc)
    return agent.records, None


def run_monte_carlo(
    spec: RunSpec,
    out_dir: Path | None = None,
    dp_policy: DpPolicy | None = None,
    factory: BackendFactory | None = None,
) -> RunResult:
    """Run every repetition; persist records (if ``out_dir``) before summarizing."""
    kind = spec.policy_kind
    schedule = spec.intervention
    if isinstance(kind, str):
        policy = _benchmark_policy(kind, spec, dp_policy)

        def one(rep: int):
            return rollout_records(policy, spec.path_for(rep), spec, rep, kind), None

    else:
        if factory is None:
            factory = backend_factory(kind, spec, dp_policy)

        def one(rep: int):
            return _run_agent_rep(kind, spec, factory, rep, schedule)

    run_dir = Path(out_dir) / spec.run_id if out_dir is not None else None
    sink = failed_sink = None
    if run_dir is not None:
        sink = RecordSink(run_dir, spec.cfg)
        failed_sink = RecordSink(run_dir, spec.cfg, "failed.jsonl")

    records: list[DayRecord] = []
    failed: list[DayRecord] = []
    failures = 0
    with ThreadPoolExecutor(max_workers=max(1, spec.workers)) as pool:
        for recs, error in pool.map(one, range(spec.repetitions)):
            if error is None:
                records.extend(recs)
                if sink is not None:
                    for r in recs:
                        sink.append(r)
            else:
                failures += 1
                failed.extend(recs)
                if failed_sink is not None:
                    for r in recs:
                        failed_sink.append(r)

    stats = summarize(records, spec.cfg, failures)
    if run_dir is not None:
        write_manifest(
            run_dir,
            RunManifest(
                run_id=spec.run_id,
                spec=spec.snapshot(),
                record_count=len(records),
                failure_count=failures,
            ),
        )
        label = kind if isinstance(kind, str) else kind.persona
        header, rows = summary_rows(spec.run_id, label, stats, spec.cfg)
        write_csv(run_dir / "summary.csv", header, rows)
    return RunResult(spec, stats, records, failed, run_dir)


def run_intervention_pair(
    spec: RunSpec,
    out_dir: Path | None = None,
    dp_policy: DpPolicy | None = None,
    blackout_days: Sequence[int] = (8, 9),
) -> tuple[RunResult, RunResult]:
    """Treatment and control arms that differ only in the blackout schedule."""
    treat_sched = spec.intervention if spec.intervention.blackout_days else InterventionSchedule.treatment(blackout_days)
    treatment = replace(spec, run_id=f"{spec.run_id}-treatment", intervention=treat_sched)
    control = replace(spec, run_id=f"{spec.run_id}-control", intervention=InterventionSchedule.control())
    factory = None
    if isinstance(spec.policy_kind, AgentKind):
        factory = backend_factory(spec.policy_kind, spec, dp_policy)
    t = run_monte_carlo(treatment, out_dir, dp_policy, factory)
    c = run_monte_carlo(control, out_dir, dp_policy, factory)
    return t, c


def scan_scenarios(
    model: PriceModel,
    cfg: BatteryConfig,
    n_paths: int,
    seed: int,
    extra_paths: Sequence[PricePath] = (),
    dp_policy: DpPolicy | None = None,
) -> list[ComplexityReport]:
    """rho for ``n_paths`` sampled paths (seeds ``seed + i``), sorted ascending.

    Paths where rho is undefined come last, flagged ``degenerate``.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    dp_policy = dp_policy or solve_dp(cfg, model)[1]
    candidates = [(sample_price_path(model, cfg.horizon, seed + i), seed + i) for i in range(n_paths)]
    candidates += [(p, None) for p in extra_paths]
    reports = []
    for path, s in candidates:
        try:
            reports.append(complexity_rho(path, cfg, model, dp_policy, seed=s))
        except DegenerateScenario:
            _, r_dp = evaluate_on_path(dp_policy, path, cfg)
            _, r_g = evaluate_on_path(GreedyPolicy(cfg, model), path, cfg)
            reports.append(ComplexityReport(None, r_dp, r_g, None, path, s, ("degenerate",)))
    return sorted(reports, key=lambda r: (r.rho is None, r.rho if r.rho is not None else 0.0, r.seed or 0))


def nearest_to_exemplars(
    reports: Sequence[ComplexityReport], exemplars: Sequence[float] = REFERENCE_RHOS
) -> dict[float, ComplexityReport]:
    valid = [r for r in reports if r.rho is not None]
    return {ex: min(valid, key=lambda r: (abs(r.rho - ex), r.seed or 0)) for ex in exemplars}


def stochastically_dominates(upper: dict[int, int], lower: dict[int, int]) -> bool:
    """First-order dominance of two count histograms: P_upper[X >= k] >= P_lower[X >= k] for all k."""
    levels = sorted(set(upper) | set(lower))
    nu, nl = sum(upper.values()), sum(lower.values())
    tail_u = tail_l = 0
    for k in reversed(levels):
        tail_u += upper.get(k, 0)
        tail_l += lower.get(k, 0)
        if tail_u * nl < tail_l * nu:
            return False
    return True
