"""``agentlab`` command line.

Exit codes: 0 ok, 2 configuration error, 3 backend failure, 4 data error.
"""

from __future__ import annotations

import functools
import json
import logging
import sys
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import click

from .agent import BackendError, ChatBackendParams, load_persona
from .agent.personas import PERSONA_IDS
from .agent.backends import SCRIPTS
from .config import CliConfig, ConfigError, dump_config, load_config
from .env import InterventionSchedule, PricePath, sample_price_path
from .harness import (
    REFERENCE_RHOS,
    AgentKind,
    FixedPath,
    RunSpec,
    Sampled,
    nearest_to_exemplars,
    run_intervention_pair,
    run_monte_carlo,
    scan_scenarios,
)
from .policy import (
    EASY_MAX,
    MEDIUM_MAX,
    GreedyPolicy,
    dp_to_json,
    exact_expected_reward,
    solve_dp,
)
from .storage import StorageError, write_csv

EXIT_CONFIG, EXIT_BACKEND, EXIT_DATA = 2, 3, 4


class Failure(click.ClickException):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.exit_code = code


def _dollars(cents: Fraction) -> str:
    return f"{float(cents) / 100:.6f}"


def _guard(fn):
    """Translate library errors into exit codes."""

    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            raise Failure(f"config error: {exc}", EXIT_CONFIG) from None
        except BackendError as exc:
            raise Failure(f"backend error: {exc}", EXIT_BACKEND) from None
        except (StorageError, FileNotFoundError, json.JSONDecodeError) as exc:
            raise Failure(f"data error: {exc}", EXIT_DATA) from None

    return wrapped


def _battery_overrides(conf: CliConfig, horizon, initial_soc) -> CliConfig:
    changes = {}
    if horizon is not None:
        changes["horizon"] = horizon
    if initial_soc is not None:
        changes["initial_soc"] = initial_soc
    if not changes:
        return conf
    try:
        return replace(conf, battery=replace(conf.battery, **changes))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="YAML config file; omitted keys take the built-in defaults.")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """Battery-arbitrage agent laboratory: benchmarks, simulations and transcript analytics."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx.obj = load_config(config_path)
    except ConfigError as exc:
        raise Failure(f"config error: {exc}", EXIT_CONFIG) from None


@main.command("show-config")
@click.pass_obj
def show_config(conf: CliConfig) -> None:
    """Print the effective configuration as YAML."""
    click.echo(dump_config(conf), nl=False)


@main.command("solve-dp")
@click.option("--horizon", type=int, default=None, help="Override battery.horizon (days).")
@click.option("--initial-soc", type=int, default=None, help="Override battery.initial_soc (kWh).")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Where to write the value/policy JSON [default: <output_dir>/dp.json].")
@click.pass_obj
@_guard
def solve_dp_cmd(conf: CliConfig, horizon, initial_soc, out) -> None:
    """Solve the DP exactly and print E[r_dp], E[r_greedy] and rho (dollars)."""
    conf = _battery_overrides(conf, horizon, initial_soc)
    cfg, model = conf.battery, conf.prices
    table, policy = solve_dp(cfg, model)
    path = Path(out) if out else Path(conf.output_dir) / "dp.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dp_to_json(table, policy) + "\n", encoding="utf-8")
    r_dp = exact_expected_reward(policy, cfg, model)
    r_g = exact_expected_reward(GreedyPolicy(cfg, model), cfg, model)
    click.echo(f"E[r_dp]     = {_dollars(r_dp)}  (exact: {r_dp} cents)")
    click.echo(f"E[r_greedy] = {_dollars(r_g)}  (exact: {r_g} cents)")
    if r_dp > 0:
        click.echo(f"rho         = {float((r_dp - r_g) / r_dp):.6f}")
    else:
        click.echo("rho         = undefined (E[r_dp] <= 0)")
    click.echo(f"wrote {path}")


def _fixed_path(conf: CliConfig, path_seed, path_file):
    if path_seed is not None and path_file is not None:
        raise ConfigError("use at most one of --path-seed and --path-file")
    if path_seed is not None:
        return FixedPath(sample_price_path(conf.prices, conf.battery.horizon, path_seed))
    if path_file is not None:
        prices = json.loads(Path(path_file).read_text(encoding="utf-8"))
        if isinstance(prices, dict):
            prices = prices.get("prices_cents")
        if not isinstance(prices, list):
            raise StorageError(f"{path_file}: expected a JSON list of prices in cents")
        path = PricePath(tuple(prices))
        try:
            path.validate(conf.prices, conf.battery.horizon)
        except ValueError as exc:
            raise StorageError(f"{path_file}: {exc}") from None
        return FixedPath(path)
    return Sampled()


def _parse_days(text: str | None, default) -> tuple[int, ...]:
    if text is None:
        return tuple(default)
    try:
        return tuple(int(d) for d in text.split(",") if d.strip())
    except ValueError:
        raise ConfigError(f"--blackout expects comma-separated days, got {text!r}") from None


@main.command()
@click.option("--policy", type=click.Choice(["dp", "greedy", "hold", "agent"]), default="greedy", show_default=True,
              help="Benchmark policy, or an LLM-style agent.")
@click.option("--persona", default="Thinker", show_default=True,
              help=f"Agent persona id ({', '.join(PERSONA_IDS)}) or path to a persona file.")
@click.option("--backend", default="mock:greedy", show_default=True,
              help=f"Agent backend: 'http' or 'mock:<script>' with script in {', '.join(SCRIPTS)}.")
@click.option("--mock-switch-bank", is_flag=True,
              help="Mock agents switch to preparedness wording after experiencing an outage.")
@click.option("--path-seed", type=int, default=None, help="Use one fixed price path sampled with this seed.")
@click.option("--path-file", type=click.Path(dir_okay=False), default=None,
              help="Use one fixed price path from a JSON list of prices in cents.")
@click.option("--blackout", default=None,
              help="Comma-separated blackout days for the treatment arm [default: runs.blackout_days].")
@click.option("--paired", is_flag=True, help="Run treatment and control arms with identical price paths.")
@click.option("--reps", type=int, default=None,
              help="Repetitions [default: runs.repetitions for agents, runs.benchmark_repetitions otherwise].")
@click.option("--base-seed", type=int, default=None, help="Repetition i uses seed base_seed + i.")
@click.option("--workers", type=int, default=None, help="Concurrent repetitions.")
@click.option("--run-id", default=None, help="Run directory name [default: derived from policy/persona].")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Parent directory for run directories.")
@click.pass_obj
@_guard
def simulate(conf: CliConfig, policy, persona, backend, mock_switch_bank, path_seed, path_file, blackout, paired,
             reps, base_seed, workers, run_id, out) -> None:
    """Monte Carlo run (or paired intervention runs); prints the run directories."""
    r = conf.runs
    if policy == "agent":
        try:
            load_persona(persona)
        except KeyError as exc:
            raise ConfigError(str(exc.args[0])) from None
        name, _, script = backend.partition(":")
        if not (backend == "http" or (name == "mock" and script in SCRIPTS)):
            raise ConfigError(f"--backend must be 'http' or 'mock:<script>' with script in {', '.join(SCRIPTS)}")
        kind = AgentKind(persona, backend, mock_switch_bank, conf.backend.chat_base_url)
        default_reps, default_id = r.repetitions, f"{persona.lower()}-{backend.replace(':', '-')}"
    else:
        kind, default_reps, default_id = policy, r.benchmark_repetitions, policy
    days = _parse_days(blackout, r.blackout_days)
    schedule = InterventionSchedule.treatment(days) if (blackout is not None or paired) else InterventionSchedule()
    b = conf.backend
    params = ChatBackendParams(b.temperature, b.max_tokens, b.chat_model, b.timeout, b.max_retries)
    try:
        spec = RunSpec(
            run_id=run_id or default_id,
            scenario=_fixed_path(conf, path_seed, path_file),
            policy_kind=kind,
            repetitions=reps if reps is not None else default_reps,
            intervention=schedule,
            base_seed=r.base_seed if base_seed is None else base_seed,
            cfg=conf.battery,
            model=conf.prices,
            params=params,
            workers=workers or r.workers,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out_dir = Path(out or conf.output_dir)
    results = run_intervention_pair(spec, out_dir, blackout_days=days) if paired else (run_monte_carlo(spec, out_dir),)
    for res in results:
        st = res.stats
        click.echo(
            f"{res.run_dir}: n={st.n} failures={st.failure_count} "
            f"mean terminal reward={st.mean_terminal_reward / 100:.6f} sd={st.sd_terminal_reward / 100:.6f}"
        )
    if any(res.stats.n == 0 for res in results):
        raise Failure("every repetition failed; see failed.jsonl", EXIT_BACKEND)


@main.command()
@click.option("--n-paths", type=int, default=2000, show_default=True, help="Number of sampled price paths.")
@click.option("--seed", type=int, default=0, show_default=True, help="Path i is sampled with seed + i.")
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="Complexity CSV [default: <output_dir>/scan.csv].")
@click.pass_obj
@_guard
def scan(conf: CliConfig, n_paths, seed, out) -> None:
    """Scenario complexity scan: rho per sampled path, Easy/Medium/Hard buckets."""
    if n_paths < 1:
        raise ConfigError("--n-paths must be >= 1")
    reports = scan_scenarios(conf.prices, conf.battery, n_paths, seed)
    rows = [
        [r.seed, "" if r.rho is None else f"{r.rho:.6f}", r.label or "", int(r.r_dp), int(r.r_greedy),
         ";".join(r.flags), "".join("H" if p == conf.prices.high_cents else "L" for p in r.path)]
        for r in reports
    ]
    path = Path(out) if out else Path(conf.output_dir) / "scan.csv"
    write_csv(path, ["seed", "rho", "label", "r_dp_cents", "r_greedy_cents", "flags", "path"], rows)
    counts = {b: sum(1 for r in reports if r.label == b) for b in ("Easy", "Medium", "Hard")}
    degenerate = sum(1 for r in reports if r.degenerate)
    click.echo(f"thresholds: Easy < {EASY_MAX} <= Medium < {MEDIUM_MAX} <= Hard")
    click.echo(" ".join(f"{b}={n}" for b, n in counts.items()) + f" degenerate={degenerate}")
    if any(r.rho is not None for r in reports):
        for ex, r in nearest_to_exemplars(reports, REFERENCE_RHOS).items():
            click.echo(f"nearest to {ex}: rho={r.rho:.6f} ({r.label}, seed {r.seed})")
    click.echo(f"wrote {path}")


@main.command()
@click.option("--runs", "runs", multiple=True, required=True, type=click.Path(file_okay=False),
              help="Run directory (repeatable).")
@click.option("--k", type=int, default=None, help="Number of clusters [default: analysis.k].")
@click.option("--mode", type=click.Choice(["tfidf", "embed"]), default="tfidf", show_default=True,
              help="Vectorize with TF-IDF, or call the embeddings endpoint.")
@click.option("--cluster-space", type=click.Choice(["embedding", "tsne"]), default=None,
              help="Cluster the document vectors or the 2-D t-SNE layout [default: analysis.cluster_space].")
@click.option("--no-tsne", is_flag=True, help="Skip the t-SNE layout (and tsne.csv).")
@click.option("--iterations", type=int, default=None, help="t-SNE iterations [default: analysis.iterations].")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for t-SNE and k-means.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Report directory [default: <output_dir>/analysis].")
@click.pass_obj
@_guard
def analyze(conf: CliConfig, runs, k, mode, cluster_space, no_tsne, iterations, seed, out) -> None:
    """Cluster agent transcripts; write cluster, keyword, shift and t-SNE reports."""
    from .text import HttpEmbedder, load_documents, write_analysis
    from .text import analyze as run_analysis

    a = conf.analysis
    space = cluster_space or a.cluster_space
    if no_tsne and space == "tsne":
        raise ConfigError("--no-tsne conflicts with clustering in t-SNE space")
    docs = load_documents([Path(d) for d in runs])
    if not docs:
        raise StorageError("the given runs contain no agent text")
    embedder = None
    if mode == "embed":
        embedder = HttpEmbedder(conf.backend.embed_model, conf.backend.embed_base_url,
                                timeout=conf.backend.timeout, max_retries=conf.backend.max_retries)
    k = k if k is not None else a.k
    if not 1 <= k <= len(docs):
        raise ConfigError(f"--k must lie in 1..{len(docs)}")
    result = run_analysis(docs, k=k, seed=seed, embedder=embedder, pca_dims=a.pca_dims, perplexity=a.perplexity,
                          iterations=iterations or a.iterations, cluster_space=space, top_m=a.top_m,
                          run_tsne=not no_tsne)
    out_dir = Path(out) if out else Path(conf.output_dir) / "analysis"
    for path in write_analysis(result, out_dir):
        click.echo(f"wrote {path}")
    for c, terms in sorted(result.clusters.keywords.items()):
        size = int((result.clusters.labels == c).sum())
        click.echo(f"cluster {c} ({size} docs): {', '.join(t for t, _ in terms)}")
    if result.shift is not None:
        for p in sorted(result.shift.deltas):
            c, d = result.shift.dominant_delta(p)
            click.echo(f"{p}: dominant blackout cluster {c}, delta {d:+.3f}")


@main.command()
@click.option("--runs", "runs", multiple=True, required=True, type=click.Path(file_okay=False),
              help="Run directory (repeatable); one curve or panel per run.")
@click.option("--analysis", "analysis_dir", type=click.Path(file_okay=False), default=None,
              help="Directory from `analyze` whose tsne.csv becomes a scatter plot.")
@click.option("--out", type=click.Path(file_okay=False), default=None,
              help="Figure directory [default: <output_dir>/report].")
@click.pass_obj
@_guard
def report(conf: CliConfig, runs, analysis_dir, out) -> None:
    """Render SVG figures and their CSV data from run directories."""
    from .report import render_reports

    out_dir = Path(out) if out else Path(conf.output_dir) / "report"
    for path in render_reports([Path(d) for d in runs], out_dir, Path(analysis_dir) if analysis_dir else None):
        click.echo(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
