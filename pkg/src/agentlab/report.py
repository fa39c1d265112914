"""Static figures as standalone SVG, each with the CSV it was drawn from.

Outputs for a set of runs:

    panels.svg          one column per run: mean SoC and mean cumulative reward (+-1 sd)
    soc_overlay.svg     mean SoC of every run on shared axes, blackout days shaded
    reward_overlay.svg  same for cumulative reward
    terminal_soc.svg    grouped histogram of end-of-horizon SoC
    daily_stats.csv     data behind the first three
    terminal_soc.csv    data behind the histogram
    tsne_scatter.svg/.csv  when an analysis directory with tsne.csv is given
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Sequence

from .harness import SummaryStats, summarize
from .storage import StorageError, load_run, write_csv

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf")


@dataclass
class RunSeries:
    run_id: str
    label: str
    horizon: int
    capacity: int
    blackout_days: tuple[int, ...]
    stats: SummaryStats


def _label(spec: dict) -> str:
    kind = spec.get("policy_kind")
    base = kind["agent"]["persona"] if isinstance(kind, dict) else str(kind)
    return f"{base} (blackout)" if spec.get("blackout_days") else base


def load_series(run_dir: Path) -> RunSeries:
    manifest, records = load_run(run_dir)
    if not records:
        raise StorageError(f"run {run_dir} has no completed repetitions")
    cfg = manifest.battery()
    stats = summarize(records, cfg, manifest.failure_count)
    return RunSeries(
        manifest.run_id,
        _label(manifest.spec),
        cfg.horizon,
        cfg.capacity,
        tuple(sorted(manifest.spec.get("blackout_days", []))),
        stats,
    )


# ------------------------------------------------------------------ SVG bits


def _f(x: float) -> str:
    return f"{x:.2f}"


class Frame:
    """Maps data coordinates into a pixel rectangle and draws axes."""

    def __init__(self, left, top, width, height, xlim, ylim):
        self.left, self.top, self.width, self.height = left, top, width, height
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim if ylim[1] > ylim[0] else (ylim[0] - 1, ylim[0] + 1)

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.width

    def py(self, y: float) -> float:
        return self.top + self.height - (y - self.y0) / (self.y1 - self.y0) * self.height

    def axes(self, title: str, xlabel: str, ylabel: str, xticks: Sequence[float], yticks: Sequence[float]) -> list[str]:
        b = self.top + self.height
        out = [
            f'<rect x="{_f(self.left)}" y="{_f(self.top)}" width="{_f(self.width)}" height="{_f(self.height)}" '
            'fill="none" stroke="#333"/>',
            f'<text x="{_f(self.left + self.width / 2)}" y="{_f(self.top - 8)}" text-anchor="middle" '
            f'font-size="13">{escape(title)}</text>',
            f'<text x="{_f(self.left + self.width / 2)}" y="{_f(b + 32)}" text-anchor="middle" font-size="11">'
            f"{escape(xlabel)}</text>",
            f'<text transform="translate({_f(self.left - 40)},{_f(self.top + self.height / 2)}) rotate(-90)" '
            f'text-anchor="middle" font-size="11">{escape(ylabel)}</text>',
        ]
        for t in xticks:
            x = self.px(t)
            out.append(f'<line x1="{_f(x)}" y1="{_f(b)}" x2="{_f(x)}" y2="{_f(b + 4)}" stroke="#333"/>')
            out.append(f'<text x="{_f(x)}" y="{_f(b + 16)}" text-anchor="middle" font-size="10">{t:g}</text>')
        for t in yticks:
            y = self.py(t)
            out.append(f'<line x1="{_f(self.left - 4)}" y1="{_f(y)}" x2="{_f(self.left)}" y2="{_f(y)}" stroke="#333"/>')
            out.append(f'<text x="{_f(self.left - 6)}" y="{_f(y + 3)}" text-anchor="end" font-size="10">{t:g}</text>')
        return out

    def shade_days(self, days: Sequence[int]) -> list[str]:
        # day d is the step from x = d to x = d + 1
        return [
            f'<rect x="{_f(self.px(d))}" y="{_f(self.top)}" width="{_f(self.px(d + 1) - self.px(d))}" '
            f'height="{_f(self.height)}" fill="#999" fill-opacity="0.2"/>'
            for d in days
        ]

    def band(self, xs, lo, hi, color: str) -> str:
        pts = [(self.px(x), self.py(y)) for x, y in zip(xs, hi)]
        pts += [(self.px(x), self.py(y)) for x, y in zip(reversed(xs), reversed(lo))]
        d = " ".join(f"{_f(a)},{_f(b)}" for a, b in pts)
        return f'<polygon points="{d}" fill="{color}" fill-opacity="0.18" stroke="none"/>'

    def line(self, xs, ys, color: str) -> str:
        d = " ".join(f"{_f(self.px(x))},{_f(self.py(y))}" for x, y in zip(xs, ys))
        return f'<polyline points="{d}" fill="none" stroke="{color}" stroke-width="2"/>'


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif">'
    )
    return "\n".join([head, f'<rect width="{width}" height="{height}" fill="white"/>', *body, "</svg>"]) + "\n"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1, 2, 2.5, 5, 10) if s * mag >= raw)
    start = step * -(-lo // step)
    out, t = [], start
    while t <= hi + 1e-9:
        out.append(round(t, 6) + 0.0)  # no "-0" labels
        t += step
    return out


def _legend(x: float, y: float, items: Sequence[tuple[str, str]]) -> list[str]:
    out = []
    for i, (label, color) in enumerate(items):
        yy = y + 16 * i
        out.append(f'<rect x="{_f(x)}" y="{_f(yy - 9)}" width="12" height="10" fill="{color}"/>')
        out.append(f'<text x="{_f(x + 16)}" y="{_f(yy)}" font-size="11">{escape(label)}</text>')
    return out


def _series(s: RunSeries, what: str):
    xs = list(range(1, s.horizon + 2))
    if what == "soc":
        return xs, s.stats.mean_soc_by_day, s.stats.sd_soc_by_day
    scale = 100.0  # cents to dollars
    return (
        xs,
        [v / scale for v in s.stats.mean_cum_reward_by_day],
        [v / scale for v in s.stats.sd_cum_reward_by_day],
    )


def _ylim(series: Sequence[RunSeries], what: str) -> tuple[float, float]:
    lo, hi = 0.0, 0.0
    for s in series:
        _, m, sd = _series(s, what)
        lo = min(lo, *(a - b for a, b in zip(m, sd)))
        hi = max(hi, *(a + b for a, b in zip(m, sd)))
    if what == "soc":
        hi = max(hi, max(s.capacity for s in series))
    return lo, hi


_YLABEL = {"soc": "state of charge (kWh)", "reward": "cumulative reward ($)"}
_TITLE = {"soc": "Mean SoC by day", "reward": "Mean cumulative reward by day"}
_SHORT = {"soc": "mean SoC", "reward": "mean cumulative reward"}


def _curve(frame: Frame, s: RunSeries, what: str, color: str) -> list[str]:
    xs, m, sd = _series(s, what)
    return [
        frame.band(xs, [a - b for a, b in zip(m, sd)], [a + b for a, b in zip(m, sd)], color),
        frame.line(xs, m, color),
    ]


def panels_svg(series: Sequence[RunSeries]) -> str:
    """Grid with one column per run; rows are SoC and cumulative reward."""
    pw, ph, mx, my = 300, 200, 70, 60
    width, height = mx + len(series) * (pw + mx), 2 * (ph + my) + my
    body = []
    T = max(s.horizon for s in series)
    for row, what in enumerate(("soc", "reward")):
        ylim = _ylim(series, what)
        for col, s in enumerate(series):
            fr = Frame(mx + col * (pw + mx), my + row * (ph + my), pw, ph, (1, T + 1), ylim)
            body += fr.shade_days(s.blackout_days)
            body += fr.axes(f"{s.label}: {_SHORT[what]}", "day", _YLABEL[what],
                            _ticks(1, T + 1), _ticks(*ylim))
            body += _curve(fr, s, what, PALETTE[col % len(PALETTE)])
    return _svg(width, height, body)


def overlay_svg(series: Sequence[RunSeries], what: str) -> str:
    width, height = 900, 420
    T = max(s.horizon for s in series)
    ylim = _ylim(series, what)
    fr = Frame(80, 50, 460, 320, (1, T + 1), ylim)
    days = sorted({d for s in series for d in s.blackout_days})
    body = fr.shade_days(days)
    body += fr.axes(_TITLE[what], "day", _YLABEL[what], _ticks(1, T + 1), _ticks(*ylim))
    items = []
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        body += _curve(fr, s, what, color)
        items.append((f"{s.label} [{s.run_id}]", color))
    body += _legend(560, 70, items)
    return _svg(width, height, body)


def terminal_hist_svg(series: Sequence[RunSeries]) -> str:
    width, height = 900, 420
    levels = sorted({k for s in series for k in s.stats.terminal_soc_histogram})
    shares = [
        [s.stats.terminal_soc_histogram.get(k, 0) / max(s.stats.n, 1) for k in levels] for s in series
    ]
    top = max(max(row) for row in shares) or 1.0
    fr = Frame(80, 50, 460, 320, (levels[0] - 0.5, levels[-1] + 0.5), (0.0, top))
    body = fr.axes("Terminal SoC distribution", "terminal state of charge (kWh)", "share of repetitions",
                   levels, _ticks(0.0, top))
    bw = (fr.px(1) - fr.px(0)) * 0.8 / len(series)
    items = []
    for i, (s, row) in enumerate(zip(series, shares)):
        color = PALETTE[i % len(PALETTE)]
        for k, v in zip(levels, row):
            x = fr.px(k - 0.4) + i * bw
            body.append(
                f'<rect x="{_f(x)}" y="{_f(fr.py(v))}" width="{_f(bw)}" height="{_f(fr.py(0) - fr.py(v))}" '
                f'fill="{color}"/>'
            )
        items.append((f"{s.label} [{s.run_id}]", color))
    body += _legend(560, 70, items)
    return _svg(width, height, body)


def tsne_svg(rows: Sequence[dict], color_by: str = "persona") -> str:
    width, height = 720, 520
    xs = [float(r["x"]) for r in rows]
    ys = [float(r["y"]) for r in rows]
    pad_x = (max(xs) - min(xs)) * 0.05 or 1.0
    pad_y = (max(ys) - min(ys)) * 0.05 or 1.0
    fr = Frame(60, 50, 480, 420, (min(xs) - pad_x, max(xs) + pad_x), (min(ys) - pad_y, max(ys) + pad_y))
    body = fr.axes(f"t-SNE layout by {color_by}", "t-SNE 1", "t-SNE 2", [], [])
    groups = sorted({r[color_by] for r in rows}, key=str)
    color = {g: PALETTE[i % len(PALETTE)] for i, g in enumerate(groups)}
    for r, x, y in zip(rows, xs, ys):
        body.append(
            f'<circle cx="{_f(fr.px(x))}" cy="{_f(fr.py(y))}" r="2.5" fill="{color[r[color_by]]}" fill-opacity="0.7"/>'
        )
    name = "cluster" if color_by == "label" else color_by
    body += _legend(560, 70, [(f"{name} {g}", color[g]) for g in groups])
    return _svg(width, height, body)


# ------------------------------------------------------------------ driver


def daily_rows(series: Sequence[RunSeries]) -> list[list[str]]:
    rows = []
    for s in series:
        st = s.stats
        for i in range(s.horizon + 1):
            rows.append([
                s.run_id, s.label, str(i + 1),
                f"{st.mean_soc_by_day[i]:.6f}", f"{st.sd_soc_by_day[i]:.6f}",
                f"{st.mean_cum_reward_by_day[i] / 100:.6f}", f"{st.sd_cum_reward_by_day[i] / 100:.6f}",
                "1" if i + 1 in s.blackout_days else "0",
            ])
    return rows


def terminal_rows(series: Sequence[RunSeries]) -> list[list[str]]:
    rows = []
    for s in series:
        for k, c in sorted(s.stats.terminal_soc_histogram.items()):
            rows.append([s.run_id, s.label, str(k), str(c), f"{c / max(s.stats.n, 1):.6f}"])
    return rows


def render_reports(run_dirs: Sequence[Path], out_dir: Path, analysis_dir: Path | None = None) -> list[Path]:
    if not run_dirs:
        raise StorageError("no run directories given")
    series = [load_series(Path(d)) for d in run_dirs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_csv(out / "daily_stats.csv",
                  ["run_id", "label", "day", "mean_soc", "sd_soc", "mean_cum_reward", "sd_cum_reward", "blackout"],
                  daily_rows(series)),
        write_csv(out / "terminal_soc.csv", ["run_id", "label", "soc", "count", "share"], terminal_rows(series)),
    ]
    figures = {
        "panels.svg": panels_svg(series),
        "soc_overlay.svg": overlay_svg(series, "soc"),
        "reward_overlay.svg": overlay_svg(series, "reward"),
        "terminal_soc.svg": terminal_hist_svg(series),
    }
    if analysis_dir is not None:
        src = Path(analysis_dir) / "tsne.csv"
        if not src.exists():
            raise StorageError(f"no tsne.csv in {analysis_dir}")
        with src.open(encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise StorageError(f"{src} has no rows")
        figures["tsne_scatter.svg"] = tsne_svg(rows, "persona")
        figures["tsne_clusters.svg"] = tsne_svg(rows, "label")
        header = ["doc_id", "x", "y", "label", "persona", "condition"]
        written.append(write_csv(out / "tsne_scatter.csv", header, [[r[h] for h in header] for r in rows]))
    for name, text in figures.items():
        path = out / name
        path.write_text(text, encoding="utf-8")
        written.append(path)
    return written
