"""Run persistence: JSONL day records, a JSON manifest and a CSV summary.

Layout of one run directory::

    runs/<run_id>/manifest.json
    runs/<run_id>/records.jsonl     successful repetitions, one record per day
    runs/<run_id>/failed.jsonl      partial records of aborted repetitions
    runs/<run_id>/summary.csv
"""

from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import asdict, dataclass, fields
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable

from . import __version__
from .env import Action, BatteryConfig, EnvState, InterventionSchedule, step

SCHEMA_VERSION = 1


class StorageError(Exception):
    pass


class SchemaViolation(StorageError):
    pass


class CorruptLine(StorageError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class VersionMismatch(StorageError):
    pass


@dataclass(frozen=True)
class DayRecord:
    schema_version: int
    run_id: str
    repetition: int
    persona: str
    day: int
    price_cents: int
    soc_before: int
    soc_after: int
    action: str
    reward_cents: int
    cum_reward_cents: int
    in_blackout: bool
    thoughts: str
    reflection: str
    journal: str
    backend_model: str
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DayRecord":
        names = [f.name for f in fields(cls)]
        missing = [n for n in names if n not in d]
        if missing:
            raise SchemaViolation(f"missing fields {missing}")
        return cls(**{n: d[n] for n in names})


_TYPES = {
    "schema_version": int,
    "run_id": str,
    "repetition": int,
    "persona": str,
    "day": int,
    "price_cents": int,
    "soc_before": int,
    "soc_after": int,
    "action": str,
    "reward_cents": int,
    "cum_reward_cents": int,
    "in_blackout": bool,
    "thoughts": str,
    "reflection": str,
    "journal": str,
    "backend_model": str,
    "seed": int,
}


def validate_record(record: DayRecord, cfg: BatteryConfig) -> None:
    for name, typ in _TYPES.items():
        value = getattr(record, name)
        if (typ is int and isinstance(value, bool)) or not isinstance(value, typ):
            raise SchemaViolation(f"{name}={value!r} is not {typ.__name__}")
    if record.schema_version != SCHEMA_VERSION:
        raise VersionMismatch(f"record schema {record.schema_version}, expected {SCHEMA_VERSION}")
    try:
        action = Action(record.action)
    except ValueError:
        raise SchemaViolation(f"unknown action {record.action!r}") from None
    if not 1 <= record.day <= cfg.horizon:
        raise SchemaViolation(f"day {record.day} outside 1..{cfg.horizon}")
    u = action.energy(record.soc_before, cfg)
    if record.soc_after != record.soc_before - u:
        raise SchemaViolation(
            f"soc_after={record.soc_after} but soc_before - u = {record.soc_before - u}"
        )
    if not cfg.floor <= record.soc_after <= cfg.capacity:
        raise SchemaViolation(f"soc_after={record.soc_after} outside battery bounds")
    expected_reward = 0 if record.in_blackout else record.price_cents * u
    if record.reward_cents != expected_reward:
        raise SchemaViolation(f"reward {record.reward_cents} != price * u = {expected_reward}")


class RecordSink:
    """Appends records of one run; safe to share between worker threads."""

    def __init__(self, run_dir: Path, cfg: BatteryConfig, filename: str = "records.jsonl"):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.path = self.run_dir / filename
        self.cfg = cfg
        self.count = 0
        self._lock = threading.Lock()
        self.path.write_text("", encoding="utf-8")

    def append(self, record: DayRecord) -> int:
        validate_record(record, self.cfg)
        line = record.to_json() + "\n"
        with self._lock:
            try:
                with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                    fh.write(line)
            except OSError as exc:
                raise StorageError(f"cannot append to {self.path}: {exc}") from exc
            self.count += 1
            return self.count


def append_record(sink: RecordSink, record: DayRecord) -> int:
    """Validate and append; returns the running record count as acknowledgment."""
    return sink.append(record)


@dataclass
class RunManifest:
    run_id: str
    spec: dict[str, Any]
    code_version: str = __version__
    created_at: str = ""
    record_count: int = 0
    failure_count: int = 0
    schema_version: int = SCHEMA_VERSION

    def battery(self) -> BatteryConfig:
        return BatteryConfig(**self.spec["cfg"])

    def schedule(self) -> InterventionSchedule:
        return InterventionSchedule(frozenset(self.spec.get("blackout_days", [])))


def write_manifest(run_dir: Path, manifest: RunManifest) -> Path:
    if not manifest.created_at:
        manifest.created_at = datetime.now(timezone.utc).isoformat(timespec="seconds")
    path = Path(run_dir) / "manifest.json"
    path.write_text(json.dumps(asdict(manifest), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def read_manifest(run_dir: Path) -> RunManifest:
    path = Path(run_dir) / "manifest.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise StorageError(f"no manifest at {path}") from None
    except json.JSONDecodeError as exc:
        raise StorageError(f"manifest {path} is not valid JSON: {exc}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise VersionMismatch(f"manifest schema {doc.get('schema_version')}, expected {SCHEMA_VERSION}")
    return RunManifest(**doc)


def read_records(path: Path, cfg: BatteryConfig) -> list[DayRecord]:
    records = []
    with Path(path).open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.endswith("\n"):
                raise CorruptLine(line_no, "truncated line (no newline terminator)")
            try:
                record = DayRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, TypeError, SchemaViolation) as exc:
                raise CorruptLine(line_no, str(exc)) from None
            try:
                validate_record(record, cfg)
            except VersionMismatch:
                raise
            except SchemaViolation as exc:
                raise CorruptLine(line_no, str(exc)) from None
            records.append(record)
    return records


def load_run(run_dir: Path) -> tuple[RunManifest, list[DayRecord]]:
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    records = read_records(run_dir / "records.jsonl", manifest.battery())
    return manifest, records


def replay_mismatches(
    records: Iterable[DayRecord], cfg: BatteryConfig, schedule: InterventionSchedule
) -> list[tuple[int, int, str]]:
    """Re-run each repetition's actions through the environment.

    Returns (repetition, day, reason) for every record the environment does not
    reproduce exactly.
    """
    by_rep: dict[int, list[DayRecord]] = {}
    for r in records:
        by_rep.setdefault(r.repetition, []).append(r)
    problems = []
    for rep, recs in sorted(by_rep.items()):
        recs.sort(key=lambda r: r.day)
        state = EnvState(day=1, soc=cfg.initial_soc, in_blackout=schedule.is_blackout(1))
        for r in recs:
            if r.day != state.day:
                problems.append((rep, r.day, f"expected day {state.day}"))
                break
            if r.soc_before != state.soc or r.in_blackout != state.in_blackout:
                problems.append((rep, r.day, "state before step differs"))
            try:
                out = step(state, Action(r.action), r.price_cents, cfg, schedule)
            except ValueError as exc:
                problems.append((rep, r.day, str(exc)))
                break
            nxt = out.next_state
            if (nxt.soc, out.reward, nxt.cum_reward) != (r.soc_after, r.reward_cents, r.cum_reward_cents):
                problems.append((rep, r.day, "step outcome differs"))
            state = nxt
    return problems


def csv_text(header: list[str], rows: Iterable[list[Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def write_csv(path: Path, header: list[str], rows: Iterable[list[Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(csv_text(header, rows), encoding="utf-8")
    return path
