"""Run configuration shared by every CLI subcommand."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .bench import BenchConfig
from .kvconfig import ConfigError, parse_kv_file, parse_kv_text, split_sections
from .ledger import BatchingConfig
from .monitor import FaultSchedule, SubmissionMode
from .sla import SlaTerms, terms_from_mapping

DEFAULTS_TEXT = """\
seed = 0
out = out
sla.metric_id = mqtt_error_rate
sla.threshold_percent = 10
sla.billing_cycle_s = 2592000
sla.penalty_percent = 10
sla.reporting_interval_s = 60
batching.batch_timeout_ms = 1000
batching.max_tx_per_block = 10
batching.endorsement_delay_ms = 100
batching.commit_delay_ms = 200
batching.execution_timeout_s = 30
schedule.outages = none            # e.g. 0-2592000, 86400-90000 (seconds)
schedule.request_rate = 10
schedule.fail_rate_during_outage = 10
schedule.agents = 1
schedule.mode = awaitcommit
schedule.cycles = 1
bench.workers = 1
bench.total_transactions = 300
bench.send_rate = 1
bench.jitter_ms = 50
bench.mode = awaitcommit
validate.transactions = 43200
validate.fail_delta = 1
validate.valid_delta = 10
validate.corpus_size = 200
"""


@dataclass(frozen=True)
class ScheduleConfig:
    schedule: FaultSchedule = field(default_factory=FaultSchedule)
    agents: int = 1
    mode: SubmissionMode = SubmissionMode.AWAIT_COMMIT
    cycles: int = 1


@dataclass(frozen=True)
class ValidateConfig:
    transactions: int = 43_200
    fail_delta: int = 1
    valid_delta: int = 10
    corpus_size: int = 200


@dataclass(frozen=True)
class RunConfig:
    sla: SlaTerms = field(default_factory=SlaTerms)
    batching: BatchingConfig = field(default_factory=BatchingConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    validate: ValidateConfig = field(default_factory=ValidateConfig)
    seed: int = 0
    out: Path = Path("out")


def parse_outages(raw: str) -> tuple[tuple[int, int], ...]:
    raw = raw.strip()
    if raw.lower() in ("", "none"):
        return ()
    windows = []
    for part in raw.split(","):
        start, sep, end = part.strip().partition("-")
        if not sep:
            raise ValueError(f"outage window {part.strip()!r} is not start-end")
        windows.append((int(start), int(end)))
    return tuple(windows)


def _take(section: dict[str, str], prefix: str, parsers: dict[str, Callable[[str], object]]) -> dict:
    out = {}
    for key, raw in section.items():
        if key not in parsers:
            raise ConfigError(f"unknown key {prefix}.{key}")
        try:
            out[key] = parsers[key](raw)
        except ValueError as exc:
            raise ConfigError(f"bad value for {prefix}.{key}: {raw!r} ({exc})") from None
    return out


def _mode(raw: str) -> SubmissionMode:
    return SubmissionMode(raw.strip().lower())


def build_config(values: dict[str, str]) -> RunConfig:
    sections = split_sections(values)
    unknown = set(sections) - {"", "sla", "batching", "schedule", "bench", "validate"}
    if unknown:
        bad = sorted(k for k in values if k.rpartition(".")[0] in unknown)
        raise ConfigError(f"unknown key {bad[0]}")

    top = _take(sections.get("", {}), "", {"seed": int, "out": Path})
    sla_terms = terms_from_mapping(sections.get("sla", {}), prefix="sla.")

    b = _take(sections.get("batching", {}), "batching", {
        "batch_timeout_ms": int, "max_tx_per_block": int, "endorsement_delay_ms": int,
        "commit_delay_ms": int, "execution_timeout_s": float,
    })
    if "execution_timeout_s" in b:
        b["execution_timeout_ms"] = round(b.pop("execution_timeout_s") * 1000)

    s = _take(sections.get("schedule", {}), "schedule", {
        "outages": parse_outages, "request_rate": int, "fail_rate_during_outage": int,
        "agents": int, "mode": _mode, "cycles": int,
    })
    bn = _take(sections.get("bench", {}), "bench", {
        "workers": int, "total_transactions": int, "send_rate": float, "jitter_ms": int, "mode": _mode,
    })
    v = _take(sections.get("validate", {}), "validate", {
        "transactions": int, "fail_delta": int, "valid_delta": int, "corpus_size": int,
    })

    try:
        batching = BatchingConfig(**b)
        schedule = FaultSchedule(**{k: s.pop(k) for k in ("outages", "request_rate", "fail_rate_during_outage") if k in s})
        sched_cfg = ScheduleConfig(schedule=schedule, **s)
        if sched_cfg.agents < 1 or sched_cfg.cycles < 1:
            raise ValueError("schedule.agents and schedule.cycles must be at least 1")
        schedule.check_horizon(sla_terms.billing_cycle * sched_cfg.cycles)
        if "mode" in bn:
            bn["submission_mode"] = bn.pop("mode")
        bench = BenchConfig(batching=batching, seed=top.get("seed", 0), **bn)
        validate = ValidateConfig(**v)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return RunConfig(sla=sla_terms, batching=batching, schedule=sched_cfg, bench=bench,
                     validate=validate, **top)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return build_config({})
    return build_config(parse_kv_file(path))


def loads_config(text: str) -> RunConfig:
    return build_config(parse_kv_text(text))
