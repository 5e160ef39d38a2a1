"""Fixed-rate benchmark driver for the report-incident transaction.

Each logical worker sends reports at ``send_rate`` per second with a small
seeded jitter. In fire-and-forget mode workers never wait for commits, so
reports endorsed on the same snapshot collide in MVCC validation. In
await-commit mode a worker holds its next send until the previous report
has resolved.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

from .clock import PRIO_CLIENT
from .contract import IncidentReport, SlaContract
from .ledger import BatchingConfig, Block, Ledger, TxHandle, Validity
from .monitor import SubmissionMode

PRESETS: dict[str, tuple[int, int]] = {
    # name: (batch timeout ms, max transactions per block)
    "T1": (1000, 10),
    "T2": (500, 10),
    "T3": (1000, 1),
    "T4": (500, 1),
}


@dataclass(frozen=True)
class BenchConfig:
    workers: int = 1
    total_transactions: int = 300
    send_rate: float = 1.0
    batching: BatchingConfig = field(default_factory=BatchingConfig)
    submission_mode: SubmissionMode = SubmissionMode.AWAIT_COMMIT
    seed: int = 0
    jitter_ms: int = 50
    report: tuple[int, int] = (1, 10)
    label: str = "custom"

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.total_transactions < 1:
            raise ValueError("total_transactions must be at least 1")
        if self.send_rate <= 0:
            raise ValueError("send_rate must be positive")
        if not 0 <= self.jitter_ms < self.interval_ms:
            raise ValueError("jitter_ms must be non-negative and below the send interval")

    @property
    def interval_ms(self) -> int:
        return round(1000 / self.send_rate)

    @property
    def execution_timeout_ms(self) -> int:
        return self.batching.execution_timeout_ms

    def latency_bound_ms(self) -> int:
        """Worst case for a transaction that never queues behind a full block."""
        b = self.batching
        return b.endorsement_delay_ms + b.batch_timeout_ms + b.commit_delay_ms + self.interval_ms


def preset(name: str, **overrides) -> BenchConfig:
    key = name.upper()
    if key not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    timeout, size = PRESETS[key]
    batching = overrides.pop("batching", None) or BatchingConfig()
    batching = replace(batching, batch_timeout_ms=timeout, max_tx_per_block=size)
    return BenchConfig(batching=batching, label=key, **overrides)


@dataclass(frozen=True)
class TxRecord:
    tx_id: str
    worker: str
    submitted_at: float
    committed_at: float | None
    latency: float | None
    outcome: str
    block_height: int | None
    stale_reads: tuple[tuple[str, int, int], ...] = ()


@dataclass
class BenchResult:
    label: str
    success: int
    fail: int
    fail_breakdown: dict[str, int]
    latency_min: float | None
    latency_avg: float | None
    latency_max: float | None
    per_tx: list[TxRecord]
    config: BenchConfig

    @property
    def per_tx_latencies(self) -> list[float]:
        return [r.latency for r in self.per_tx if r.outcome == Validity.VALID.value]

    def to_record(self) -> dict:
        return {
            "label": self.label,
            "success": self.success,
            "fail": self.fail,
            "fail_breakdown": dict(self.fail_breakdown),
            "latency_min": self.latency_min,
            "latency_avg": self.latency_avg,
            "latency_max": self.latency_max,
            "config": {
                "workers": self.config.workers,
                "total_transactions": self.config.total_transactions,
                "send_rate": self.config.send_rate,
                "mode": self.config.submission_mode.value,
                "seed": self.config.seed,
                "jitter_ms": self.config.jitter_ms,
                "batching": asdict(self.config.batching),
            },
            "per_tx": [asdict(r) for r in self.per_tx],
        }


def stale_reads(blocks: Sequence[Block]) -> dict[str, tuple[tuple[str, int, int], ...]]:
    """For each MVCC-invalid transaction, the (key, version read, version current) that broke it."""
    versions: dict[str, int] = {}
    out = {}
    for block in blocks:
        for tx in block.transactions:
            if tx.validity is Validity.INVALID_MVCC:
                out[tx.tx_id] = tuple(
                    (k, v, versions.get(k, 0)) for k, v in tx.read_set if versions.get(k, 0) != v
                )
            elif tx.validity is Validity.VALID:
                for k, _ in tx.write_set:
                    versions[k] = versions.get(k, 0) + 1
    return out


class _Worker:
    def __init__(self, ledger: Ledger, config: BenchConfig, name: str, jitters: list[int]):
        self.ledger = ledger
        self.config = config
        self.name = name
        self.jitters = jitters
        self.sent = 0
        self.handles: list[TxHandle] = []

    def start(self) -> None:
        if self.jitters:
            self.ledger.loop.schedule_at(self.jitters[0], self._send, priority=PRIO_CLIENT)

    def _due(self, i: int) -> int:
        return i * self.config.interval_ms + self.jitters[i]

    def _send(self) -> None:
        fail, valid = self.config.report
        report = IncidentReport(fail, valid, observed_at=self.ledger.now // 1000, agent_id=self.name)
        handle = self.ledger.submit("report_incident", report.as_args(), client=self.name)
        self.handles.append(handle)
        self.sent += 1
        if self.sent >= len(self.jitters):
            return
        if self.config.submission_mode is SubmissionMode.FIRE_AND_FORGET:
            self.ledger.loop.schedule_at(self._due(self.sent), self._send, priority=PRIO_CLIENT)
        else:
            handle.add_done_callback(self._after_commit)

    def _after_commit(self, handle: TxHandle) -> None:
        when = max(self._due(self.sent), self.ledger.now)
        self.ledger.loop.schedule_at(when, self._send, priority=PRIO_CLIENT)


def run_bench(config: BenchConfig, ledger: Ledger | None = None) -> BenchResult:
    ledger = ledger or Ledger(SlaContract(), config.batching)
    if ledger.chain.next_height or ledger.state.keys():
        raise ValueError("run_bench needs a fresh ledger")
    rng = random.Random(config.seed)
    per_worker = [0] * config.workers
    for i in range(config.total_transactions):
        per_worker[i % config.workers] += 1
    workers = [
        _Worker(ledger, config, f"worker-{w}", [rng.randint(0, config.jitter_ms) for _ in range(count)])
        for w, count in enumerate(per_worker)
    ]
    for worker in workers:
        worker.start()
    ledger.run()

    stale = stale_reads(list(ledger.chain))
    records = []
    breakdown = {Validity.INVALID_MVCC.value: 0, Validity.TIMED_OUT.value: 0, "Rejected": 0}
    handles = sorted((h for w in workers for h in w.handles), key=lambda h: h.tx_id)
    for h in handles:
        outcome = "Rejected" if h.error is not None else h.validity.value
        if outcome != Validity.VALID.value:
            breakdown[outcome] += 1
        records.append(TxRecord(
            tx_id=h.tx_id,
            worker=h.client,
            submitted_at=h.submitted_at / 1000,
            committed_at=None if h.committed_at is None else h.committed_at / 1000,
            latency=None if h.latency_ms is None else h.latency_ms / 1000,
            outcome=outcome,
            block_height=h.block_height,
            stale_reads=stale.get(h.tx_id, ()),
        ))
    # integer ms until one final division keeps min <= avg <= max exact
    ok_ms = [h.latency_ms for h in handles if h.error is None and h.validity is Validity.VALID]
    return BenchResult(
        label=config.label,
        success=len(ok_ms),
        fail=len(records) - len(ok_ms),
        fail_breakdown=breakdown,
        latency_min=min(ok_ms) / 1000 if ok_ms else None,
        latency_avg=sum(ok_ms) / (1000 * len(ok_ms)) if ok_ms else None,
        latency_max=max(ok_ms) / 1000 if ok_ms else None,
        per_tx=records,
        config=config,
    )


@dataclass
class BenchReport:
    text: str
    records: list[dict]

    def to_json(self) -> str:
        return json.dumps(self.records, indent=2, sort_keys=True) + "\n"


def emit_report(results: Sequence[BenchResult]) -> BenchReport:
    if not results:
        raise ValueError("nothing to report")

    def secs(v):
        return "n/a" if v is None else f"{v:.2f}"

    rows = [
        ("", [r.label for r in results]),
        ("Success", [str(r.success) for r in results]),
        ("Fail", [str(r.fail) for r in results]),
        ("  InvalidMvcc", [str(r.fail_breakdown["InvalidMvcc"]) for r in results]),
        ("  TimedOut", [str(r.fail_breakdown["TimedOut"]) for r in results]),
        ("Max Latency (s)", [secs(r.latency_max) for r in results]),
        ("Avg Latency (s)", [secs(r.latency_avg) for r in results]),
        ("Min Latency (s)", [secs(r.latency_min) for r in results]),
    ]
    if any(r.fail_breakdown.get("Rejected") for r in results):
        rows.insert(5, ("  Rejected", [str(r.fail_breakdown["Rejected"]) for r in results]))
    head = max(len(name) for name, _ in rows)
    width = max(8, *(len(c) for _, cells in rows for c in cells))
    lines = [f"{name:<{head}} | " + " | ".join(f"{c:>{width}}" for c in cells) for name, cells in rows]
    lines.insert(1, "-" * len(lines[0]))
    return BenchReport("\n".join(lines) + "\n", [r.to_record() for r in results])
