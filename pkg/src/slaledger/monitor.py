"""Monitoring-agent workload model.

The broker is replaced by a ``FaultSchedule``: outage windows plus request
rates. An agent wakes every reporting interval, derives one incident report
from the schedule and submits it to the contract.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

from .clock import PRIO_CLIENT
from .contract import IncidentReport
from .ledger import Ledger, TxHandle, Validity

MS = 1000


class SubmissionMode(str, enum.Enum):
    AWAIT_COMMIT = "awaitcommit"
    FIRE_AND_FORGET = "fireandforget"


@dataclass(frozen=True)
class FaultSchedule:
    """Outage windows in simulated seconds; rates are counts per interval.

    A report stamped ``t`` covers the interval ending at ``t``, so it falls
    in an outage when ``start < t <= end``.
    """

    outages: tuple[tuple[int, int], ...] = ()
    request_rate: int = 10
    fail_rate_during_outage: int = 10

    def __post_init__(self) -> None:
        object.__setattr__(self, "outages", tuple(sorted((int(s), int(e)) for s, e in self.outages)))
        if self.request_rate < 0 or self.fail_rate_during_outage < 0:
            raise ValueError("rates must be non-negative")
        prev_end = None
        for start, end in self.outages:
            if start < 0 or end <= start:
                raise ValueError(f"bad outage window ({start}, {end})")
            if prev_end is not None and start < prev_end:
                raise ValueError(f"outage ({start}, {end}) overlaps an earlier one")
            prev_end = end

    def check_horizon(self, horizon: int) -> None:
        for start, end in self.outages:
            if end > horizon:
                raise ValueError(f"outage ({start}, {end}) runs past the horizon {horizon}")

    def in_outage(self, now: int) -> bool:
        return any(start < now <= end for start, end in self.outages)


def tick(now: int, schedule: FaultSchedule, *, agent_id: str = "agent-0") -> IncidentReport | None:
    fail = schedule.fail_rate_during_outage if schedule.in_outage(now) else 0
    if fail == 0 and schedule.request_rate == 0:
        return None
    return IncidentReport(fail_delta=fail, valid_delta=schedule.request_rate, observed_at=now, agent_id=agent_id)


@dataclass
class SubmissionSummary:
    emitted: int = 0
    submitted: int = 0
    valid: int = 0
    invalid_mvcc: int = 0
    timed_out: int = 0
    rejected: int = 0
    fail_submitted: int = 0
    valid_submitted: int = 0
    handles: list[TxHandle] = field(default_factory=list, repr=False)

    def record(self, handle: TxHandle) -> None:
        if handle.error is not None:
            self.rejected += 1
        elif handle.validity is Validity.VALID:
            self.valid += 1
        elif handle.validity is Validity.INVALID_MVCC:
            self.invalid_mvcc += 1
        elif handle.validity is Validity.TIMED_OUT:
            self.timed_out += 1

    def __add__(self, other: "SubmissionSummary") -> "SubmissionSummary":
        out = SubmissionSummary()
        for name in ("emitted", "submitted", "valid", "invalid_mvcc", "timed_out", "rejected",
                     "fail_submitted", "valid_submitted"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.handles = self.handles + other.handles
        return out


class Agent:
    """One monitoring client on the ledger's event loop.

    In await-commit mode at most one report is in flight; reports that come
    due meanwhile wait in a backlog. ``hold_after`` keeps reports stamped
    after a cycle boundary local until the cycle has been assessed.
    """

    def __init__(
        self,
        ledger: Ledger,
        schedule: FaultSchedule,
        *,
        horizon: int,
        interval: int = 60,
        agent_id: str = "agent-0",
        mode: SubmissionMode = SubmissionMode.AWAIT_COMMIT,
    ):
        self.ledger = ledger
        self.schedule = schedule
        self.horizon = horizon
        self.interval = interval
        self.agent_id = agent_id
        self.mode = mode
        self.summary = SubmissionSummary()
        self._backlog: deque[IncidentReport] = deque()
        self._in_flight: dict[str, IncidentReport] = {}
        self._hold_after: int | None = None

    def start(self) -> None:
        if self.interval <= self.horizon:
            self.ledger.loop.schedule_at(self.interval * MS, self._tick, priority=PRIO_CLIENT)

    def hold_after(self, boundary: int | None) -> None:
        self._hold_after = boundary
        if boundary is None:
            self._pump()

    def settled_through(self, t: int) -> bool:
        """No report stamped at or before ``t`` is still unresolved."""
        if any(r.observed_at <= t for r in self._backlog):
            return False
        return not any(r.observed_at <= t for r in self._in_flight.values())

    def _tick(self) -> None:
        now = self.ledger.now // MS
        nxt = now + self.interval
        if nxt <= self.horizon:
            self.ledger.loop.schedule_at(nxt * MS, self._tick, priority=PRIO_CLIENT)
        report = tick(now, self.schedule, agent_id=self.agent_id)
        if report is not None:
            self.summary.emitted += 1
            self._backlog.append(report)
            self._pump()

    def _pump(self) -> None:
        while self._backlog:
            if self.mode is SubmissionMode.AWAIT_COMMIT and self._in_flight:
                return
            report = self._backlog[0]
            if self._hold_after is not None and report.observed_at > self._hold_after:
                return
            self._backlog.popleft()
            handle = self.ledger.submit("report_incident", report.as_args(), client=self.agent_id)
            self._in_flight[handle.tx_id] = report
            self.summary.submitted += 1
            self.summary.fail_submitted += report.fail_delta
            self.summary.valid_submitted += report.valid_delta
            self.summary.handles.append(handle)
            handle.add_done_callback(self._on_done)

    def _on_done(self, handle: TxHandle) -> None:
        self._in_flight.pop(handle.tx_id, None)
        self.summary.record(handle)
        self._pump()


def run_agents(
    schedules: Sequence[tuple[str, FaultSchedule]],
    ledger: Ledger,
    horizon: int,
    *,
    interval: int = 60,
    mode: SubmissionMode = SubmissionMode.AWAIT_COMMIT,
) -> dict[str, SubmissionSummary]:
    agents = [
        Agent(ledger, schedule, horizon=horizon, interval=interval, agent_id=agent_id, mode=mode)
        for agent_id, schedule in schedules
    ]
    for agent in agents:
        agent.start()
    ledger.run()
    return {agent.agent_id: agent.summary for agent in agents}


def run_agent(
    schedule: FaultSchedule,
    ledger: Ledger,
    horizon: int,
    *,
    interval: int = 60,
    agent_id: str = "agent-0",
    mode: SubmissionMode = SubmissionMode.AWAIT_COMMIT,
) -> SubmissionSummary:
    return run_agents([(agent_id, schedule)], ledger, horizon, interval=interval, mode=mode)[agent_id]
