"""End-to-end run: agents report for whole billing cycles, a cycle clock
assesses compliance at every boundary."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .blocklog import export_block_log, export_snapshot
from .clock import PRIO_DRIVER
from .config import RunConfig
from .contract import SlaContract, query_counters, query_verdicts
from .ledger import Ledger, TxHandle, Validity
from .monitor import MS, Agent, SubmissionSummary
from .sla import ComplianceVerdict

BLOCK_LOG = "blocks.log"
SNAPSHOT = "snapshot.json"
VERDICTS = "verdicts.json"


@dataclass
class SimulationResult:
    ledger: Ledger
    verdicts: list[ComplianceVerdict]
    summaries: dict[str, SubmissionSummary]
    counters_after_boundary: list[tuple[int, int]] = field(default_factory=list)
    assess_retries: int = 0

    def summary_dict(self) -> dict:
        return {
            "verdicts": [v.to_dict() for v in self.verdicts],
            "counters_after_boundary": [list(c) for c in self.counters_after_boundary],
            "assess_retries": self.assess_retries,
            "blocks": len(self.ledger.chain),
            "tip_hash": self.ledger.chain.tip_hash,
            "agents": {
                name: {k: v for k, v in vars(s).items() if k != "handles"}
                for name, s in sorted(self.summaries.items())
            },
        }


class CycleClock:
    """Submits ``assess_compliance`` once every report of the cycle has resolved.

    Agents hold reports stamped after the boundary until the verdict commits.
    """

    def __init__(self, ledger: Ledger, agents: list[Agent], billing_cycle: int, cycles: int):
        self.ledger = ledger
        self.agents = agents
        self.billing_cycle = billing_cycle
        self.cycles = cycles
        self.cycle = 0
        self.waiting_for: int | None = None
        self.counters_after: list[tuple[int, int]] = []
        self.retries = 0
        ledger.add_listener(self._on_resolved)

    def start(self) -> None:
        self._schedule_boundary()

    def _boundary(self) -> int:
        return (self.cycle + 1) * self.billing_cycle

    def _schedule_boundary(self) -> None:
        if self.cycle < self.cycles:
            self.ledger.loop.schedule_at(self._boundary() * MS, self._at_boundary, priority=PRIO_DRIVER)

    def _at_boundary(self) -> None:
        boundary = self._boundary()
        for agent in self.agents:
            agent.hold_after(boundary)
        self.waiting_for = boundary
        self._poll()

    def _on_resolved(self, handle: TxHandle) -> None:
        if self.waiting_for is not None and handle.client != "cycle-clock":
            self._poll()

    def _poll(self) -> None:
        if all(a.settled_through(self.waiting_for) for a in self.agents):
            self.waiting_for = None
            self._submit_assessment()

    def _submit_assessment(self) -> None:
        handle = self.ledger.submit("assess_compliance", client="cycle-clock")
        handle.add_done_callback(self._assessed)

    def _assessed(self, handle: TxHandle) -> None:
        if handle.validity is not Validity.VALID:
            self.retries += 1
            self._submit_assessment()
            return
        self.counters_after.append(query_counters(self.ledger))
        self.cycle += 1
        for agent in self.agents:
            agent.hold_after(None)
        self._schedule_boundary()


def run_simulation(config: RunConfig) -> SimulationResult:
    terms = config.sla
    sched = config.schedule
    horizon = terms.billing_cycle * sched.cycles
    sched.schedule.check_horizon(horizon)
    agent_ids = [f"agent-{i}" for i in range(sched.agents)]
    ledger = Ledger(SlaContract(terms, authorized_agents=agent_ids), config.batching)
    agents = [
        Agent(ledger, sched.schedule, horizon=horizon, interval=terms.reporting_interval,
              agent_id=agent_id, mode=sched.mode)
        for agent_id in agent_ids
    ]
    clock = CycleClock(ledger, agents, terms.billing_cycle, sched.cycles)
    for agent in agents:
        agent.start()
    clock.start()
    ledger.run()
    if clock.cycle != sched.cycles:
        raise RuntimeError(f"simulation stalled after {clock.cycle} of {sched.cycles} cycles")
    return SimulationResult(
        ledger=ledger,
        verdicts=query_verdicts(ledger),
        summaries={a.agent_id: a.summary for a in agents},
        counters_after_boundary=clock.counters_after,
        assess_retries=clock.retries,
    )


def write_artifacts(result: SimulationResult, out: Path) -> dict[str, Path]:
    out.mkdir(parents=True, exist_ok=True)
    paths = {"block_log": out / BLOCK_LOG, "snapshot": out / SNAPSHOT, "verdicts": out / VERDICTS}
    export_block_log(result.ledger.chain, paths["block_log"])
    export_snapshot(result.ledger.state, paths["snapshot"])
    paths["verdicts"].write_text(json.dumps(result.summary_dict(), indent=2, sort_keys=True) + "\n")
    return paths
