import random

import pytest

from slaledger.bench import PRESETS
from slaledger.clock import PRIO_CLIENT
from slaledger.contract import IncidentReport, SlaContract
from slaledger.ledger import BatchingConfig, Ledger


def size_one() -> BatchingConfig:
    return BatchingConfig(batch_timeout_ms=500, max_tx_per_block=1)


@pytest.fixture
def ledger():
    return Ledger(SlaContract())


def random_workload(seed: int, n_tx: int = 1000) -> Ledger:
    """Mixed agents and presets, random arrival gaps, occasional assessments."""
    rng = random.Random(seed)
    timeout, size = PRESETS[rng.choice(sorted(PRESETS))]
    config = BatchingConfig(
        batch_timeout_ms=timeout,
        max_tx_per_block=size,
        endorsement_delay_ms=rng.choice([0, 50, 100]),
        commit_delay_ms=rng.choice([0, 100, 200, 400]),
    )
    ledger = Ledger(SlaContract(), config)
    agents = [f"agent-{i}" for i in range(rng.randint(1, 4))]
    t = 0
    for _ in range(n_tx):
        t += rng.choice([0, 0, 10, 50, 200, 700, 1500])
        if rng.random() < 0.05:
            ledger.loop.schedule_at(t, ledger.submit, "assess_compliance", None, priority=PRIO_CLIENT)
            continue
        agent = rng.choice(agents)
        report = IncidentReport(rng.randint(0, 5), rng.randint(1, 20), observed_at=t // 1000, agent_id=agent)
        ledger.loop.schedule_at(t, _submit, ledger, report, priority=PRIO_CLIENT)
    ledger.run()
    return ledger


def _submit(ledger, report):
    ledger.submit("report_incident", report.as_args(), client=report.agent_id)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import CRITERIA

    outcomes: dict[str, list[str]] = {}
    for key in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(key, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" not in nodeid or getattr(rep, "when", "call") not in ("call", "setup"):
                continue
            name = nodeid.split("::")[-1].split("[")[0]
            outcomes.setdefault(name, []).append(rep.outcome)
    if not outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in CRITERIA.items():
        got = outcomes.get(name)
        if got is None:
            status = "NOT RUN"
        else:
            status = "PASS" if all(o == "passed" for o in got) else "FAIL"
        terminalreporter.write_line(f"{status:<7} {label}")
