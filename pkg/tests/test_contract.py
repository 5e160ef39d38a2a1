from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import size_one
from slaledger.contract import (
    IncidentReport,
    SlaContract,
    assess_compliance,
    query_counters,
    query_verdicts,
    report_incident,
)
from slaledger.ledger import Ledger, Stub, Validity, WorldState, replay
from slaledger.sla import SlaTerms, Status


def load(ledger, valid, fail):
    h = report_incident(ledger, IncidentReport(fail, valid))
    assert h.validity is Validity.VALID
    return h


def test_fresh_contract_counters(ledger):
    assert query_counters(ledger) == (0, 0)
    assert query_verdicts(ledger) == []


def test_first_report(ledger):
    load(ledger, valid=10, fail=1)
    assert query_counters(ledger) == (10, 1)


def test_fail_only_burst(ledger):
    load(ledger, valid=5, fail=5)
    load(ledger, valid=0, fail=3)
    assert query_counters(ledger) == (5, 8)


def test_single_committed_update(ledger):
    load(ledger, valid=7, fail=2)
    assert query_counters(ledger) == (7, 2)


def test_report_rw_set_is_exactly_the_two_counters():
    stub = Stub(WorldState())
    SlaContract().invoke(stub, "report_incident", IncidentReport(1, 10).as_args())
    assert set(stub.reads) == set(stub.writes) == {"v_count", "f_count"}


@pytest.mark.parametrize(
    "args",
    [
        {"fail_delta": 0, "valid_delta": 0},
        {"fail_delta": -1, "valid_delta": 10},
        {"fail_delta": 1, "valid_delta": "10"},
        {"fail_delta": 1},
        {"fail_delta": 1, "valid_delta": 1, "extra": 3},
    ],
)
def test_malformed_reports_rejected_at_endorsement(ledger, args):
    h = ledger.submit_and_wait("report_incident", args)
    assert h.error is not None
    assert query_counters(ledger) == (0, 0)


def test_unauthorised_agent_rejected():
    ledger = Ledger(SlaContract(authorized_agents=["agent-0"]))
    h = ledger.submit_and_wait("report_incident", IncidentReport(1, 1, agent_id="mallory").as_args())
    assert "not authorised" in str(h.error)
    assert report_incident(ledger, IncidentReport(1, 1, agent_id="agent-0")).validity is Validity.VALID


@pytest.mark.parametrize(
    "valid, fail, status",
    [(43_200, 4321, Status.VIOLATION), (43_200, 4320, Status.COMPLIANT), (0, 0, Status.COMPLIANT)],
)
def test_assess_compliance(valid, fail, status):
    ledger = Ledger(SlaContract(SlaTerms(error_rate_threshold=10, penalty=10)))
    if valid or fail:
        load(ledger, valid, fail)
    verdict = assess_compliance(ledger).result
    oracle = Fraction(fail * 100, valid) if valid else Fraction(0)
    assert verdict.error_rate == float(oracle)
    assert verdict.status is status
    assert verdict.penalty_applied == (10 if status is Status.VIOLATION else 0)
    assert (verdict.total_valid, verdict.total_fail) == (valid, fail)
    assert query_counters(ledger) == (0, 0)


def test_verdict_archive_grows_in_cycle_order(ledger):
    load(ledger, valid=10, fail=5)
    assess_compliance(ledger)
    [first] = query_verdicts(ledger)
    assert first.status is Status.VIOLATION
    for _ in range(4):
        load(ledger, valid=10, fail=0)
        assess_compliance(ledger)
    verdicts = query_verdicts(ledger)
    assert [v.period_index for v in verdicts] == [0, 1, 2, 3, 4]
    assert verdicts[0] == first


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)).filter(lambda t: t != (0, 0)), max_size=40))
def test_counter_exactness(deltas):
    ledger = Ledger(SlaContract(), size_one())
    for valid, fail in deltas:
        load(ledger, valid, fail)
    assert query_counters(ledger) == (sum(v for v, _ in deltas), sum(f for _, f in deltas))


def test_invalidated_report_leaves_counters_alone():
    ledger = Ledger(SlaContract(), size_one())
    a = ledger.submit("report_incident", IncidentReport(1, 10).as_args())
    b = ledger.submit("report_incident", IncidentReport(5, 50).as_args())
    ledger.run()
    assert b.validity is Validity.INVALID_MVCC
    assert query_counters(ledger) == (10, 1)
    # replay agrees when invalid transactions are skipped
    replayed = Ledger(SlaContract(), state=replay(ledger.chain))
    assert query_counters(replayed) == (10, 1)


def test_unknown_function_rejected(ledger):
    assert ledger.submit_and_wait("drain_funds").error is not None
