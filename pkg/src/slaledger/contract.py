"""SLA enforcement chaincode.

Stage one accumulates incident reports into two counters. Stage two, run at
the end of each billing cycle, turns the counters into a verdict, archives
it under ``verdict/<cycle>`` and resets the counters.

All state goes through the ledger stub so every read and write lands in the
transaction's read-write set. A report touches exactly ``v_count`` and
``f_count``; two reports endorsed on the same snapshot therefore conflict.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Any, Callable, Iterable, Mapping

from . import sla
from .ledger import EndorsementError, StateAPI
from .sla import ComplianceVerdict, SlaTerms, Status

VALID_KEY = "v_count"
FAIL_KEY = "f_count"
CYCLE_KEY = "cycle_index"
VERDICT_PREFIX = "verdict/"

DecisionRule = Callable[[float, SlaTerms], Status]


@dataclass(frozen=True)
class IncidentReport:
    fail_delta: int
    valid_delta: int
    observed_at: int = 0
    agent_id: str = "agent-0"

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.fail_delta, int) or self.fail_delta < 0:
            out.append(f"fail_delta must be a non-negative integer, got {self.fail_delta!r}")
        if not isinstance(self.valid_delta, int) or self.valid_delta < 0:
            out.append(f"valid_delta must be a non-negative integer, got {self.valid_delta!r}")
        if not out and self.fail_delta == 0 and self.valid_delta == 0:
            out.append("empty report (both deltas zero)")
        return out

    def as_args(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class ContractState:
    valid_count: int
    fail_count: int
    cycle_index: int
    verdicts: tuple[ComplianceVerdict, ...]


def _get_int(stub: StateAPI, key: str) -> int:
    raw = stub.get_state(key)
    return 0 if raw is None else int(raw.decode("ascii"))


def _put_int(stub: StateAPI, key: str, value: int) -> None:
    stub.put_state(key, str(value).encode("ascii"))


def verdict_key(cycle_index: int) -> str:
    return f"{VERDICT_PREFIX}{cycle_index}"


class SlaContract:
    """Chaincode instance bound to one set of SLA terms.

    ``authorized_agents`` of ``None`` admits any reporter. ``decision_rule``
    exists so the validation harness can deploy a deliberately broken build.
    """

    def __init__(
        self,
        terms: SlaTerms | None = None,
        *,
        authorized_agents: Iterable[str] | None = None,
        decision_rule: DecisionRule = sla.decide,
    ):
        self.terms = terms or SlaTerms()
        self.authorized_agents = None if authorized_agents is None else frozenset(authorized_agents)
        self.decision_rule = decision_rule

    def invoke(self, stub: StateAPI, fn: str, args: Mapping[str, Any]) -> Any:
        handler = {
            "report_incident": self._report_incident,
            "assess_compliance": self._assess_compliance,
            "query_counters": self._query_counters,
            "query_verdicts": self._query_verdicts,
            "query_state": self._query_state,
        }.get(fn)
        if handler is None:
            raise EndorsementError(f"unknown contract function {fn!r}")
        return handler(stub, args)

    def _report_incident(self, stub: StateAPI, args: Mapping[str, Any]) -> tuple[int, int]:
        try:
            report = IncidentReport(**args)
        except TypeError as exc:
            raise EndorsementError(f"malformed report: {exc}") from None
        problems = report.problems()
        if problems:
            raise EndorsementError("; ".join(problems))
        if self.authorized_agents is not None and report.agent_id not in self.authorized_agents:
            raise EndorsementError(f"agent {report.agent_id!r} is not authorised")
        valid = _get_int(stub, VALID_KEY) + report.valid_delta
        fail = _get_int(stub, FAIL_KEY) + report.fail_delta
        _put_int(stub, VALID_KEY, valid)
        _put_int(stub, FAIL_KEY, fail)
        return valid, fail

    def _assess_compliance(self, stub: StateAPI, args: Mapping[str, Any]) -> ComplianceVerdict:
        if args:
            raise EndorsementError(f"assess_compliance takes no arguments, got {sorted(args)}")
        valid = _get_int(stub, VALID_KEY)
        fail = _get_int(stub, FAIL_KEY)
        cycle = _get_int(stub, CYCLE_KEY)
        rate = sla.compute_error_rate(fail, valid)
        status = self.decision_rule(rate, self.terms)
        verdict = ComplianceVerdict(
            period_index=cycle,
            error_rate=rate,
            status=status,
            penalty_applied=sla.apply_penalty(status, self.terms),
            total_valid=valid,
            total_fail=fail,
        )
        stub.put_state(verdict_key(cycle), json.dumps(verdict.to_dict(), sort_keys=True).encode("ascii"))
        _put_int(stub, VALID_KEY, 0)
        _put_int(stub, FAIL_KEY, 0)
        _put_int(stub, CYCLE_KEY, cycle + 1)
        return verdict

    def _query_counters(self, stub: StateAPI, args: Mapping[str, Any]) -> tuple[int, int]:
        return _get_int(stub, VALID_KEY), _get_int(stub, FAIL_KEY)

    def _query_verdicts(self, stub: StateAPI, args: Mapping[str, Any]) -> list[ComplianceVerdict]:
        out = []
        for i in range(_get_int(stub, CYCLE_KEY)):
            raw = stub.get_state(verdict_key(i))
            if raw is None:
                raise EndorsementError(f"verdict archive is missing cycle {i}")
            out.append(ComplianceVerdict.from_dict(json.loads(raw)))
        return out

    def _query_state(self, stub: StateAPI, args: Mapping[str, Any]) -> ContractState:
        valid, fail = self._query_counters(stub, args)
        verdicts = self._query_verdicts(stub, args)
        return ContractState(valid, fail, len(verdicts), tuple(verdicts))


# Thin client helpers. These mirror the chaincode functions on a Ledger.


def report_incident(ledger, report: IncidentReport):
    return ledger.submit_and_wait("report_incident", report.as_args(), client=report.agent_id)


def assess_compliance(ledger, *, client: str = "cycle-clock"):
    return ledger.submit_and_wait("assess_compliance", client=client)


def query_counters(ledger) -> tuple[int, int]:
    return ledger.evaluate("query_counters")


def query_verdicts(ledger) -> list[ComplianceVerdict]:
    return ledger.evaluate("query_verdicts")
