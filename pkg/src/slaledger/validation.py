"""Validation harness for the contract.

``validate_counters`` replays a long run of identical reports and checks the
running totals after every commit. ``run_diagnostic`` feeds a labelled
corpus through the assessment stage and scores the verdicts on a 2x2 table.
Labels come from exact rational arithmetic, never from the code under test.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from . import sla
from .contract import IncidentReport, SlaContract, query_counters
from .ledger import BatchingConfig, Ledger, Validity
from .sla import SlaTerms, Status

FULL_SCALE = 43_200
BOUNDARY_VALID = 43_200


class CounterMismatch(AssertionError):
    def __init__(self, index: int, expected: tuple[int, int], observed: tuple[int, int]):
        super().__init__(
            f"transaction {index}: expected (F_count, V_count) = {expected}, observed {observed}"
        )
        self.index = index
        self.expected = expected
        self.observed = observed


@dataclass
class CounterValidation:
    passed: bool
    transactions: int
    fail_count: int
    valid_count: int
    failed_index: int | None = None
    message: str = ""


def validate_counters(
    n_transactions: int,
    per_tx: tuple[int, int] = (1, 10),
    *,
    ledger: Ledger | None = None,
    batching: BatchingConfig | None = None,
) -> CounterValidation:
    """Submit ``n`` sequential reports of ``(fail, valid)`` and check totals.

    Stops at the first transaction whose committed totals are off.
    """
    fail_delta, valid_delta = per_tx
    if ledger is None:
        ledger = Ledger(SlaContract(), batching or BatchingConfig())
    if query_counters(ledger) != (0, 0):
        raise ValueError("validate_counters needs a freshly deployed contract")
    expected_fail = expected_valid = 0
    for i in range(n_transactions):
        report = IncidentReport(fail_delta=fail_delta, valid_delta=valid_delta, observed_at=i)
        handle = ledger.submit_and_wait("report_incident", report.as_args(), client=report.agent_id)
        expected_fail += fail_delta
        expected_valid += valid_delta
        valid, fail = query_counters(ledger)
        if handle.validity is not Validity.VALID or (fail, valid) != (expected_fail, expected_valid):
            err = CounterMismatch(i, (expected_fail, expected_valid), (fail, valid))
            return CounterValidation(False, i + 1, fail, valid, failed_index=i, message=str(err))
    return CounterValidation(True, n_transactions, expected_fail, expected_valid)


# --- corpus -----------------------------------------------------------------------


@dataclass(frozen=True)
class LabeledCase:
    fail_total: int
    valid_total: int
    true_label: Status


def exact_error_rate(fail_total: int, valid_total: int) -> Fraction:
    """Rational twin of ``sla.compute_error_rate`` used as the oracle."""
    if valid_total == 0:
        return Fraction(0) if fail_total == 0 else Fraction(100)
    return Fraction(fail_total * 100, valid_total)


def exact_label(fail_total: int, valid_total: int, threshold: float | Fraction) -> Status:
    rate = exact_error_rate(fail_total, valid_total)
    return Status.VIOLATION if rate > Fraction(str(threshold)) else Status.COMPLIANT


def _boundary_case(threshold: Fraction) -> tuple[int, int]:
    """Smallest multiple of 43 200 valid requests whose rate can hit the threshold exactly."""
    ratio = threshold / 100
    valid = BOUNDARY_VALID * ratio.denominator // math.gcd(BOUNDARY_VALID, ratio.denominator)
    return int(ratio * valid), valid


def generate_corpus(n: int, threshold: float = 10.0, seed: int = 0) -> list[LabeledCase]:
    """Half violating, half compliant cases, shuffled under ``seed``.

    The compliant half always holds a case sitting exactly at the threshold;
    the violating half holds its one-request-over neighbour.
    """
    if n < 2 or n % 2:
        raise ValueError("corpus size must be a positive even number")
    t = Fraction(str(threshold))
    if not 0 <= t <= 100:
        raise ValueError("threshold must be in [0, 100]")
    rng = random.Random(seed)
    half = n // 2
    bf, bv = _boundary_case(t)
    compliant = [(bf, bv)]
    violation = [(bf + 1, bv)]
    if half > 1:
        compliant.append((0, 0))
        if t < 100:
            violation.append((1, 0))
    while len(compliant) < half or len(violation) < half:
        valid = rng.randint(1, 100_000)
        limit = int(t * valid / 100)
        if len(compliant) < half:
            compliant.append((rng.randint(0, limit), valid))
        if len(violation) < half:
            violation.append((rng.randint(limit + 1, max(2 * valid, limit + 1)), valid))
    cases = [LabeledCase(f, v, exact_label(f, v, t)) for f, v in compliant[:half] + violation[:half]]
    rng.shuffle(cases)
    counts = sum(c.true_label is Status.VIOLATION for c in cases)
    assert counts == half, "corpus generation broke the even split"
    return cases


# --- diagnostic accuracy ------------------------------------------------------


@dataclass
class DiagnosticTable:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, truth: Status, decided: Status) -> str:
        if decided is Status.VIOLATION:
            cell = "tp" if truth is Status.VIOLATION else "fp"
        else:
            cell = "tn" if truth is Status.COMPLIANT else "fn"
        setattr(self, cell, getattr(self, cell) + 1)
        return cell.upper()

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def _pct(num: int, den: int) -> float | None:
    return None if den == 0 else 100.0 * num / den


@dataclass(frozen=True)
class DiagnosticMetrics:
    """All four measures in percent; ``None`` where the denominator is zero."""

    sensitivity: float | None
    specificity: float | None
    ppv: float | None
    npv: float | None

    @classmethod
    def from_table(cls, t: DiagnosticTable) -> "DiagnosticMetrics":
        return cls(
            sensitivity=_pct(t.tp, t.tp + t.fn),
            specificity=_pct(t.tn, t.tn + t.fp),
            ppv=_pct(t.tp, t.tp + t.fp),
            npv=_pct(t.tn, t.tn + t.fn),
        )

    def all_defined_perfect(self) -> bool:
        values = [v for v in asdict(self).values() if v is not None]
        return bool(values) and all(v == 100.0 for v in values)


@dataclass
class CaseOutcome:
    fail_total: int
    valid_total: int
    true_label: str
    decided: str
    error_rate: float
    cell: str


@dataclass
class DiagnosticReport:
    table: DiagnosticTable
    metrics: DiagnosticMetrics
    seed: int | None
    threshold: float
    cases: list[CaseOutcome] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "threshold": self.threshold,
            "table": asdict(self.table),
            "metrics": asdict(self.metrics),
            "cases": [asdict(c) for c in self.cases],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def render(self) -> str:
        t = self.table

        def fmt(v):
            return "n/a" if v is None else f"{v:.2f}%"

        m = self.metrics
        lines = [
            f"Diagnostic accuracy over {t.total} cases (seed={self.seed}, threshold={self.threshold}%)",
            "",
            "              Violation  Compliant",
            f"  Positive    TP={t.tp:<7} FP={t.fp:<7}",
            f"  Negative    FN={t.fn:<7} TN={t.tn:<7}",
            "",
            f"  Sensitivity {fmt(m.sensitivity)}",
            f"  Specificity {fmt(m.specificity)}",
            f"  PPV         {fmt(m.ppv)}",
            f"  NPV         {fmt(m.npv)}",
        ]
        return "\n".join(lines) + "\n"


class HarnessError(RuntimeError):
    pass


def run_diagnostic(
    corpus: Sequence[LabeledCase],
    ledger: Ledger,
    terms: SlaTerms | None = None,
    *,
    seed: int | None = None,
) -> DiagnosticReport:
    """Classify every case with the deployed contract, one billing cycle each."""
    if not corpus:
        raise ValueError("corpus is empty")
    terms = terms or ledger.contract.terms
    table = DiagnosticTable()
    outcomes = []
    for i, case in enumerate(corpus):
        if query_counters(ledger) != (0, 0):
            raise HarnessError(f"counters not reset before case {i}")
        if case.fail_total or case.valid_total:
            report = IncidentReport(case.fail_total, case.valid_total, observed_at=i, agent_id="validator")
            h = ledger.submit_and_wait("report_incident", report.as_args(), client="validator")
            if h.validity is not Validity.VALID:
                raise HarnessError(f"loading case {i} failed: {h.error or h.validity.value}")
        h = ledger.submit_and_wait("assess_compliance", client="validator")
        if h.validity is not Validity.VALID:
            raise HarnessError(f"assessing case {i} failed: {h.error or h.validity.value}")
        verdict = h.result
        cell = table.add(case.true_label, verdict.status)
        outcomes.append(CaseOutcome(case.fail_total, case.valid_total, case.true_label.value,
                                    verdict.status.value, verdict.error_rate, cell))
    return DiagnosticReport(table, DiagnosticMetrics.from_table(table), seed, terms.error_rate_threshold, outcomes)


# Deliberately broken decision rules for harness self-tests.


def _inverted(rate: float, terms: SlaTerms) -> Status:
    return Status.COMPLIANT if sla.decide(rate, terms) is Status.VIOLATION else Status.VIOLATION


def _inclusive(rate: float, terms: SlaTerms) -> Status:
    return Status.VIOLATION if rate >= terms.error_rate_threshold else Status.COMPLIANT


MUTANTS: dict[str, Callable[[float, SlaTerms], Status]] = {
    "inverted": _inverted,
    "inclusive": _inclusive,
}


def diagnostic_ledger(
    terms: SlaTerms | None = None,
    batching: BatchingConfig | None = None,
    *,
    mutant: str | None = None,
) -> Ledger:
    rule = sla.decide if mutant is None else MUTANTS[mutant]
    return Ledger(SlaContract(terms, decision_rule=rule), batching or BatchingConfig())
