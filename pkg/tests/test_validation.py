import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slaledger.contract import SlaContract
from slaledger.ledger import Ledger, WorldState
from slaledger.sla import SlaTerms, Status
from slaledger.validation import (
    DiagnosticMetrics,
    DiagnosticTable,
    LabeledCase,
    diagnostic_ledger,
    exact_label,
    generate_corpus,
    run_diagnostic,
    validate_counters,
)


class DroppingState(WorldState):
    """World state that silently loses the n-th write to ``f_count``."""

    def __init__(self, drop_at):
        super().__init__()
        self.drop_at = drop_at
        self.seen = 0

    def apply(self, key, value):
        if key == "f_count":
            self.seen += 1
            if self.seen - 1 == self.drop_at:
                return self.version(key)
        return super().apply(key, value)


def test_counters_small():
    result = validate_counters(1, (0, 5))
    assert result.passed and (result.fail_count, result.valid_count) == (0, 5)


def test_counters_harness_catches_a_dropped_write():
    ledger = Ledger(SlaContract(), state=DroppingState(drop_at=37))
    result = validate_counters(100, (1, 10), ledger=ledger)
    assert not result.passed
    assert result.failed_index == 37


def test_counters_need_fresh_contract(ledger):
    ledger.submit_and_wait("report_incident", {"fail_delta": 1, "valid_delta": 1})
    with pytest.raises(ValueError):
        validate_counters(1, ledger=ledger)


def test_corpus_split_and_boundary():
    corpus = generate_corpus(200, 10.0, seed=1)
    labels = [c.true_label for c in corpus]
    assert labels.count(Status.VIOLATION) == labels.count(Status.COMPLIANT) == 100
    assert LabeledCase(4320, 43_200, Status.COMPLIANT) in corpus
    assert LabeledCase(4321, 43_200, Status.VIOLATION) in corpus


def test_minimal_corpus():
    corpus = generate_corpus(2, 10.0, seed=0)
    assert sorted(c.true_label.value for c in corpus) == ["Compliant", "Violation"]


def test_corpus_is_deterministic():
    assert generate_corpus(50, 10, seed=9) == generate_corpus(50, 10, seed=9)
    assert generate_corpus(50, 10, seed=9) != generate_corpus(50, 10, seed=10)


@pytest.mark.parametrize("n", [0, 3, -2])
def test_corpus_size_must_be_even(n):
    with pytest.raises(ValueError):
        generate_corpus(n)


@pytest.mark.parametrize("threshold", [0, 2.5, 10, 33.3, 100])
def test_corpus_labels_follow_exact_rule(threshold):
    corpus = generate_corpus(40, threshold, seed=4)
    t = Fraction(str(threshold))
    for c in corpus:
        rate = Fraction(100) if c.valid_total == 0 and c.fail_total else (
            Fraction(0) if c.valid_total == 0 else Fraction(100 * c.fail_total, c.valid_total))
        assert (c.true_label is Status.VIOLATION) == (rate > t)
    # the exact-boundary case is present and compliant
    assert any(Fraction(100 * c.fail_total, c.valid_total) == t for c in corpus if c.valid_total)


def test_exact_label_boundary():
    assert exact_label(4320, 43_200, 10) is Status.COMPLIANT
    assert exact_label(4321, 43_200, 10) is Status.VIOLATION


def test_correct_contract_scores_perfectly():
    corpus = generate_corpus(60, 10, seed=2)
    report = run_diagnostic(corpus, diagnostic_ledger())
    m = report.metrics
    assert (m.sensitivity, m.specificity, m.ppv, m.npv) == (100.0, 100.0, 100.0, 100.0)
    assert report.table.total == 60


def test_inverted_rule_scores_zero():
    corpus = generate_corpus(60, 10, seed=2)
    report = run_diagnostic(corpus, diagnostic_ledger(mutant="inverted"))
    assert report.metrics.sensitivity == 0.0 and report.metrics.specificity == 0.0


def test_inclusive_rule_trips_on_boundary_case():
    corpus = generate_corpus(60, 10, seed=2)
    report = run_diagnostic(corpus, diagnostic_ledger(mutant="inclusive"))
    assert report.table.fp >= 1
    wrong = [c for c in report.cases if c.cell == "FP"]
    assert any((c.fail_total, c.valid_total) == (4320, 43_200) for c in wrong)


def test_compliant_only_corpus():
    corpus = [c for c in generate_corpus(40, 10, seed=3) if c.true_label is Status.COMPLIANT]
    m = run_diagnostic(corpus, diagnostic_ledger()).metrics
    assert m.specificity == 100.0 and m.sensitivity is None and m.ppv is None


def test_each_case_is_its_own_billing_cycle():
    ledger = diagnostic_ledger()
    corpus = generate_corpus(10, 10, seed=5)
    run_diagnostic(corpus, ledger)
    verdicts = ledger.evaluate("query_verdicts")
    assert [v.period_index for v in verdicts] == list(range(10))


@given(st.integers(0, 500), st.integers(0, 500), st.integers(0, 500), st.integers(0, 500))
def test_metrics_match_raw_table(tp, tn, fp, fn):
    m = DiagnosticMetrics.from_table(DiagnosticTable(tp, tn, fp, fn))

    def ref(a, b):
        return None if a + b == 0 else float(Fraction(100 * a, a + b))

    for got, want in [(m.sensitivity, ref(tp, fn)), (m.specificity, ref(tn, fp)),
                      (m.ppv, ref(tp, fp)), (m.npv, ref(tn, fn))]:
        assert (got is None) == (want is None)
        if got is not None:
            assert abs(got - want) <= 1e-12


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 20).map(lambda k: 2 * k), st.integers(0, 2**16))
def test_table_accounts_for_every_case(n, seed):
    corpus = generate_corpus(n, 10, seed)
    report = run_diagnostic(corpus, diagnostic_ledger())
    t = report.table
    assert t.total == n
    assert t.tp + t.fn == sum(c.true_label is Status.VIOLATION for c in corpus)
    assert t.tn + t.fp == sum(c.true_label is Status.COMPLIANT for c in corpus)


def test_report_formats():
    corpus = generate_corpus(4, 10, seed=0)
    report = run_diagnostic(corpus, diagnostic_ledger(SlaTerms()), seed=0)
    data = json.loads(report.to_json())
    assert set(data) == {"seed", "threshold", "table", "metrics", "cases"}
    assert len(data["cases"]) == 4
    assert "Sensitivity" in report.render() and "TP=" in report.render()
