import json

import pytest

from slaledger.bench import PRESETS, BenchConfig, emit_report, preset, run_bench
from slaledger.ledger import BatchingConfig
from slaledger.monitor import SubmissionMode

FF = SubmissionMode.FIRE_AND_FORGET
AWAIT = SubmissionMode.AWAIT_COMMIT


@pytest.mark.parametrize(
    "name, timeout, size", [("T1", 1000, 10), ("T2", 500, 10), ("T3", 1000, 1), ("T4", 500, 1)]
)
def test_presets(name, timeout, size):
    cfg = preset(name)
    assert (cfg.batching.batch_timeout_ms, cfg.batching.max_tx_per_block) == (timeout, size)
    assert (cfg.workers, cfg.total_transactions, cfg.send_rate) == (1, 300, 1.0)
    assert cfg.execution_timeout_ms == 30_000


def test_unknown_preset():
    with pytest.raises(KeyError):
        preset("T5")


def test_bench_config_invariants():
    for kwargs in ({"workers": 0}, {"total_transactions": 0}, {"send_rate": 0}, {"jitter_ms": 1000}):
        with pytest.raises(ValueError):
            BenchConfig(**kwargs)


def test_t3_await_commit_never_fails():
    r = run_bench(preset("T3", submission_mode=AWAIT))
    assert (r.success, r.fail) == (300, 0)


def test_t4_two_workers_fire_and_forget_fails():
    r = run_bench(preset("T4", workers=2, submission_mode=FF))
    assert r.fail >= 1
    assert r.fail == r.fail_breakdown["InvalidMvcc"]
    stale = [t for t in r.per_tx if t.outcome == "InvalidMvcc"]
    assert all(t.stale_reads for t in stale)
    assert all(read < now for t in stale for _, read, now in t.stale_reads)


@pytest.mark.parametrize("name", sorted(PRESETS))
@pytest.mark.parametrize("workers, mode", [(1, AWAIT), (1, FF), (2, FF)])
def test_latency_bound_and_ordering(name, workers, mode):
    cfg = preset(name, workers=workers, submission_mode=mode)
    r = run_bench(cfg)
    bound = cfg.latency_bound_ms() / 1000
    assert all(lat <= bound for lat in r.per_tx_latencies)
    assert r.latency_min <= r.latency_avg <= r.latency_max
    assert r.success + r.fail_breakdown["InvalidMvcc"] + r.fail_breakdown["TimedOut"] == 300


def test_determinism():
    cfg = preset("T1", workers=3, submission_mode=FF, seed=11)
    a, b = run_bench(cfg), run_bench(cfg)
    assert a.to_record() == b.to_record()


def test_seed_changes_jitter():
    a = run_bench(preset("T1", submission_mode=FF, seed=1))
    b = run_bench(preset("T1", submission_mode=FF, seed=2))
    assert [t.submitted_at for t in a.per_tx] != [t.submitted_at for t in b.per_tx]


def test_saturation_times_out():
    # blocks of one, commits slower than arrivals: the queue only grows
    slow = BatchingConfig(batch_timeout_ms=500, max_tx_per_block=1, commit_delay_ms=3000, execution_timeout_ms=10_000)
    r = run_bench(BenchConfig(batching=slow, submission_mode=FF, total_transactions=40, send_rate=2, jitter_ms=0))
    assert r.fail_breakdown["TimedOut"] > 0
    assert r.success + r.fail == 40


def test_report_layout():
    results = [run_bench(preset(n, total_transactions=20)) for n in sorted(PRESETS)]
    report = emit_report(results)
    header, rule, *rows = report.text.splitlines()
    assert [c.strip() for c in header.split("|")[1:]] == ["T1", "T2", "T3", "T4"]
    assert [r.split("|")[0].strip() for r in rows] == [
        "Success", "Fail", "InvalidMvcc", "TimedOut", "Max Latency (s)", "Avg Latency (s)", "Min Latency (s)",
    ]
    records = json.loads(report.to_json())
    assert [r["label"] for r in records] == ["T1", "T2", "T3", "T4"]


def test_single_result_report():
    text = emit_report([run_bench(preset("T2", total_transactions=5))]).text
    assert len(text.splitlines()[0].split("|")) == 2


def test_no_success_renders_na():
    slow = BatchingConfig(commit_delay_ms=5000, execution_timeout_ms=1000)
    r = run_bench(BenchConfig(batching=slow, total_transactions=3))
    assert r.success == 0 and r.latency_avg is None
    assert "n/a" in emit_report([r]).text


def test_empty_report_rejected():
    with pytest.raises(ValueError):
        emit_report([])
