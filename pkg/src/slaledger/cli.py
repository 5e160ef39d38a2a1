"""Command line entry point: simulate, validate, bench, replay.

Exit codes: 0 success, 1 check or integrity failure, 2 usage or config error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import blocklog
from .bench import PRESETS, BenchConfig, emit_report, preset, run_bench
from .config import DEFAULTS_TEXT, RunConfig, ScheduleConfig, load_config
from .contract import SlaContract
from .kvconfig import ConfigError
from .ledger import IntegrityError, Ledger, replay
from .monitor import FaultSchedule, SubmissionMode
from .simulate import run_simulation, write_artifacts
from .validation import (
    MUTANTS,
    FULL_SCALE,
    diagnostic_ledger,
    generate_corpus,
    run_diagnostic,
    validate_counters,
)

log = logging.getLogger("slaledger")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
QUICK_TRANSACTIONS = 1000
QUICK_CYCLE_DIVISOR = 30


class UsageError(Exception):
    pass


def _config(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed, bench=replace(cfg.bench, seed=args.seed))
    return cfg


def _out_dir(args, cfg: RunConfig) -> Path:
    return Path(args.out) if args.out else cfg.out


def _quick_schedule(cfg: RunConfig) -> RunConfig:
    """Shrink the billing cycle and outage windows by the same factor."""
    d = QUICK_CYCLE_DIVISOR
    terms = cfg.sla
    cycle = max(terms.reporting_interval, terms.billing_cycle // d)
    sla = replace(terms, billing_cycle=cycle)
    sched = cfg.schedule.schedule
    outages = tuple((s // d, max(s // d + 1, e // d)) for s, e in sched.outages)
    schedule = ScheduleConfig(
        schedule=FaultSchedule(outages, sched.request_rate, sched.fail_rate_during_outage),
        agents=cfg.schedule.agents, mode=cfg.schedule.mode, cycles=cfg.schedule.cycles,
    )
    return replace(cfg, sla=sla, schedule=schedule)


def cmd_simulate(args) -> int:
    cfg = _config(args)
    if args.quick:
        cfg = _quick_schedule(cfg)
    result = run_simulation(cfg)
    out = _out_dir(args, cfg)
    paths = write_artifacts(result, out)
    # closed loop: what we wrote must replay to what we hold
    chain = blocklog.import_block_log(paths["block_log"])
    if replay(chain).canonical_bytes() != result.ledger.state.canonical_bytes():
        print("error: replayed block log disagrees with live world state", file=sys.stderr)
        return EXIT_FAIL
    for v in result.verdicts:
        print(f"cycle {v.period_index}: {v.status.value} error_rate={v.error_rate:.4f}% "
              f"penalty={v.penalty_applied:g}% (valid={v.total_valid}, fail={v.total_fail})")
    for name, s in sorted(result.summaries.items()):
        print(f"{name}: submitted={s.submitted} valid={s.valid} invalid_mvcc={s.invalid_mvcc} "
              f"timed_out={s.timed_out} rejected={s.rejected}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _config(args)
    v = cfg.validate
    n = args.transactions or (QUICK_TRANSACTIONS if args.quick else v.transactions)
    ok = True

    counters = validate_counters(n, (v.fail_delta, v.valid_delta), batching=cfg.batching)
    if counters.passed:
        print(f"counters: PASS after {n} transactions "
              f"(F_count={counters.fail_count}, V_count={counters.valid_count})")
    else:
        print(f"counters: FAIL {counters.message}")
        ok = False

    corpus = generate_corpus(v.corpus_size, cfg.sla.error_rate_threshold, cfg.seed)
    ledger = diagnostic_ledger(cfg.sla, cfg.batching, mutant=args.mutant)
    report = run_diagnostic(corpus, ledger, cfg.sla, seed=cfg.seed)
    print(report.render(), end="")
    if not report.metrics.all_defined_perfect():
        print("diagnostic: FAIL (a defined metric is below 100%)")
        ok = False
    else:
        print("diagnostic: PASS")

    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "diagnostic.txt").write_text(report.render())
    (out / "diagnostic.json").write_text(report.to_json())
    return EXIT_OK if ok else EXIT_FAIL


def _preset_names(raw: list[str]) -> list[str]:
    names = []
    for item in raw:
        for name in item.split(","):
            name = name.strip().upper()
            if name == "ALL":
                names.extend(PRESETS)
            elif name in PRESETS:
                names.append(name)
            else:
                raise UsageError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)} or all")
    return names


def cmd_bench(args) -> int:
    if not args.preset and not args.config:
        raise UsageError("bench needs --preset or --config")
    cfg = _config(args)
    base: BenchConfig = cfg.bench
    if args.mode:
        base = replace(base, submission_mode=SubmissionMode(args.mode))
    if args.workers:
        base = replace(base, workers=args.workers)
    if args.transactions:
        base = replace(base, total_transactions=args.transactions)

    if args.preset:
        configs = [
            preset(name, workers=base.workers, total_transactions=base.total_transactions,
                   send_rate=base.send_rate, submission_mode=base.submission_mode,
                   seed=base.seed, jitter_ms=base.jitter_ms, batching=base.batching)
            for name in _preset_names(args.preset)
        ]
    else:
        configs = [replace(base, label="config")]

    started = time.perf_counter()
    results = [run_bench(c) for c in configs]
    if args.wall_clock:
        print(f"simulator wall time: {time.perf_counter() - started:.3f}s", file=sys.stderr)
    report = emit_report(results)
    print(report.text, end="")
    if args.out:
        path = Path(args.out)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(report.text)
        path.with_suffix(".json").write_text(report.to_json())
    broken = [r.label for r in results if r.success + r.fail != r.config.total_transactions]
    if broken:
        print(f"conservation violated for {', '.join(broken)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_replay(args) -> int:
    try:
        chain = blocklog.import_block_log(args.log)
        chain.verify()
        state = replay(chain)
    except IntegrityError as exc:
        where = "" if exc.height is None else f" (height {exc.height})"
        print(f"integrity failure{where}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except blocklog.LogFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    view = Ledger(SlaContract(), state=state).evaluate("query_state")
    print(f"blocks: {len(chain)}  transactions: {sum(len(b.transactions) for b in chain)}")
    print(f"counters: V_count={view.valid_count} F_count={view.fail_count}")
    for v in view.verdicts:
        print(f"cycle {v.period_index}: {v.status.value} error_rate={v.error_rate:.4f}% "
              f"penalty={v.penalty_applied:g}%")
    if args.snapshot:
        expected = blocklog.import_snapshot(args.snapshot)
        if expected.canonical_bytes() != state.canonical_bytes():
            print("state mismatch: replayed world state differs from snapshot", file=sys.stderr)
            return EXIT_FAIL
        print("state verified")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value run configuration file")
    common.add_argument("--seed", type=int, help="override the configured seed")
    common.add_argument("--out", help="output directory (bench: report file path)")
    common.add_argument("--quick", action="store_true", help="reduced-scale run")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(
        prog="slaledger",
        description="SLA enforcement on a simulated permissioned ledger.",
        epilog="configuration defaults:\n" + DEFAULTS_TEXT,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run agents for whole billing cycles")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("validate", parents=[common], help="counter exactness and diagnostic accuracy")
    p.add_argument("--transactions", type=int, help=f"counter run length (default {FULL_SCALE}, "
                                                     f"{QUICK_TRANSACTIONS} with --quick)")
    p.add_argument("--mutant", choices=sorted(MUTANTS), help="deploy a deliberately broken decision rule")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", parents=[common], help="batching benchmark (T1..T4)")
    p.add_argument("--preset", nargs="+", help="T1 T2 T3 T4 or all")
    p.add_argument("--mode", choices=[m.value for m in SubmissionMode])
    p.add_argument("--workers", type=int)
    p.add_argument("--transactions", type=int)
    p.add_argument("--wall-clock", action="store_true", help="report real time spent simulating")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("replay", parents=[common], help="verify and replay a block log")
    p.add_argument("log", help="block log file")
    p.add_argument("--snapshot", help="snapshot to compare the replayed state against")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
