"""SLA domain logic: error rate, compliance decision and penalty.

Nothing here touches the ledger. The contract calls into these functions
during endorsement, and the validation harness checks them against an
exact rational oracle.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping

from .kvconfig import ConfigError, parse_kv_file, parse_kv_text


class Status(str, enum.Enum):
    COMPLIANT = "Compliant"
    VIOLATION = "Violation"


@dataclass(frozen=True)
class SlaTerms:
    """Machine-readable SLA: one metric, one threshold, one flat penalty.

    Durations are in simulated seconds.
    """

    metric_id: str = "mqtt_error_rate"
    error_rate_threshold: float = 10.0
    billing_cycle: int = 30 * 24 * 3600
    penalty: float = 10.0
    reporting_interval: int = 60

    def __post_init__(self) -> None:
        if not 0 <= self.error_rate_threshold <= 100:
            raise ValueError(f"error_rate_threshold must be in [0, 100], got {self.error_rate_threshold}")
        if not 0 <= self.penalty <= 100:
            raise ValueError(f"penalty must be in [0, 100], got {self.penalty}")
        if self.billing_cycle <= 0:
            raise ValueError("billing_cycle must be positive")
        if self.reporting_interval <= 0:
            raise ValueError("reporting_interval must be positive")
        if self.reporting_interval > self.billing_cycle:
            raise ValueError("reporting_interval must not exceed billing_cycle")

    @property
    def reports_per_cycle(self) -> int:
        return self.billing_cycle // self.reporting_interval


@dataclass(frozen=True)
class ComplianceVerdict:
    period_index: int
    error_rate: float
    status: Status
    penalty_applied: float
    total_valid: int
    total_fail: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status.value
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ComplianceVerdict":
        return cls(
            period_index=int(d["period_index"]),
            error_rate=float(d["error_rate"]),
            status=Status(d["status"]),
            penalty_applied=float(d["penalty_applied"]),
            total_valid=int(d["total_valid"]),
            total_fail=int(d["total_fail"]),
        )


def compute_error_rate(fail_total: int, valid_total: int) -> float:
    """Return fails divided by valid requests, as a percentage.

    A cycle with no traffic at all scores 0; failures with no valid
    traffic score 100 (total outage).
    """
    if fail_total < 0 or valid_total < 0:
        raise ValueError("request counts must be non-negative")
    if valid_total == 0:
        return 0.0 if fail_total == 0 else 100.0
    # single rounding step: the integer product is exact
    return (fail_total * 100) / valid_total


def decide(error_rate: float, terms: SlaTerms) -> Status:
    # exactly at threshold is still compliant
    if error_rate > terms.error_rate_threshold:
        return Status.VIOLATION
    return Status.COMPLIANT


def apply_penalty(status: Status, terms: SlaTerms) -> float:
    return terms.penalty if status is Status.VIOLATION else 0.0


# plain key=value file keys -> SlaTerms field, converter
_TERM_KEYS = {
    "metric_id": ("metric_id", str),
    "threshold_percent": ("error_rate_threshold", float),
    "billing_cycle_s": ("billing_cycle", int),
    "penalty_percent": ("penalty", float),
    "reporting_interval_s": ("reporting_interval", int),
}


def terms_from_mapping(values: Mapping[str, str], *, prefix: str = "") -> SlaTerms:
    kwargs = {}
    for key, raw in values.items():
        if key not in _TERM_KEYS:
            raise ConfigError(f"unknown SLA key {prefix}{key}")
        field, conv = _TERM_KEYS[key]
        try:
            kwargs[field] = conv(raw)
        except ValueError:
            raise ConfigError(f"bad value for {prefix}{key}: {raw!r}") from None
    try:
        return SlaTerms(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"invalid SLA terms: {exc}") from None


def load_terms(path: str | Path) -> SlaTerms:
    return terms_from_mapping(parse_kv_file(path))


def loads_terms(text: str) -> SlaTerms:
    return terms_from_mapping(parse_kv_text(text))
