"""SLA compliance enforcement on a simulated execute-order-validate ledger."""

from .contract import IncidentReport, SlaContract
from .ledger import BatchingConfig, Block, Ledger, Transaction, Validity, WorldState
from .sla import ComplianceVerdict, SlaTerms, Status, apply_penalty, compute_error_rate, decide

__all__ = [
    "BatchingConfig",
    "Block",
    "ComplianceVerdict",
    "IncidentReport",
    "Ledger",
    "SlaContract",
    "SlaTerms",
    "Status",
    "Transaction",
    "Validity",
    "WorldState",
    "apply_penalty",
    "compute_error_rate",
    "decide",
]

__version__ = "0.1.0"
