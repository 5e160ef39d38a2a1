"""Simulated permissioned ledger with an execute-order-validate pipeline.

A submitted invocation is executed (endorsed) against the committed world
state, which yields a read set of ``(key, version)`` pairs and a write set.
The orderer batches endorsed transactions into blocks, cut on size or on
timeout, whichever comes first. The single committer validates every block
in order: a transaction whose read versions no longer match the world state
is marked ``InvalidMvcc`` and its writes are dropped. Every transaction,
valid or not, is kept in the hash-chained block log.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Iterator, Mapping, Protocol, Sequence

from .clock import PRIO_LEDGER, EventLoop

log = logging.getLogger(__name__)

GENESIS_HASH = "0" * 64


class IntegrityError(Exception):
    """The block chain or a replay disagrees with its own records."""

    def __init__(self, message: str, height: int | None = None):
        super().__init__(message)
        self.height = height


class EndorsementError(Exception):
    """The contract refused to endorse an invocation."""


class Validity(str, enum.Enum):
    PENDING = "Pending"
    VALID = "Valid"
    INVALID_MVCC = "InvalidMvcc"
    TIMED_OUT = "TimedOut"


class CutReason(str, enum.Enum):
    TIMEOUT = "Timeout"
    SIZE_REACHED = "SizeReached"


def canonical_json(obj: Any) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True).encode("ascii")


@dataclass(frozen=True)
class BatchingConfig:
    batch_timeout_ms: int = 1000
    max_tx_per_block: int = 10
    endorsement_delay_ms: int = 100
    commit_delay_ms: int = 200
    execution_timeout_ms: int = 30_000

    def __post_init__(self) -> None:
        if self.batch_timeout_ms <= 0:
            raise ValueError("batch_timeout_ms must be positive")
        if self.max_tx_per_block < 1:
            raise ValueError("max_tx_per_block must be at least 1")
        if self.endorsement_delay_ms < 0 or self.commit_delay_ms < 0:
            raise ValueError("delays must be non-negative")
        if self.execution_timeout_ms <= 0:
            raise ValueError("execution_timeout_ms must be positive")


# --- world state -------------------------------------------------------------


@dataclass(frozen=True)
class WorldStateEntry:
    key: str
    value: bytes | None
    version: int


class WorldState:
    """Committed key -> (value, version). Absent keys read as version 0."""

    def __init__(self) -> None:
        self._entries: dict[str, tuple[bytes, int]] = {}

    def get(self, key: str) -> WorldStateEntry:
        value, version = self._entries.get(key, (None, 0))
        return WorldStateEntry(key, value, version)

    def version(self, key: str) -> int:
        return self._entries.get(key, (None, 0))[1]

    def apply(self, key: str, value: bytes) -> int:
        version = self.version(key) + 1
        self._entries[key] = (bytes(value), version)
        return version

    def keys(self) -> list[str]:
        return sorted(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def snapshot(self) -> dict[str, dict[str, Any]]:
        return {
            key: {"value": value.hex(), "version": version}
            for key, (value, version) in sorted(self._entries.items())
        }

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.snapshot(), sort_keys=True, indent=2).encode("ascii") + b"\n"

    @classmethod
    def from_snapshot(cls, snap: Mapping[str, Mapping[str, Any]]) -> "WorldState":
        ws = cls()
        for key, entry in snap.items():
            ws._entries[key] = (bytes.fromhex(entry["value"]), int(entry["version"]))
        return ws


# --- transactions and blocks ---------------------------------------------------


@dataclass(frozen=True)
class Transaction:
    tx_id: str
    submitted_at: int
    client: str
    fn: str
    args: Mapping[str, Any]
    read_set: tuple[tuple[str, int], ...]
    write_set: tuple[tuple[str, bytes], ...]
    endorsed_at: int = 0
    validity: Validity = Validity.PENDING

    def to_record(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "submitted_at": self.submitted_at,
            "endorsed_at": self.endorsed_at,
            "client": self.client,
            "fn": self.fn,
            "args": dict(self.args),
            "read_set": [[k, v] for k, v in self.read_set],
            "write_set": [[k, v.hex()] for k, v in self.write_set],
            "validity": self.validity.value,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Transaction":
        return cls(
            tx_id=str(rec["tx_id"]),
            submitted_at=int(rec["submitted_at"]),
            endorsed_at=int(rec["endorsed_at"]),
            client=str(rec["client"]),
            fn=str(rec["fn"]),
            args=dict(rec["args"]),
            read_set=tuple((str(k), int(v)) for k, v in rec["read_set"]),
            write_set=tuple((str(k), bytes.fromhex(v)) for k, v in rec["write_set"]),
            validity=Validity(rec["validity"]),
        )


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    transactions: tuple[Transaction, ...]
    cut_reason: CutReason
    cut_at: int
    committed_at: int | None = None

    def to_record(self) -> dict:
        return {
            "height": self.height,
            "prev_hash": self.prev_hash,
            "cut_reason": self.cut_reason.value,
            "cut_at": self.cut_at,
            "committed_at": self.committed_at,
            "transactions": [tx.to_record() for tx in self.transactions],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Block":
        committed_at = rec["committed_at"]
        return cls(
            height=int(rec["height"]),
            prev_hash=str(rec["prev_hash"]),
            transactions=tuple(Transaction.from_record(t) for t in rec["transactions"]),
            cut_reason=CutReason(rec["cut_reason"]),
            cut_at=int(rec["cut_at"]),
            committed_at=None if committed_at is None else int(committed_at),
        )

    def digest(self) -> str:
        return hashlib.sha256(canonical_json(self.to_record())).hexdigest()


class Chain:
    """Append-only sequence of committed blocks linked by digest."""

    def __init__(self) -> None:
        self._blocks: list[Block] = []
        self._hashes: list[str] = []

    @property
    def tip_hash(self) -> str:
        return self._hashes[-1] if self._hashes else GENESIS_HASH

    @property
    def next_height(self) -> int:
        return len(self._blocks)

    def __len__(self) -> int:
        return len(self._blocks)

    def __iter__(self) -> Iterator[Block]:
        return iter(self._blocks)

    def __getitem__(self, i: int) -> Block:
        return self._blocks[i]

    @property
    def hashes(self) -> tuple[str, ...]:
        return tuple(self._hashes)

    def append(self, block: Block) -> str:
        if block.height != self.next_height:
            raise IntegrityError(f"expected height {self.next_height}, got {block.height}", block.height)
        if block.prev_hash != self.tip_hash:
            raise IntegrityError(f"prev_hash mismatch at height {block.height}", block.height)
        if not block.transactions:
            raise IntegrityError(f"empty block at height {block.height}", block.height)
        if block.committed_at is None:
            raise IntegrityError(f"uncommitted block at height {block.height}", block.height)
        digest = block.digest()
        self._blocks.append(block)
        self._hashes.append(digest)
        return digest

    def verify(self) -> None:
        prev = GENESIS_HASH
        for height, (block, recorded) in enumerate(zip(self._blocks, self._hashes)):
            if block.height != height or block.prev_hash != prev:
                raise IntegrityError(f"broken link at height {height}", height)
            if block.digest() != recorded:
                raise IntegrityError(f"digest mismatch at height {height}", height)
            prev = recorded

    def transactions(self) -> Iterator[Transaction]:
        for block in self._blocks:
            yield from block.transactions


# --- ordering and validation ---------------------------------------------------


def cut_block(
    pending: deque[Transaction],
    config: BatchingConfig,
    now: int,
    *,
    height: int = 0,
    prev_hash: str = GENESIS_HASH,
) -> Block | None:
    """Cut a block from the head of ``pending`` if size or timeout says so.

    Cut transactions are removed from ``pending``. The timeout runs from the
    moment the oldest pending transaction reached the orderer.
    """
    if not pending:
        return None
    if len(pending) >= config.max_tx_per_block:
        reason = CutReason.SIZE_REACHED
    elif now - pending[0].endorsed_at >= config.batch_timeout_ms:
        reason = CutReason.TIMEOUT
    else:
        return None
    n = min(len(pending), config.max_tx_per_block)
    txs = tuple(pending.popleft() for _ in range(n))
    return Block(height=height, prev_hash=prev_hash, transactions=txs, cut_reason=reason, cut_at=now)


def mvcc_check(tx: Transaction, state: WorldState) -> bool:
    return all(state.version(key) == version for key, version in tx.read_set)


def validate_and_commit(
    block: Block,
    state: WorldState,
    chain: Chain,
    *,
    committed_at: int,
    execution_timeout_ms: int | None = None,
) -> Block:
    """Validate ``block`` in order, apply valid writes, append to ``chain``.

    Earlier valid transactions in the same block bump versions before later
    ones are checked, so two in-block writers of one key cannot both win.
    """
    if block.height != chain.next_height or block.prev_hash != chain.tip_hash:
        raise IntegrityError(f"block {block.height} does not extend the chain tip", block.height)
    flagged = []
    for tx in block.transactions:
        if execution_timeout_ms is not None and committed_at - tx.submitted_at > execution_timeout_ms:
            validity = Validity.TIMED_OUT
        elif mvcc_check(tx, state):
            validity = Validity.VALID
            for key, value in tx.write_set:
                state.apply(key, value)
        else:
            validity = Validity.INVALID_MVCC
        flagged.append(replace(tx, validity=validity))
    committed = replace(block, transactions=tuple(flagged), committed_at=committed_at)
    chain.append(committed)
    return committed


def replay(blocks: Iterable[Block], *, audit: bool = True) -> WorldState:
    """Rebuild world state from a block sequence by applying valid writes.

    With ``audit`` set, every recorded MVCC verdict is re-derived and a
    disagreement raises ``IntegrityError``.
    """
    state = WorldState()
    for block in blocks:
        for tx in block.transactions:
            if audit and tx.validity in (Validity.VALID, Validity.INVALID_MVCC):
                fresh = mvcc_check(tx, state)
                if fresh != (tx.validity is Validity.VALID):
                    raise IntegrityError(
                        f"recorded validity of {tx.tx_id} contradicts replay at height {block.height}",
                        block.height,
                    )
            if tx.validity is Validity.PENDING:
                raise IntegrityError(f"pending transaction {tx.tx_id} in committed block", block.height)
            if tx.validity is Validity.VALID:
                for key, value in tx.write_set:
                    state.apply(key, value)
    return state


# --- endorsement -----------------------------------------------------------------


class StateAPI(Protocol):
    def get_state(self, key: str) -> bytes | None: ...

    def put_state(self, key: str, value: bytes) -> None: ...


class Contract(Protocol):
    def invoke(self, stub: StateAPI, fn: str, args: Mapping[str, Any]) -> Any: ...


class Stub:
    """Endorsement context over a committed snapshot, recording the rw-set.

    Reads never observe the transaction's own pending writes.
    """

    def __init__(self, state: WorldState, *, read_only: bool = False):
        self._state = state
        self._read_only = read_only
        self.reads: dict[str, int] = {}
        self.writes: dict[str, bytes] = {}

    def get_state(self, key: str) -> bytes | None:
        entry = self._state.get(key)
        self.reads.setdefault(key, entry.version)
        return entry.value

    def put_state(self, key: str, value: bytes) -> None:
        if self._read_only:
            raise EndorsementError("write attempted in a read-only query")
        self.writes[key] = bytes(value)


@dataclass(eq=False)
class TxHandle:
    """Client-side view of a submission, resolved once its block commits."""

    tx_id: str
    client: str
    fn: str
    args: Mapping[str, Any]
    submitted_at: int
    transaction: Transaction | None = None
    result: Any = None
    error: Exception | None = None
    committed_at: int | None = None
    block_height: int | None = None
    _callbacks: list[Callable[["TxHandle"], None]] = field(default_factory=list, repr=False)

    @property
    def done(self) -> bool:
        return self.error is not None or self.committed_at is not None

    @property
    def validity(self) -> Validity:
        return self.transaction.validity if self.transaction is not None else Validity.PENDING

    @property
    def latency_ms(self) -> int | None:
        if self.committed_at is None:
            return None
        return self.committed_at - self.submitted_at

    def add_done_callback(self, fn: Callable[["TxHandle"], None]) -> None:
        if self.done:
            fn(self)
        else:
            self._callbacks.append(fn)

    def _resolve(self) -> None:
        callbacks, self._callbacks = self._callbacks, []
        for fn in callbacks:
            fn(self)


class Ledger:
    """One channel, one deployed contract, one orderer, one committer."""

    def __init__(
        self,
        contract: Contract,
        config: BatchingConfig | None = None,
        *,
        loop: EventLoop | None = None,
        state: WorldState | None = None,
    ):
        self.contract = contract
        self.config = config or BatchingConfig()
        self.loop = loop or EventLoop()
        self.state = state if state is not None else WorldState()
        self.chain = Chain()
        self._pending: deque[Transaction] = deque()
        self._commit_queue: deque[Block] = deque()
        self._committing = False
        self._handles: dict[str, TxHandle] = {}
        self._cut_count = 0
        self._tx_seq = 0
        self._listeners: list[Callable[[TxHandle], None]] = []

    @property
    def now(self) -> int:
        return self.loop.now

    def add_listener(self, fn: Callable[[TxHandle], None]) -> None:
        """Call ``fn`` on every resolved handle (committed or rejected)."""
        self._listeners.append(fn)

    # -- client API

    def submit(self, fn: str, args: Mapping[str, Any] | None = None, *, client: str = "client") -> TxHandle:
        tx_id = f"tx{self._tx_seq:07d}"
        self._tx_seq += 1
        handle = TxHandle(tx_id=tx_id, client=client, fn=fn, args=dict(args or {}), submitted_at=self.now)
        self._handles[tx_id] = handle
        self.loop.schedule(self.config.endorsement_delay_ms, self._endorse, handle, priority=PRIO_LEDGER)
        return handle

    def submit_and_wait(self, fn: str, args: Mapping[str, Any] | None = None, *, client: str = "client") -> TxHandle:
        handle = self.submit(fn, args, client=client)
        self.loop.run_while(lambda: not handle.done)
        return handle

    def evaluate(self, fn: str, args: Mapping[str, Any] | None = None) -> Any:
        """Run a read-only query against committed state; nothing is ordered."""
        return self.contract.invoke(Stub(self.state, read_only=True), fn, dict(args or {}))

    def run(self, until: int | None = None) -> None:
        self.loop.run(until)

    def handle(self, tx_id: str) -> TxHandle:
        return self._handles[tx_id]

    @property
    def handles(self) -> list[TxHandle]:
        return list(self._handles.values())

    # -- pipeline

    def _endorse(self, handle: TxHandle) -> None:
        stub = Stub(self.state)
        try:
            handle.result = self.contract.invoke(stub, handle.fn, handle.args)
        except EndorsementError as exc:
            log.debug("endorsement of %s rejected: %s", handle.tx_id, exc)
            handle.error = exc
            self._finish(handle)
            return
        tx = Transaction(
            tx_id=handle.tx_id,
            submitted_at=handle.submitted_at,
            client=handle.client,
            fn=handle.fn,
            args=handle.args,
            read_set=tuple(sorted(stub.reads.items())),
            write_set=tuple(sorted(stub.writes.items())),
            endorsed_at=self.now,
        )
        handle.transaction = tx
        self._pending.append(tx)
        self.loop.schedule(self.config.batch_timeout_ms, self._try_cut)
        self._try_cut()

    def _try_cut(self) -> None:
        while True:
            block = cut_block(self._pending, self.config, self.now, height=self._cut_count)
            if block is None:
                return
            self._cut_count += 1
            self._commit_queue.append(block)
            if not self._committing:
                self._start_commit()

    def _start_commit(self) -> None:
        self._committing = True
        self.loop.schedule(self.config.commit_delay_ms, self._finish_commit)

    def _finish_commit(self) -> None:
        block = self._commit_queue.popleft()
        block = replace(block, prev_hash=self.chain.tip_hash)
        committed = validate_and_commit(
            block,
            self.state,
            self.chain,
            committed_at=self.now,
            execution_timeout_ms=self.config.execution_timeout_ms,
        )
        for tx in committed.transactions:
            handle = self._handles[tx.tx_id]
            handle.transaction = tx
            handle.committed_at = self.now
            handle.block_height = committed.height
        for tx in committed.transactions:
            self._finish(self._handles[tx.tx_id])
        self._committing = False
        if self._commit_queue:
            self._start_commit()

    def _finish(self, handle: TxHandle) -> None:
        handle._resolve()
        for fn in self._listeners:
            fn(handle)


def summarize(handles: Sequence[TxHandle]) -> dict[str, int]:
    counts = {v.value: 0 for v in Validity}
    counts["Rejected"] = 0
    for h in handles:
        if h.error is not None:
            counts["Rejected"] += 1
        else:
            counts[h.validity.value] += 1
    return counts
