"""On-disk block log and world-state snapshots.

Log layout: an 8-byte magic, then one record per block. A record is a
4-byte big-endian length followed by that many bytes of canonical JSON::

    {"block": {...block fields...}, "hash": "<sha256 of canonical block>"}

Import recomputes every digest and re-links the chain, so a flipped byte
anywhere in a record is reported with the height that broke.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

from .ledger import Block, Chain, IntegrityError, WorldState, canonical_json

MAGIC = b"SLALOG1\n"
_LEN = struct.Struct(">I")


class LogFormatError(ValueError):
    pass


def dump_chain(chain: Chain) -> bytes:
    out = bytearray(MAGIC)
    for block, digest in zip(chain, chain.hashes):
        payload = canonical_json({"block": block.to_record(), "hash": digest})
        out += _LEN.pack(len(payload))
        out += payload
    return bytes(out)


def load_chain(data: bytes) -> Chain:
    if not data.startswith(MAGIC):
        raise LogFormatError("not a block log (bad magic)")
    chain = Chain()
    pos = len(MAGIC)
    while pos < len(data):
        height = len(chain)
        if pos + _LEN.size > len(data):
            raise LogFormatError(f"truncated length prefix for record {height}")
        (size,) = _LEN.unpack_from(data, pos)
        pos += _LEN.size
        raw = data[pos : pos + size]
        if len(raw) != size:
            raise LogFormatError(f"truncated record {height}")
        pos += size
        try:
            rec = json.loads(raw)
            block = Block.from_record(rec["block"])
            recorded = str(rec["hash"])
        except (ValueError, KeyError, TypeError) as exc:
            # a flipped byte can also land in the syntax; blame the height either way
            raise IntegrityError(f"unreadable record at height {height}: {exc}", height) from None
        if block.digest() != recorded:
            raise IntegrityError(f"digest mismatch at height {height}", height)
        chain.append(block)
    return chain


def export_block_log(chain: Chain, path: str | Path) -> None:
    Path(path).write_bytes(dump_chain(chain))


def import_block_log(path: str | Path) -> Chain:
    return load_chain(Path(path).read_bytes())


def export_snapshot(state: WorldState, path: str | Path) -> None:
    Path(path).write_bytes(state.canonical_bytes())


def import_snapshot(path: str | Path) -> WorldState:
    try:
        return WorldState.from_snapshot(json.loads(Path(path).read_text(encoding="ascii")))
    except (ValueError, KeyError, TypeError) as exc:
        raise LogFormatError(f"malformed snapshot {path}: {exc}") from None
