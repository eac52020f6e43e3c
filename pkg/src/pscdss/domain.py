"""Participants, transactions, blocks and the replicated world state."""

from __future__ import annotations

import enum
import itertools
import json
import re
import struct
from dataclasses import dataclass, field, fields, is_dataclass, replace
from functools import cached_property
from typing import Any, Iterable, Mapping

# Transaction sizes in bytes per task kind; a status reset is a task-2 record.
TX_SIZE_BYTES = {
    "Global": 700,
    "StatusTrans": 390,
    "SpecAllo": 200,
    "ResRecord": 650,
    "StatusReset": 390,
}
HEADER_INTRA_BYTES = 39
HEADER_TIER2_BYTES = 321

MICRO = 1_000_000  # currency micro-units per unit


class ParticipantKind(str, enum.Enum):
    REGULATOR = "Regulator"
    BASE_STATION = "BaseStation"
    SATELLITE = "Satellite"
    DISSEMINATOR = "Disseminator"


class Status(str, enum.Enum):
    COMMON = "Common"
    BUYER = "Buyer"
    SELLER = "Seller"


class TaskKind(str, enum.Enum):
    GLOBAL = "Global"
    STATUS_TRANS = "StatusTrans"
    SPEC_ALLO = "SpecAllo"
    RES_RECORD = "ResRecord"
    STATUS_RESET = "StatusReset"


_KIND_TAG = {
    ParticipantKind.REGULATOR: "reg",
    ParticipantKind.BASE_STATION: "bs",
    ParticipantKind.SATELLITE: "sat",
    ParticipantKind.DISSEMINATOR: "dis",
}


_TAG_KIND = {v: k for k, v in _KIND_TAG.items()}
_ID_RE = re.compile(r"dis(?P<dis>\d+)|r(?P<region>-?\d+)\.(?P<tag>reg|bs|sat)(?P<ordinal>\d+)")


@dataclass(frozen=True, order=True)
class ParticipantId:
    region: int
    kind: ParticipantKind
    ordinal: int

    def __post_init__(self):
        object.__setattr__(self, "kind", ParticipantKind(self.kind))
        if self.kind is ParticipantKind.REGULATOR and self.ordinal != 0:
            raise ValueError("a region has exactly one regulator, ordinal 0")

    def __str__(self) -> str:
        if self.kind is ParticipantKind.DISSEMINATOR:
            return f"dis{self.ordinal}"
        return f"r{self.region}.{_KIND_TAG[self.kind]}{self.ordinal}"

    @classmethod
    def parse(cls, text: str) -> "ParticipantId":
        """Inverse of ``str``."""
        m = _ID_RE.fullmatch(text)
        if m is None:
            raise ValueError(f"not a participant id: {text!r}")
        if m["dis"] is not None:
            return cls(-1, ParticipantKind.DISSEMINATOR, int(m["dis"]))
        return cls(int(m["region"]), _TAG_KIND[m["tag"]], int(m["ordinal"]))

    @classmethod
    def regulator(cls, region: int) -> "ParticipantId":
        return cls(region, ParticipantKind.REGULATOR, 0)

    @property
    def is_ground(self) -> bool:
        return self.kind in (ParticipantKind.REGULATOR, ParticipantKind.BASE_STATION)


@dataclass(frozen=True)
class Transaction:
    """One task request, or the execution result that replaces it in a block.

    Payload keys by kind (users and bands are strings, money is micro-units):

    * Global: ``rules`` mapping of regulation key to value.
    * StatusTrans: ``user``, ``band``, ``from_status``, ``to_status``,
      ``price``, ``duration`` (s), ``location`` (x, y, z meters), ``demand``.
    * SpecAllo: ``allo_id`` and optional ``scheme``.
    * ResRecord: ``allo_id``.
    * StatusReset: ``allo_id`` and ``users``, a list of (user, band) pairs.
    """

    id: int
    kind: TaskKind
    issuer: ParticipantId
    timestamp: float
    payload: Mapping[str, Any] = field(default_factory=dict)
    cross_region: bool = False
    result_of: int | None = None
    size_bytes: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        if self.size_bytes is None:
            object.__setattr__(self, "size_bytes", TX_SIZE_BYTES[self.kind.value])
        if self.id < 0 or self.id >= 2**64:
            raise ValueError("transaction id must be an unsigned 64-bit value")

    @property
    def is_result(self) -> bool:
        return self.result_of is not None

    def fcfs_key(self) -> tuple[float, int]:
        return (self.timestamp, self.id)


class TxIdSource:
    """Hands out system-wide unique transaction ids."""

    def __init__(self, start: int = 1):
        self._counter = itertools.count(start)

    def __call__(self) -> int:
        return next(self._counter)


@dataclass(frozen=True)
class Block:
    height: int
    parent: int
    region: int
    txs: tuple[Transaction, ...] = ()
    tier2: bool = False

    @property
    def header_size_bytes(self) -> int:
        return HEADER_TIER2_BYTES if self.tier2 else HEADER_INTRA_BYTES

    @property
    def size_bytes(self) -> int:
        return self.header_size_bytes + sum(tx.size_bytes for tx in self.txs)

    @cached_property
    def digest(self) -> int:
        return hash_block(self)


# ------------------------------------------------------------ canonical bytes

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _encode(value: Any, out: bytearray) -> None:
    # one type tag byte, then a little-endian body; containers are length-prefixed
    if value is None:
        out += b"N"
    elif isinstance(value, bool):
        out += b"T" if value else b"F"
    elif isinstance(value, enum.Enum):
        # same bytes as the plain value, so JSON round trips keep the digest
        _encode(value.value, out)
    elif isinstance(value, int):
        if -(2**63) <= value < 2**63:
            out += b"i" + struct.pack("<q", value)
        else:
            raw = value.to_bytes((value.bit_length() + 8) // 8, "little", signed=True)
            out += b"I" + struct.pack("<I", len(raw)) + raw
    elif isinstance(value, float):
        out += b"f" + struct.pack("<d", value)
    elif isinstance(value, str):
        _encode_str(b"s", value, out)
    elif isinstance(value, (bytes, bytearray)):
        out += b"b" + struct.pack("<I", len(value)) + bytes(value)
    elif isinstance(value, Mapping):
        items = sorted(value.items(), key=lambda kv: canonical_bytes(kv[0]))
        out += b"m" + struct.pack("<I", len(items))
        for k, v in items:
            _encode(k, out)
            _encode(v, out)
    elif isinstance(value, (list, tuple)):
        out += b"l" + struct.pack("<I", len(value))
        for v in value:
            _encode(v, out)
    elif is_dataclass(value):
        _encode_str(b"D", type(value).__name__, out)
        fs = fields(value)
        out += struct.pack("<I", len(fs))
        for f in fs:
            _encode(getattr(value, f.name), out)
    else:
        raise TypeError(f"cannot serialise {type(value).__name__}")


def _encode_str(tag: bytes, s: str, out: bytearray) -> None:
    raw = s.encode("utf-8")
    out += tag + struct.pack("<I", len(raw)) + raw


def canonical_bytes(value: Any) -> bytes:
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def hash_block(block: Block) -> int:
    """64-bit FNV-1a digest of the block's canonical serialisation."""
    return fnv1a64(canonical_bytes(block))


# ---------------------------------------------------------------- world state

@dataclass
class BandRecord:
    owner: str
    lessee: str | None = None
    lease_expiry: float = 0.0
    tx_power_dbm: float = 30.0
    incumbents: tuple[tuple[float, float, float], ...] = ()

    def idle(self, now: float) -> bool:
        return self.lessee is None or self.lease_expiry <= now


@dataclass
class WorldState:
    bands: dict[str, BandRecord] = field(default_factory=dict)
    statuses: dict[tuple[str, str], Status] = field(default_factory=dict)
    balances: dict[str, int] = field(default_factory=dict)
    regulations: dict[str, Any] = field(default_factory=dict)
    now: float = 0.0
    executed: set[int] = field(default_factory=set)
    audit: list[dict[str, Any]] = field(default_factory=list)

    def status(self, user: str, band: str) -> Status:
        return self.statuses.get((user, band), Status.COMMON)

    def total_currency(self) -> int:
        return sum(self.balances.values())

    def copy(self) -> "WorldState":
        return WorldState(
            bands={k: replace(v) for k, v in self.bands.items()},
            statuses=dict(self.statuses),
            balances=dict(self.balances),
            regulations=dict(self.regulations),
            now=self.now,
            executed=set(self.executed),
            audit=list(self.audit),
        )

    def snapshot_digest(self) -> int:
        snap = {
            "bands": {k: (v.owner, v.lessee, v.lease_expiry, v.tx_power_dbm)
                      for k, v in self.bands.items()},
            "statuses": {f"{u}|{b}": s for (u, b), s in self.statuses.items()},
            "balances": self.balances,
            "regulations": self.regulations,
        }
        return fnv1a64(canonical_bytes(snap))


_ALLOWED_TRANSITIONS = {
    (Status.COMMON, Status.BUYER),
    (Status.COMMON, Status.SELLER),
    (Status.BUYER, Status.COMMON),
    (Status.SELLER, Status.COMMON),
}


def transition_allowed(src: Status, dst: Status) -> bool:
    return src == dst or (src, dst) in _ALLOWED_TRANSITIONS


def validate_transaction(tx: Transaction, state: WorldState) -> list[str]:
    """Names of the invariants ``tx`` would break; an empty list means valid."""
    violations = []
    if tx.size_bytes != TX_SIZE_BYTES[tx.kind.value]:
        violations.append("size-mismatch")
    if tx.kind is not TaskKind.STATUS_TRANS or tx.is_result:
        return violations
    p = tx.payload
    user, band = p.get("user"), p.get("band")
    if user is None or band is None:
        return violations + ["missing-field"]
    dst = Status(p.get("to_status", Status.COMMON))
    src = state.status(user, band)
    if not transition_allowed(src, dst):
        violations.append("illegal-transition")
    if dst is Status.SELLER:
        rec = state.bands.get(band)
        if rec is None or rec.owner != user:
            violations.append("band-not-owned")
        elif not rec.idle(state.now):
            violations.append("band-not-idle")
    elif dst is Status.BUYER:
        price = int(p.get("price", 0))
        if price < 0:
            violations.append("negative-price")
        if state.balances.get(user, 0) < price:
            violations.append("insufficient-balance")
    return violations


# ------------------------------------------------------------------ JSON lines

def _jsonable(value: Any) -> Any:
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, ParticipantId):
        return str(value)
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in sorted(value.items(), key=lambda kv: str(kv[0]))}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def tx_to_dict(tx: Transaction) -> dict[str, Any]:
    return {f.name: _jsonable(getattr(tx, f.name)) for f in fields(tx)}


def _untuple(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_untuple(v) for v in value)
    if isinstance(value, dict):
        return {k: _untuple(v) for k, v in value.items()}
    return value


def tx_from_dict(d: Mapping[str, Any]) -> Transaction:
    """Rebuild a transaction from :func:`tx_to_dict` output (JSON lists become tuples)."""
    return Transaction(
        id=int(d["id"]),
        kind=TaskKind(d["kind"]),
        issuer=ParticipantId.parse(d["issuer"]),
        timestamp=float(d["timestamp"]),
        payload=_untuple(dict(d.get("payload", {}))),
        cross_region=bool(d.get("cross_region", False)),
        result_of=d.get("result_of"),
        size_bytes=d.get("size_bytes"),
    )


def dump_jsonl(records: Iterable[Any], stream) -> int:
    """Write one JSON object per line; returns the number of lines."""
    n = 0
    for rec in records:
        obj = tx_to_dict(rec) if isinstance(rec, Transaction) else _jsonable(rec)
        stream.write(json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n")
        n += 1
    return n
