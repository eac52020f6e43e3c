"""Per-region task pipeline: pool filtering, FCFS ordering, the four execution
functions and the two spectrum allocation schemes."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Sequence

from .domain import (
    Block,
    ParticipantId,
    Status,
    TaskKind,
    Transaction,
    WorldState,
    dump_jsonl,
    validate_transaction,
)

log = logging.getLogger(__name__)

DEFAULT_THRESHOLD_DBM = -100.0
DEFAULT_FC_HZ = 2e9
THRESHOLD_KEY = "interference_threshold_dbm"

Location = tuple[float, float, float]


# ---------------------------------------------------------------- pools/lists

@dataclass
class TxPools:
    pool1: list[Transaction] = field(default_factory=list)
    pool2: list[Transaction] = field(default_factory=list)
    pool3: list[Transaction] = field(default_factory=list)
    rejected: list[tuple[Any, str]] = field(default_factory=list)

    def all_ids(self) -> list[int]:
        return [tx.id for pool in (self.pool1, self.pool2, self.pool3) for tx in pool]


@dataclass
class TxLists:
    list1: list[Transaction] = field(default_factory=list)
    list2: list[Transaction] = field(default_factory=list)
    list3: list[Transaction] = field(default_factory=list)
    deferred: list[Transaction] = field(default_factory=list)

    def __getitem__(self, i: int) -> list[Transaction]:
        return (self.list1, self.list2, self.list3)[i - 1]


def filter_transactions(batch: Iterable[Any]) -> TxPools:
    """Split a validated batch by task kind; cross-region tasks go to pool 1."""
    pools = TxPools()
    for tx in batch:
        if not isinstance(tx, Transaction) or not isinstance(tx.kind, TaskKind):
            pools.rejected.append((tx, "unknown-kind"))
            log.warning("rejected transaction of unknown kind: %r", tx)
            continue
        if tx.kind is TaskKind.GLOBAL or tx.cross_region:
            pools.pool1.append(tx)
        elif tx.kind is TaskKind.STATUS_TRANS:
            pools.pool2.append(tx)
        else:
            pools.pool3.append(tx)
    return pools


def _fcfs(txs: Iterable[Transaction]) -> list[Transaction]:
    return sorted(txs, key=Transaction.fcfs_key)


def order_transactions(pools: TxPools, bl_pool: Sequence[Block] = (),
                       capacity: int | None = None) -> tuple[TxLists, Block | None]:
    """FCFS-order each pool into a block-sized list.

    List 3 is built from allocation triples: each SpecAllo is followed by the
    ResRecord and StatusReset sharing its ``allo_id``. Incomplete triples and
    anything beyond ``capacity`` are deferred. ``bl_pool`` holds received
    tier-2 blocks in arrival order; its head becomes the candidate.
    """
    cap = math.inf if capacity is None else capacity
    lists = TxLists()
    for src, dst in ((pools.pool1, lists.list1), (pools.pool2, lists.list2)):
        ordered = _fcfs(src)
        take = ordered if cap == math.inf else ordered[: int(cap)]
        dst.extend(take)
        lists.deferred.extend(ordered[len(take):])

    allos = [tx for tx in _fcfs(pools.pool3) if tx.kind is TaskKind.SPEC_ALLO]
    partners: dict[tuple[TaskKind, Any], list[Transaction]] = {}
    for tx in _fcfs(pools.pool3):
        if tx.kind is not TaskKind.SPEC_ALLO:
            partners.setdefault((tx.kind, tx.payload.get("allo_id")), []).append(tx)
    used: set[int] = set()
    for allo in allos:
        key = allo.payload.get("allo_id")
        recs = partners.get((TaskKind.RES_RECORD, key), [])
        resets = partners.get((TaskKind.STATUS_RESET, key), [])
        if not recs or not resets:
            log.warning("allocation %s has no matching record/reset; deferred", key)
            lists.deferred.append(allo)
            continue
        if len(lists.list3) + 3 > cap:
            lists.deferred.append(allo)
            continue
        triple = [allo, recs.pop(0), resets.pop(0)]
        lists.list3.extend(triple)
        used.update(tx.id for tx in triple)
    lists.deferred.extend(tx for tx in _fcfs(pools.pool3)
                          if tx.kind is not TaskKind.SPEC_ALLO and tx.id not in used)
    candidate = bl_pool[0] if bl_pool else None
    return lists, candidate


# -------------------------------------------------------------------- E1

@dataclass
class E1Result:
    block: Block
    conflicts: int


def glo_func(tx: Transaction, state: WorldState) -> Transaction:
    rules = dict(tx.payload.get("rules", {}))
    if tx.id not in state.executed:
        state.regulations.update(rules)
        state.executed.add(tx.id)
    return replace(tx, payload={"applied": rules}, result_of=tx.id)


def exec_func_e1(candidate: Block | None, state: WorldState) -> E1Result | None:
    """Replace every Global transaction of the candidate block by its result."""
    if candidate is None:
        return None
    seen: set[str] = set()
    conflicts = 0
    out = []
    for tx in candidate.txs:
        if tx.kind is TaskKind.GLOBAL and not tx.is_result:
            for key in tx.payload.get("rules", {}):
                if key in seen:
                    conflicts += 1
                    log.info("regulation key %r set twice in block %d; last write wins",
                             key, candidate.height)
                seen.add(key)
            out.append(glo_func(tx, state))
        else:
            out.append(tx)
    return E1Result(block=replace(candidate, txs=tuple(out)), conflicts=conflicts)


# -------------------------------------------------------------------- E2

@dataclass(frozen=True)
class SharedEntry:
    band: str
    seller: str
    ask: int
    location: Location
    tx_power_dbm: float = 30.0
    incumbents: tuple[Location, ...] = ()
    source_tx: int = 0


@dataclass(frozen=True)
class AwaitEntry:
    terminal: str
    buyer: str
    bid: int
    location: Location
    demand: int = 1
    duration: float = 0.0
    source_tx: int = 0
    status_band: str = ""  # band key under which the buyer status was recorded


@dataclass
class E2Result:
    block: Block
    shared: list[SharedEntry]
    awaiting: list[AwaitEntry]
    rejected: list[tuple[Transaction, list[str]]]


def sta_func(tx: Transaction, state: WorldState) -> Transaction:
    """Apply one status transition and return its result record."""
    p = tx.payload
    user, band = p["user"], p["band"]
    dst = Status(p.get("to_status", Status.COMMON))
    if tx.id not in state.executed:
        state.statuses[(user, band)] = dst
        state.executed.add(tx.id)
    return replace(tx, payload={"user": user, "band": band, "status": dst.value}, result_of=tx.id)


def _reset_func(tx: Transaction, pairs: Iterable[tuple[str, str]], state: WorldState) -> Transaction:
    pairs = sorted({(str(u), str(b)) for u, b in pairs})
    if tx.id not in state.executed:
        for pair in pairs:
            state.statuses[pair] = Status.COMMON
        state.executed.add(tx.id)
    return replace(tx, payload={"allo_id": tx.payload.get("allo_id"),
                                "users": [list(p) for p in pairs]}, result_of=tx.id)


def _allocation_parties(allo: Transaction | None) -> list[tuple[str, str]]:
    if allo is None:
        return []
    pairs = []
    for a in allo.payload.get("allocations", []):
        pairs.append((a["buyer"], a["band"]))
        if a.get("buyer_band"):
            pairs.append((a["buyer"], a["buyer_band"]))
        pairs.append((a["seller"], a["band"]))
    return pairs


def exec_func_e2(lists: TxLists, rec: Transaction | None, allo: Transaction | None,
                 state: WorldState, shared: Sequence[SharedEntry] = (),
                 awaiting: Sequence[AwaitEntry] = (), region: int = 0, height: int = 0,
                 parent: int = 0) -> E2Result:
    """Status-transition execution.

    With a non-empty list 2 every transition is applied and sellers/buyers
    join the shared and awaiting lists. With a non-empty list 3 the status
    resets are applied and the block holds the allocation result, the record
    result and the reset results, in that order.
    """
    if lists.list2 and lists.list3:
        raise ValueError("exec_func_e2 handles list 2 or list 3, not both at once")
    shared = list(shared)
    awaiting = list(awaiting)
    rejected = []
    out: list[Transaction] = []
    if lists.list2:
        for tx in lists.list2:
            if tx.is_result or tx.kind is not TaskKind.STATUS_TRANS:
                continue
            problems = validate_transaction(tx, state) if tx.id not in state.executed else []
            if problems:
                log.info("status transaction %d rejected: %s", tx.id, ",".join(problems))
                rejected.append((tx, problems))
                continue
            p = tx.payload
            dst = Status(p.get("to_status", Status.COMMON))
            src = state.status(p["user"], p["band"])
            fresh = tx.id not in state.executed
            out.append(sta_func(tx, state))
            if not fresh:
                continue
            loc = tuple(float(c) for c in p.get("location", (0.0, 0.0, 0.0)))
            if dst is Status.SELLER:
                rec_band = state.bands[p["band"]]
                shared.append(SharedEntry(band=p["band"], seller=p["user"], ask=int(p.get("price", 0)),
                                          location=loc, tx_power_dbm=rec_band.tx_power_dbm,
                                          incumbents=tuple(rec_band.incumbents), source_tx=tx.id))
            elif dst is Status.BUYER:
                terminal = str(p.get("terminal", f"{p['user']}#{tx.id}"))
                awaiting.append(AwaitEntry(terminal=terminal, buyer=p["user"],
                                           bid=int(p.get("price", 0)), location=loc,
                                           demand=int(p.get("demand", 1)),
                                           duration=float(p.get("duration", 0.0)), source_tx=tx.id,
                                           status_band=p["band"]))
            elif src is Status.SELLER:
                shared = [e for e in shared if not (e.seller == p["user"] and e.band == p["band"])]
            elif src is Status.BUYER:
                awaiting = [e for e in awaiting if e.buyer != p["user"]]
    elif lists.list3:
        resets = [tx for tx in lists.list3
                  if tx.kind is TaskKind.STATUS_RESET and not tx.is_result]
        results = []
        for tx in resets:
            pairs = tx.payload.get("users")
            if pairs is None:
                pairs = _allocation_parties(allo)
            results.append(_reset_func(tx, pairs, state))
        out = [t for t in (allo, rec) if t is not None] + results
    block = Block(height=height, parent=parent, region=region, txs=tuple(out))
    return E2Result(block=block, shared=shared, awaiting=awaiting, rejected=rejected)


# -------------------------------------------------------------- interference

def fspl_db(distance_m: float, fc_hz: float = DEFAULT_FC_HZ) -> float:
    """Free-space path loss in dB; distances below 1 m are clamped to 1 m."""
    d = max(distance_m, 1.0)
    return 20.0 * math.log10(d) + 20.0 * math.log10(fc_hz) - 147.55


def _dist(a: Location, b: Location) -> float:
    return math.dist(a, b)


def received_dbm(tx_power_dbm: float, src: Location, dst: Location,
                 fc_hz: float = DEFAULT_FC_HZ) -> float:
    return tx_power_dbm - fspl_db(_dist(src, dst), fc_hz)


def aggregate_interference_mw(buyer: AwaitEntry, band: SharedEntry,
                              fc_hz: float = DEFAULT_FC_HZ) -> float:
    """Total interference a buyer would cause at the band's incumbents, in mW."""
    return math.fsum(10.0 ** (received_dbm(band.tx_power_dbm, buyer.location, inc, fc_hz) / 10.0)
                     for inc in band.incumbents)


def feasible(buyer: AwaitEntry, band: SharedEntry, threshold_dbm: float = DEFAULT_THRESHOLD_DBM,
             fc_hz: float = DEFAULT_FC_HZ) -> bool:
    if buyer.bid < band.ask:
        return False
    return all(received_dbm(band.tx_power_dbm, buyer.location, inc, fc_hz) <= threshold_dbm
               for inc in band.incumbents)


# ------------------------------------------------------------------- schemes

@dataclass
class SpecAlloSolution:
    assignments: dict[str, str] = field(default_factory=dict)  # band -> terminal
    prices: dict[str, int] = field(default_factory=dict)  # band -> clearing price
    rejected: list[str] = field(default_factory=list)

    def revenue(self) -> int:
        return sum(self.prices.values())


def _bands_by_id(shared: Sequence[SharedEntry]) -> list[SharedEntry]:
    # a band offered twice keeps its first offer
    seen: dict[str, SharedEntry] = {}
    for e in shared:
        seen.setdefault(e.band, e)
    return [seen[b] for b in sorted(seen)]


def _finish(assign: dict[str, AwaitEntry], awaiting: Sequence[AwaitEntry]) -> SpecAlloSolution:
    sol = SpecAlloSolution()
    for band in sorted(assign):
        sol.assignments[band] = assign[band].terminal
        sol.prices[band] = assign[band].bid
    served = {e.terminal for e in assign.values()}
    sol.rejected = sorted({e.terminal for e in awaiting} - served)
    return sol


def scheme_max_revenue(shared: Sequence[SharedEntry], awaiting: Sequence[AwaitEntry],
                       threshold_dbm: float = DEFAULT_THRESHOLD_DBM,
                       fc_hz: float = DEFAULT_FC_HZ) -> SpecAlloSolution:
    """Pay-as-bid allocation maximising total revenue.

    Buyers are taken by bid, highest first (ties: lower terminal id). Each
    demanded unit is placed along an augmenting path over feasible bands, so
    an earlier buyer may be moved to another band but never dropped. For
    vertex-weighted bipartite matching this greedy order is optimal.
    """
    bands = _bands_by_id(shared)
    buyers = sorted(awaiting, key=lambda e: (-e.bid, e.terminal, e.source_tx))
    adj = {id(b): [band for band in bands if feasible(b, band, threshold_dbm, fc_hz)] for b in buyers}
    holder: dict[str, tuple[AwaitEntry, int]] = {}  # band -> (buyer, unit)

    def augment(buyer: AwaitEntry, unit: int, visited: set[str]) -> bool:
        for band in adj[id(buyer)]:
            if band.band in visited:
                continue
            visited.add(band.band)
            current = holder.get(band.band)
            if current is None or augment(current[0], current[1], visited):
                holder[band.band] = (buyer, unit)
                return True
        return False

    for buyer in buyers:
        for unit in range(buyer.demand):
            if not augment(buyer, unit, set()):
                break
    return _finish({band: h[0] for band, h in holder.items()}, awaiting)


def scheme_min_interference(shared: Sequence[SharedEntry], awaiting: Sequence[AwaitEntry],
                            threshold_dbm: float = DEFAULT_THRESHOLD_DBM,
                            fc_hz: float = DEFAULT_FC_HZ) -> SpecAlloSolution:
    """Buyers in arrival order each take their lowest-interference feasible free bands.

    Ties go to the lower band id.
    """
    bands = _bands_by_id(shared)
    free = {b.band: b for b in bands}
    assign: dict[str, AwaitEntry] = {}
    for buyer in awaiting:
        ranked = sorted(
            (aggregate_interference_mw(buyer, b, fc_hz), b.band)
            for b in free.values() if feasible(buyer, b, threshold_dbm, fc_hz)
        )
        for _, band in ranked[: buyer.demand]:
            assign[band] = buyer
            del free[band]
    return _finish(assign, awaiting)


SCHEMES: dict[str, Callable[..., SpecAlloSolution]] = {
    "MaxRevenue": scheme_max_revenue,
    "MinInterference": scheme_min_interference,
}


def total_interference_mw(solution: SpecAlloSolution, shared: Sequence[SharedEntry],
                          awaiting: Sequence[AwaitEntry], fc_hz: float = DEFAULT_FC_HZ) -> float:
    bands = {b.band: b for b in _bands_by_id(shared)}
    buyers = {e.terminal: e for e in awaiting}
    return math.fsum(aggregate_interference_mw(buyers[t], bands[b], fc_hz)
                     for b, t in solution.assignments.items())


# -------------------------------------------------------------------- E3/E4

@dataclass
class SpecRecList:
    """Audit trail of allocation runs, keyed by allocation id."""

    runs: dict[Any, list[dict[str, Any]]] = field(default_factory=dict)

    def records(self) -> list[dict[str, Any]]:
        return [r for key in self.runs for r in self.runs[key]]

    def dump_jsonl(self, stream) -> int:
        return dump_jsonl(self.records(), stream)


@dataclass
class E3Result:
    result: Transaction | None
    records: SpecRecList
    solution: SpecAlloSolution
    shared: list[SharedEntry]
    awaiting: list[AwaitEntry]


def allo_func(solution: SpecAlloSolution, shared: Sequence[SharedEntry],
              awaiting: Sequence[AwaitEntry], state: WorldState) -> list[dict[str, Any]]:
    """Grant leases and move payments; assignments the buyer cannot pay for are dropped."""
    bands = {b.band: b for b in _bands_by_id(shared)}
    buyers = {e.terminal: e for e in awaiting}
    applied = []
    for band, terminal in sorted(solution.assignments.items()):
        buyer, offer = buyers[terminal], bands[band]
        price = solution.prices[band]
        rec = state.bands[band]
        if state.balances.get(buyer.buyer, 0) < price or not rec.idle(state.now):
            log.info("allocation of %s to %s dropped at execution", band, terminal)
            continue
        state.balances[buyer.buyer] -= price
        state.balances[offer.seller] = state.balances.get(offer.seller, 0) + price
        rec.lessee = buyer.buyer
        rec.lease_expiry = state.now + buyer.duration
        applied.append({"band": band, "terminal": terminal, "buyer": buyer.buyer,
                        "buyer_band": buyer.status_band,
                        "seller": offer.seller, "price": price,
                        "tx_power_dbm": offer.tx_power_dbm,
                        "lease_expiry": rec.lease_expiry})
    return applied


def exec_func_e3(lists: TxLists, shared: Sequence[SharedEntry], awaiting: Sequence[AwaitEntry],
                 scheme: str, state: WorldState, fc_hz: float = DEFAULT_FC_HZ) -> E3Result:
    """Run the allocation scheme for each SpecAllo transaction in list 3."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown allocation scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    threshold = float(state.regulations.get(THRESHOLD_KEY, DEFAULT_THRESHOLD_DBM))
    shared = list(shared)
    awaiting = list(awaiting)
    rec_list = SpecRecList()
    allocations: list[dict[str, Any]] = []
    allo_txs = [tx for tx in lists.list3 if tx.kind is TaskKind.SPEC_ALLO and not tx.is_result]
    solution = SpecAlloSolution()
    for tx in allo_txs:
        key = tx.payload.get("allo_id")
        if tx.id in state.executed:
            continue
        solution = SCHEMES[scheme](shared, awaiting, threshold, fc_hz)
        applied = allo_func(solution, shared, awaiting, state)
        state.executed.add(tx.id)
        params = {"scheme": scheme, "threshold_dbm": threshold, "fc_hz": fc_hz}
        rec_list.runs[key] = [
            {"allo_id": key, "request": tx.id, "params": params, **a} for a in applied
        ]
        allocations.extend({**a, "allo_id": key} for a in applied)
        # consumed offers leave the lists; unserved buyers keep waiting
        sold = {a["band"] for a in applied}
        granted: dict[str, int] = {}
        for a in applied:
            granted[a["terminal"]] = granted.get(a["terminal"], 0) + 1
        shared = [e for e in shared if e.band not in sold]
        remaining = []
        for e in awaiting:
            left = e.demand - granted.get(e.terminal, 0)
            if left > 0:
                remaining.append(replace(e, demand=left))
        awaiting = remaining
    result = None
    if allo_txs:
        head = allo_txs[0]
        result = replace(head, payload={"allo_ids": [t.payload.get("allo_id") for t in allo_txs],
                                        "scheme": scheme, "allocations": allocations},
                         result_of=head.id)
    return E3Result(result=result, records=rec_list, solution=solution, shared=shared,
                    awaiting=awaiting)


@dataclass
class E4Result:
    result: Transaction | None
    deferred: list[Transaction]


def rec_func(records: Sequence[dict[str, Any]], state: WorldState) -> dict[str, Any]:
    deltas: dict[str, int] = {}
    for r in records:
        deltas[r["buyer"]] = deltas.get(r["buyer"], 0) - r["price"]
        deltas[r["seller"]] = deltas.get(r["seller"], 0) + r["price"]
    state.audit.extend(records)
    return {
        "bands": [r["band"] for r in records],
        "prices": {r["band"]: r["price"] for r in records},
        "power": {r["band"]: r["tx_power_dbm"] for r in records},
        "status_transitions": [[r["buyer"], r["band"], Status.BUYER.value, Status.COMMON.value]
                               for r in records]
                              + [[r["seller"], r["band"], Status.SELLER.value, Status.COMMON.value]
                                 for r in records],
        "asset_deltas": dict(sorted(deltas.items())),
    }


def exec_func_e4(lists: TxLists, rec_list: SpecRecList, state: WorldState) -> E4Result:
    """Write the audit records matching each ResRecord transaction."""
    recs = [tx for tx in lists.list3 if tx.kind is TaskKind.RES_RECORD and not tx.is_result]
    deferred = []
    matched: list[dict[str, Any]] = []
    head = None
    for tx in recs:
        key = tx.payload.get("allo_id")
        if key not in rec_list.runs:
            log.warning("record transaction %d has no allocation %r; deferred", tx.id, key)
            deferred.append(tx)
            continue
        head = head or tx
        if tx.id not in state.executed:
            matched.extend(rec_list.runs[key])
            state.executed.add(tx.id)
    if head is None:
        return E4Result(result=None, deferred=deferred)
    summary = rec_func(matched, state)
    return E4Result(result=replace(head, payload=summary, result_of=head.id), deferred=deferred)


# ------------------------------------------------------------- region round

@dataclass
class RegionLedgerState:
    """Mutable per-region state carried between rounds."""

    region: int
    state: WorldState
    shared: list[SharedEntry] = field(default_factory=list)
    awaiting: list[AwaitEntry] = field(default_factory=list)
    height: int = 0
    tip: int = 0
    pending: list[Transaction] = field(default_factory=list)
    bl_pool: list[Block] = field(default_factory=list)


@dataclass
class RoundBlocks:
    global_block: Block | None
    candidate_block: Block | None
    status_block: Block | None
    allocation_block: Block | None
    deferred: list[Transaction]

    def intra_blocks(self) -> list[Block]:
        return [b for b in (self.candidate_block, self.status_block, self.allocation_block) if b]


def _chain(rs: RegionLedgerState, block: Block) -> Block:
    block = replace(block, height=rs.height + 1, parent=rs.tip, region=rs.region)
    rs.height += 1
    rs.tip = block.digest
    return block


def process_round(rs: RegionLedgerState, batch: Sequence[Transaction], scheme: str = "MaxRevenue",
                  capacity: int | None = None) -> RoundBlocks:
    """One round of the region pipeline: filter, order, then E1, E2, E3/E4/E2.

    Pool-1 transactions are packed into a tier-2 block for the other regions;
    the head of the received-block pool is executed locally.
    """
    pools = filter_transactions(list(rs.pending) + list(batch))
    lists, candidate = order_transactions(pools, rs.bl_pool, capacity)
    rs.pending = list(lists.deferred)
    if candidate is not None:
        rs.bl_pool.pop(0)

    global_block = None
    if lists.list1:
        global_block = Block(height=0, parent=0, region=rs.region, txs=tuple(lists.list1), tier2=True)

    cand_block = None
    e1 = exec_func_e1(candidate, rs.state)
    if e1 is not None:
        cand_block = _chain(rs, replace(e1.block, tier2=False))

    status_block = None
    if lists.list2:
        e2 = exec_func_e2(TxLists(list2=lists.list2), None, None, rs.state, rs.shared, rs.awaiting)
        rs.shared, rs.awaiting = e2.shared, e2.awaiting
        status_block = _chain(rs, e2.block)

    allo_block = None
    if lists.list3:
        l3 = TxLists(list3=lists.list3)
        e3 = exec_func_e3(l3, rs.shared, rs.awaiting, scheme, rs.state)
        rs.shared, rs.awaiting = e3.shared, e3.awaiting
        e4 = exec_func_e4(l3, e3.records, rs.state)
        rs.pending.extend(e4.deferred)
        e2b = exec_func_e2(l3, e4.result, e3.result, rs.state)
        allo_block = _chain(rs, e2b.block)
    return RoundBlocks(global_block=global_block, candidate_block=cand_block,
                       status_block=status_block, allocation_block=allo_block,
                       deferred=list(rs.pending))

