"""Two-tier consensus: PBFT inside a region with execution at the commit
stage, then a bootstrapper-driven vote among the regulators of all regions.

Faulty nodes are crash-silent for the whole round: they neither send nor
process messages.
"""

from __future__ import annotations

import enum
import json
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .domain import Block, ParticipantId, ParticipantKind, TaskKind, WorldState
from .spectrum import (
    RegionLedgerState,
    TxLists,
    exec_func_e1,
    exec_func_e2,
    exec_func_e3,
    exec_func_e4,
)

log = logging.getLogger(__name__)


class MessageKind(str, enum.Enum):
    PRE_PREPARE = "PrePrepare"
    PREPARE = "Prepare"
    COMMIT = "Commit"
    VOTE = "Vote"


MESSAGE_BYTES = {
    MessageKind.PRE_PREPARE: 800,
    MessageKind.PREPARE: 200,
    MessageKind.COMMIT: 215,
    MessageKind.VOTE: 800,
}


@dataclass(frozen=True)
class ConsensusMessage:
    kind: MessageKind
    sender: ParticipantId
    receiver: ParticipantId
    digest: int
    round: int

    @property
    def size_bytes(self) -> int:
        return MESSAGE_BYTES[self.kind]


class Phase(str, enum.Enum):
    IDLE = "Idle"
    PRE_PREPARED = "PrePrepared"
    PREPARED = "Prepared"
    COMMITTED = "Committed"


class ConsensusDivergence(RuntimeError):
    """Healthy replicas produced different execution results for one block."""


class Quorum(NamedTuple):
    intra_fault_max: int
    inter_fault_max: int
    intra_quorum: int


def quorum_thresholds(ng: int, ns: int, m: int) -> Quorum:
    """Fault budgets of both tiers and the smallest intra count above two thirds."""
    if ng < 1 or ns < 0 or m < 1:
        raise ValueError("need Ng >= 1, Ns >= 0, M >= 1")
    n = ng + ns
    return Quorum(intra_fault_max=n // 3, inter_fault_max=m // 2, intra_quorum=2 * n // 3 + 1)


def commit_quorum(n: int) -> int:
    """Healthy replies a round needs: everyone except the tolerated faults."""
    return n - n // 3


def vote_quorum(m: int) -> int:
    return m - m // 2


# ------------------------------------------------------------------ faults

@dataclass(frozen=True)
class FaultMask:
    faulty: frozenset[ParticipantId] = frozenset()

    def __contains__(self, pid: ParticipantId) -> bool:
        return pid in self.faulty

    def count(self, nodes: Iterable[ParticipantId]) -> int:
        return sum(1 for n in nodes if n in self.faulty)

    @classmethod
    def of(cls, nodes: Sequence[ParticipantId], bits: Sequence[bool]) -> "FaultMask":
        return cls(frozenset(n for n, b in zip(nodes, bits) if b))


def sample_faults(pf_g: float, pf_s: float, rng: np.random.Generator,
                  nodes: Sequence[ParticipantId]) -> FaultMask:
    """Independent crash faults: ground nodes with ``pf_g``, satellites with ``pf_s``."""
    for p in (pf_g, pf_s):
        if not 0.0 <= p <= 1.0:
            raise ValueError("fault probabilities must lie in [0, 1]")
    u = rng.random(len(nodes))
    probs = np.array([pf_s if n.kind is ParticipantKind.SATELLITE else pf_g for n in nodes])
    return FaultMask.of(nodes, u < probs)


# ------------------------------------------------------------------ execution

Executor = Callable[[Block, RegionLedgerState], Block]


def execute_block(block: Block, rs: RegionLedgerState, scheme: str = "MaxRevenue") -> Block:
    """Execute a raw block on one replica and return the result block.

    Tier-2 blocks of pool-1 transactions pass through unexecuted; Global
    transactions in a received candidate are executed by E1; status blocks by
    E2; allocation blocks by E3, E4 and E2.
    """
    kinds = {tx.kind for tx in block.txs if not tx.is_result}
    if block.tier2 or not kinds:
        return block
    if kinds == {TaskKind.GLOBAL} or any(tx.cross_region for tx in block.txs):
        return exec_func_e1(block, rs.state).block
    if TaskKind.SPEC_ALLO in kinds:
        lists = TxLists(list3=list(block.txs))
        e3 = exec_func_e3(lists, rs.shared, rs.awaiting, scheme, rs.state)
        rs.shared, rs.awaiting = e3.shared, e3.awaiting
        e4 = exec_func_e4(lists, e3.records, rs.state)
        e2 = exec_func_e2(lists, e4.result, e3.result, rs.state, region=block.region,
                          height=block.height, parent=block.parent)
        return e2.block
    e2 = exec_func_e2(TxLists(list2=list(block.txs)), None, None, rs.state, rs.shared,
                      rs.awaiting, region=block.region, height=block.height, parent=block.parent)
    rs.shared, rs.awaiting = e2.shared, e2.awaiting
    return e2.block


# ------------------------------------------------------------------ region

def region_members(region: int, ng: int, ns: int) -> list[ParticipantId]:
    """Regulator first, then base stations, then satellites."""
    members = [ParticipantId.regulator(region)]
    members += [ParticipantId(region, ParticipantKind.BASE_STATION, i) for i in range(1, ng)]
    members += [ParticipantId(region, ParticipantKind.SATELLITE, i) for i in range(ns)]
    return members


@dataclass
class Region:
    index: int
    members: list[ParticipantId]
    replicas: dict[ParticipantId, RegionLedgerState]
    scheme: str = "MaxRevenue"
    chain: dict[ParticipantId, list[int]] = field(default_factory=dict)

    @classmethod
    def create(cls, index: int, ng: int, ns: int, state: WorldState | None = None,
               scheme: str = "MaxRevenue") -> "Region":
        members = region_members(index, ng, ns)
        base = state if state is not None else WorldState()
        replicas = {m: RegionLedgerState(region=index, state=base.copy()) for m in members}
        return cls(index=index, members=members, replicas=replicas, scheme=scheme,
                   chain={m: [] for m in members})

    @property
    def regulator(self) -> ParticipantId:
        return self.members[0]

    @property
    def ng(self) -> int:
        return sum(1 for m in self.members if m.is_ground)

    @property
    def satellites(self) -> list[ParticipantId]:
        return [m for m in self.members if m.kind is ParticipantKind.SATELLITE]


@dataclass
class NodeState:
    phase: Phase = Phase.IDLE
    prepares: set = field(default_factory=set)
    commits: dict = field(default_factory=dict)  # digest -> set of senders
    result: Block | None = None


@dataclass
class IntraOutcome:
    committed: bool
    primary: ParticipantId | None
    block: Block | None  # result block held by committing nodes
    raw_digest: int | None
    committers: list[ParticipantId]
    messages: dict[str, int]
    phases: dict[str, str]

    @property
    def digest(self) -> int | None:
        return self.block.digest if self.block is not None else None


def _select_primary(region: Region, faults: FaultMask) -> ParticipantId | None:
    # the regulator packages blocks; if it is silent the next healthy member in
    # participant order takes over for this round
    for m in region.members:
        if m not in faults:
            return m
    return None


def _package(region: Region, lists: TxLists, list_index: int, primary: ParticipantId) -> Block:
    rs = region.replicas[primary]
    txs = tuple(lists[list_index])
    return Block(height=rs.height + 1, parent=rs.tip, region=region.index, txs=txs,
                 tier2=list_index == 1)


def run_intra_round(region: Region, lists: TxLists, faults: FaultMask, list_index: int | None = None,
                    round_no: int = 0, executor: Executor | None = None) -> IntraOutcome:
    """One PBFT instance inside a region.

    The primary broadcasts a pre-prepare for the raw block; healthy replicas
    answer with prepares; a replica that gathers a quorum executes the block
    and broadcasts a commit carrying its result digest; a quorum of matching
    commits commits the result block.
    """
    if list_index is None:
        list_index = next((i for i in (2, 3, 1) if lists[i]), 2)
    run = executor or (lambda b, rs: execute_block(b, rs, region.scheme))
    members = region.members
    n = len(members)
    need = commit_quorum(n)
    counts = {k.value: 0 for k in MessageKind}
    primary = _select_primary(region, faults)
    if primary is None:
        return IntraOutcome(False, None, None, None, [], counts, {})
    raw = _package(region, lists, list_index, primary)
    raw_digest = raw.digest
    nodes = {m: NodeState() for m in members if m not in faults}
    queue: deque[ConsensusMessage] = deque()

    def broadcast(kind: MessageKind, sender: ParticipantId, digest: int) -> None:
        for r in members:
            if r != sender:
                counts[kind.value] += 1
                queue.append(ConsensusMessage(kind, sender, r, digest, round_no))

    def try_prepare(node: ParticipantId) -> None:
        st = nodes[node]
        if st.phase is Phase.PRE_PREPARED and len(st.prepares) >= need:
            st.phase = Phase.PREPARED
            st.result = run(raw, region.replicas[node])
            d = st.result.digest
            st.commits.setdefault(d, set()).add(node)
            broadcast(MessageKind.COMMIT, node, d)
            try_commit(node)

    def try_commit(node: ParticipantId) -> None:
        st = nodes[node]
        if st.phase is Phase.PREPARED and st.result is not None:
            if len(st.commits.get(st.result.digest, ())) >= need:
                st.phase = Phase.COMMITTED

    # the primary's pre-prepare doubles as its own prepare
    nodes[primary].phase = Phase.PRE_PREPARED
    nodes[primary].prepares.add(primary)
    broadcast(MessageKind.PRE_PREPARE, primary, raw_digest)
    try_prepare(primary)
    while queue:
        msg = queue.popleft()
        st = nodes.get(msg.receiver)
        if st is None:
            continue  # silent receiver
        if msg.kind is MessageKind.PRE_PREPARE:
            if st.phase is Phase.IDLE and msg.digest == raw_digest:
                st.phase = Phase.PRE_PREPARED
                st.prepares.update({msg.sender, msg.receiver})
                broadcast(MessageKind.PREPARE, msg.receiver, raw_digest)
                try_prepare(msg.receiver)
        elif msg.kind is MessageKind.PREPARE:
            if msg.digest == raw_digest:
                st.prepares.add(msg.sender)
                try_prepare(msg.receiver)
        elif msg.kind is MessageKind.COMMIT:
            st.commits.setdefault(msg.digest, set()).add(msg.sender)
            try_commit(msg.receiver)

    committers = [m for m, st in nodes.items() if st.phase is Phase.COMMITTED]
    digests = {nodes[m].result.digest for m in nodes if nodes[m].result is not None}
    if len(digests) > 1:
        raise ConsensusDivergence(
            f"region {region.index} round {round_no}: {len(digests)} distinct execution results")
    block = nodes[committers[0]].result if committers else None
    for m in committers:
        rs = region.replicas[m]
        rs.height = block.height
        rs.tip = block.digest
        region.chain[m].append(block.digest)
    phases = {str(m): st.phase.value for m, st in nodes.items()}
    return IntraOutcome(bool(committers), primary, block, raw_digest, committers, counts, phases)


# ------------------------------------------------------------------ tier 2

@dataclass
class Tier2State:
    regulators: list[ParticipantId]
    bootstrapper: ParticipantId = field(default_factory=lambda: ParticipantId(-1, ParticipantKind.DISSEMINATOR, 0))
    bl_pool: list[Block] = field(default_factory=list)
    votes: dict[int, set] = field(default_factory=dict)
    committed_height: int = 0
    ledgers: dict[ParticipantId, list[int]] = field(default_factory=dict)
    global_chain: list[int] = field(default_factory=list)
    states: dict[ParticipantId, WorldState] = field(default_factory=dict)

    @classmethod
    def create(cls, m: int, state: WorldState | None = None) -> "Tier2State":
        regs = [ParticipantId.regulator(i) for i in range(m)]
        base = state if state is not None else WorldState()
        return cls(regulators=regs, ledgers={r: [] for r in regs},
                   states={r: base.copy() for r in regs})

    @property
    def m(self) -> int:
        return len(self.regulators)


@dataclass
class InterOutcome:
    committed: bool
    block: Block | None
    votes: int
    messages: dict[str, int]
    rejected_by: list[ParticipantId]


def _verify(candidate: Block, claimed: int, state: WorldState) -> tuple[bool, Block]:
    # pool-1 candidates are executed, result-bearing blocks re-hashed
    if candidate.tier2:
        scratch = state.copy()
        result = exec_func_e1(candidate, scratch).block
        return True, result
    return candidate.digest == claimed, candidate


def run_inter_round(tier2: Tier2State, faults: FaultMask, claimed: int | None = None) -> InterOutcome:
    """Bootstrapper-driven commit of the head of the block pool.

    Each healthy regulator verifies (or executes) the candidate and votes;
    the block commits globally once the votes reach ``M - M//2``.
    """
    counts = {k.value: 0 for k in MessageKind}
    if not tier2.bl_pool:
        raise ValueError("tier-2 block pool is empty")
    candidate = tier2.bl_pool.pop(0)
    claimed = candidate.digest if claimed is None else claimed
    results: dict[ParticipantId, Block] = {}
    rejected = []
    for reg in tier2.regulators:
        counts[MessageKind.PRE_PREPARE.value] += 1  # candidate fan-out
        if reg in faults:
            continue
        ok, result = _verify(candidate, claimed, tier2.states[reg])
        if not ok:
            log.warning("regulator %s rejected candidate %x", reg, claimed)
            rejected.append(reg)
            continue
        results[reg] = result
        counts[MessageKind.VOTE.value] += 1
    digests = {b.digest for b in results.values()}
    if len(digests) > 1:
        raise ConsensusDivergence("regulators disagree on the executed tier-2 block")
    votes = len(results)
    tier2.votes[claimed] = set(results)
    if votes < vote_quorum(tier2.m):
        return InterOutcome(False, None, votes, counts, rejected)
    block = next(iter(results.values()))
    for reg in results:
        if candidate.tier2:
            exec_func_e1(candidate, tier2.states[reg])
        tier2.ledgers[reg].append(block.digest)
    tier2.global_chain.append(block.digest)
    tier2.committed_height += 1
    return InterOutcome(True, block, votes, counts, rejected)


# ------------------------------------------------------------------ full round

@dataclass
class RoundTrace:
    round: int
    region: int
    primary: str | None
    intra_committed: bool
    relayed: bool
    inter_committed: bool
    intra_messages: dict[str, int]
    inter_messages: dict[str, int]
    phases: dict[str, str]
    digest: int | None

    @property
    def success(self) -> bool:
        return self.inter_committed

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, separators=(",", ":"))


@dataclass
class TwoTierSystem:
    regions: list[Region]
    tier2: Tier2State
    traces: list[RoundTrace] = field(default_factory=list)

    @classmethod
    def create(cls, m: int, ng: int, ns: int, state: WorldState | None = None,
               scheme: str = "MaxRevenue") -> "TwoTierSystem":
        regions = [Region.create(i, ng, ns, state, scheme) for i in range(m)]
        return cls(regions=regions, tier2=Tier2State.create(m, state))

    def dump_traces(self, stream) -> None:
        for t in self.traces:
            stream.write(t.to_json() + "\n")


def run_round(system: TwoTierSystem, region_index: int, lists: TxLists, region_faults: FaultMask,
              regulator_faults: FaultMask, list_index: int | None = None,
              round_no: int = 0) -> RoundTrace:
    """Intra-region PBFT, satellite relay to the bootstrapper, tier-2 vote.

    The region's own regulator fault status is taken from ``region_faults``.
    """
    region = system.regions[region_index]
    local = region.regulator
    tier_faults = set(r for r in regulator_faults.faulty if r != local)
    if local in region_faults:
        tier_faults.add(local)
    intra = run_intra_round(region, lists, region_faults, list_index, round_no)
    relay = any(s not in region_faults for s in region.satellites)
    inter_ok = False
    inter_msgs = {k.value: 0 for k in MessageKind}
    if intra.committed and relay:
        system.tier2.bl_pool.append(intra.block)
        inter = run_inter_round(system.tier2, FaultMask(frozenset(tier_faults)))
        inter_ok = inter.committed
        inter_msgs = inter.messages
    trace = RoundTrace(round=round_no, region=region_index,
                       primary=str(intra.primary) if intra.primary else None,
                       intra_committed=intra.committed, relayed=relay and intra.committed,
                       inter_committed=inter_ok, intra_messages=intra.messages,
                       inter_messages=inter_msgs, phases=intra.phases, digest=intra.digest)
    system.traces.append(trace)
    return trace


def appendix_event(ng: int, ns: int, m: int, reg_faulty: bool, ground_faults: int,
                   sat_faults: int, other_reg_faults: int) -> bool:
    """Success event behind the closed-form rate, from fault counts alone."""
    intra = int(reg_faulty) + ground_faults + sat_faults <= (ng + ns) // 3
    relay = sat_faults < ns
    inter = int(reg_faulty) + other_reg_faults <= m // 2
    return intra and relay and inter
