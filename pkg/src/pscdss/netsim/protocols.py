"""Round-level timing models of PSC-DSS and the four benchmark systems."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..consensus import MESSAGE_BYTES, MessageKind, commit_quorum, vote_quorum
from ..domain import HEADER_INTRA_BYTES, HEADER_TIER2_BYTES, TX_SIZE_BYTES, ParticipantId, ParticipantKind
from .engine import EventQueue, LinkModel, Network
from .topology import EARTH_RADIUS_M, Topology

PP = MESSAGE_BYTES[MessageKind.PRE_PREPARE]
PR = MESSAGE_BYTES[MessageKind.PREPARE]
CM = MESSAGE_BYTES[MessageKind.COMMIT]
VOTE = MESSAGE_BYTES[MessageKind.VOTE]

SAS_ID = ParticipantId(-1, ParticipantKind.REGULATOR, 0)


class Protocol(str, enum.Enum):
    PSCDSS = "PSCDSS"
    CBRS = "CBRS"
    SINGLE_CHAIN = "SingleChain"
    MULTI_CHAIN = "MultiChain"
    CROSS_CHAIN = "CrossChain"


@dataclass(frozen=True)
class Workload:
    """Transactions offered per round across the whole system.

    ``txs_per_round=None`` means one transaction per region member of a
    single region (a full intra-region block).
    """

    txs_per_round: int | None = None
    tx_bytes: int = TX_SIZE_BYTES["StatusTrans"]
    pf_g: float = 0.0
    pf_s: float = 0.0

    def total(self, topology: Topology) -> int:
        if self.txs_per_round is not None:
            return self.txs_per_round
        return len(topology.regions[0])


@dataclass
class Metrics:
    protocol: str
    latencies: list[float] = field(default_factory=list)
    failed_rounds: int = 0
    committed_txs: int = 0
    elapsed: float = 0.0
    messages: int = 0
    bytes: int = 0

    @property
    def committed_rounds(self) -> int:
        return len(self.latencies)

    @property
    def mean_latency(self) -> float:
        if not self.latencies:
            return math.nan
        return math.fsum(self.latencies) / len(self.latencies)


def measure_tps(metrics: Metrics) -> float:
    """Committed transactions per simulated second."""
    if metrics.committed_rounds == 0 or metrics.elapsed <= 0:
        raise ValueError("TPS undefined: no committed rounds")
    return metrics.committed_txs / metrics.elapsed


def split_evenly(total: int, parts: int) -> list[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if i < extra else 0) for i in range(parts)]


def block_bytes(n_txs: int, tx_bytes: int, tier2: bool = False) -> int:
    return (HEADER_TIER2_BYTES if tier2 else HEADER_INTRA_BYTES) + n_txs * tx_bytes


# ------------------------------------------------------------------ PBFT timing

class PbftRun:
    """Timing of one PBFT instance over ``nodes``; faulty nodes stay silent."""

    def __init__(self, net: Network, nodes: Sequence[ParticipantId], primary: ParticipantId,
                 faulty: set[ParticipantId], on_commit: Callable[[ParticipantId, float], None]):
        self.net = net
        self.nodes = list(nodes)
        self.primary = primary
        self.faulty = faulty
        self.need = commit_quorum(len(self.nodes))
        self.on_commit = on_commit
        self.pre_prepared: set[ParticipantId] = set()
        self.prepares: dict[ParticipantId, set] = {n: set() for n in self.nodes}
        self.commits: dict[ParticipantId, set] = {n: set() for n in self.nodes}
        self.prepared: set[ParticipantId] = set()
        self.committed: dict[ParticipantId, float] = {}

    def _broadcast(self, src: ParticipantId, size: int, label: str, handler) -> None:
        for dst in self.nodes:
            if dst != src:
                self.net.send(src, dst, size, label, handler, src, dst)

    def start(self) -> None:
        p = self.primary
        self.pre_prepared.add(p)
        self.prepares[p].add(p)
        self._broadcast(p, PP, "PrePrepare", self._on_pre_prepare)
        self._check(p)

    def _on_pre_prepare(self, src, dst) -> None:
        if dst in self.faulty or dst in self.pre_prepared:
            return
        self.pre_prepared.add(dst)
        self.prepares[dst].update((src, dst))
        self._broadcast(dst, PR, "Prepare", self._on_prepare)
        self._check(dst)

    def _on_prepare(self, src, dst) -> None:
        if dst in self.faulty:
            return
        self.prepares[dst].add(src)
        self._check(dst)

    def _on_commit(self, src, dst) -> None:
        if dst in self.faulty:
            return
        self.commits[dst].add(src)
        self._check(dst)

    def _check(self, node) -> None:
        if node not in self.pre_prepared:
            return
        if node not in self.prepared and len(self.prepares[node]) >= self.need:
            self.prepared.add(node)
            self.commits[node].add(node)
            self._broadcast(node, CM, "Commit", self._on_commit)
        if node in self.prepared and node not in self.committed and len(self.commits[node]) >= self.need:
            self.committed[node] = self.net.now
            self.on_commit(node, self.net.now)


def _first_healthy(nodes: Sequence[ParticipantId], faulty: set) -> ParticipantId | None:
    return next((n for n in nodes if n not in faulty), None)


def _nearest_healthy_satellite(topo: Topology, region: int, src: ParticipantId, faulty: set):
    sats = [s for s in topo.satellites(region) if s not in faulty]
    if not sats:
        return None
    return min(sats, key=lambda s: (topo.distance(src, s), s))


# ------------------------------------------------------------------ protocols

def _round_pscdss(net: Network, topo: Topology, loads: list[int], tx_bytes: int, faulty: set):
    m = topo.m
    result = {"latency": None, "txs": 0}
    regs = [topo.regulator(r) for r in range(m)]
    healthy_regs = [r for r in regs if r not in faulty]
    submitted: list[int] = []
    expected = []
    for r in range(m):
        members = topo.regions[r]
        healthy = [n for n in members if n not in faulty]
        relay_ok = any(s not in faulty for s in topo.satellites(r))
        if len(healthy) >= commit_quorum(len(members)) and relay_ok:
            expected.append(r)
    boot = topo.bootstrapper

    def tier2_start():
        size = HEADER_TIER2_BYTES + sum(block_bytes(loads[r], tx_bytes) - HEADER_INTRA_BYTES
                                        for r in submitted)
        votes: set = set()

        def on_candidate(src, dst):
            if dst in faulty:
                return
            net.send(dst, boot, VOTE, "Vote", on_vote, dst, boot)

        def on_vote(src, dst):
            votes.add(src)
            if len(votes) == vote_quorum(m) and result["latency"] is None:
                result["latency"] = net.now
                result["txs"] = sum(loads[r] for r in submitted)

        for reg in regs:
            net.send(boot, reg, size, "Candidate", on_candidate, boot, reg)

    def on_block_at_boot(src, dst, region):
        submitted.append(region)
        if len(submitted) == len(expected):
            tier2_start()

    def relay(src, dst, region):
        net.send(dst, boot, block_bytes(loads[region], tx_bytes), "Relay",
                 on_block_at_boot, dst, boot, region)

    def committed(region, primary):
        def cb(node, t):
            if node != primary:
                return
            sat = _nearest_healthy_satellite(topo, region, primary, faulty)
            if sat is None:
                return
            net.send(primary, sat, block_bytes(loads[region], tx_bytes), "Submit",
                     relay, primary, sat, region)
        return cb

    if not expected or len(healthy_regs) < vote_quorum(m):
        # nothing can commit globally; let the intra rounds play out for the counters
        pass
    for r in range(m):
        primary = _first_healthy(topo.regions[r], faulty)
        if primary is None:
            continue
        PbftRun(net, topo.regions[r], primary, faulty, committed(r, primary)).start()
    net.queue.run()
    return result


def _round_single_chain(net: Network, topo: Topology, loads: list[int], tx_bytes: int, faulty: set):
    nodes = [n for region in topo.regions for n in region]
    result = {"latency": None, "txs": 0}
    primary = _first_healthy(nodes, faulty)
    if primary is None:
        return result

    def cb(node, t):
        if node == primary:
            result["latency"] = t
            result["txs"] = sum(loads)

    PbftRun(net, nodes, primary, faulty, cb).start()
    net.queue.run()
    return result


def _round_multi_chain(net: Network, topo: Topology, loads: list[int], tx_bytes: int, faulty: set):
    m = topo.m
    result = {"latency": None, "txs": 0}
    regs = [topo.regulator(r) for r in range(m)]
    hub = _first_healthy(regs, faulty)
    if hub is None:
        return result
    arrived: set[int] = set()
    expected = {r for r in range(m)
                if sum(1 for n in topo.regions[r] if n not in faulty) >= commit_quorum(len(topo.regions[r]))
                and topo.regulator(r) not in faulty}

    def global_done(node, t):
        if node == hub:
            result["latency"] = t
            result["txs"] = sum(loads[r] for r in arrived)

    def on_record(src, dst, region):
        arrived.add(region)
        if arrived == expected:
            PbftRun(net, regs, hub, faulty, global_done).start()

    def local_done(region):
        reg = topo.regulator(region)

        def cb(node, t):
            if node != reg:
                return
            if reg == hub:
                on_record(reg, hub, region)
            else:
                net.send(reg, hub, block_bytes(loads[region], tx_bytes), "Record",
                         on_record, reg, hub, region)
        return cb

    for r in range(m):
        reg = topo.regulator(r)
        if reg in faulty:
            continue
        PbftRun(net, topo.regions[r], reg, faulty, local_done(r)).start()
    net.queue.run()
    return result


def _relay_path(topo: Topology, a: int, b: int, faulty: set):
    ra, rb = topo.regulator(a), topo.regulator(b)
    sa = _nearest_healthy_satellite(topo, a, ra, faulty)
    sb = _nearest_healthy_satellite(topo, b, rb, faulty)
    if sa is None or sb is None:
        return None
    return [ra, sa, sb, rb]


def _round_cross_chain(net: Network, topo: Topology, loads: list[int], tx_bytes: int, faulty: set):
    m = topo.m
    if m < 2:
        raise ValueError("CrossChain needs at least two regions")
    result = {"latency": None, "txs": 0}
    pairs = [(i, i + 1) for i in range(0, m - 1, 2)]
    if m % 2:
        pairs.append((m - 1, 0))
    done: dict[tuple[int, int], float] = {}
    viable = []
    for a, b in pairs:
        ok = all(sum(1 for n in topo.regions[r] if n not in faulty) >= commit_quorum(len(topo.regions[r]))
                 and topo.regulator(r) not in faulty for r in (a, b))
        if ok and _relay_path(topo, a, b, faulty) is not None:
            viable.append((a, b))

    def hop_chain(path, size, label, on_done):
        # forward along the path; each hop is generate, send, verify
        def step(i):
            if i == len(path) - 1:
                on_done()
                return
            net.send(path[i], path[i + 1], size, label, lambda s, d: step(i + 1), path[i], path[i + 1])
        step(0)

    def run_pair(a, b):
        path = _relay_path(topo, a, b, faulty)
        back = list(reversed(path))
        load = loads[a] + loads[b]
        size = block_bytes(load, tx_bytes)

        def region_b_done(node, t):
            if node == topo.regulator(b):
                done[(a, b)] = t
                if len(done) == len(viable):
                    result["latency"] = max(done.values())
                    result["txs"] = sum(loads[x] + loads[y] for x, y in viable)

        def start_b():
            PbftRun(net, topo.regions[b], topo.regulator(b), faulty, region_b_done).start()

        # two-phase confirmation: prepare/ack, then commit/ack
        def phase2():
            hop_chain(path, CM, "Confirm", lambda: hop_chain(back, CM, "ConfirmAck", start_b))

        def phase1():
            hop_chain(path, size, "Lock", lambda: hop_chain(back, PR, "LockAck", phase2))

        def region_a_done(node, t):
            if node == topo.regulator(a):
                phase1()

        PbftRun(net, topo.regions[a], topo.regulator(a), faulty, region_a_done).start()

    for a, b in viable:
        run_pair(a, b)
    net.queue.run()
    return result


def sas_position(topo: Topology) -> np.ndarray:
    centroid = np.mean([topo.positions[topo.regulator(r)] for r in range(topo.m)], axis=0)
    return centroid / np.linalg.norm(centroid) * EARTH_RADIUS_M


def _round_cbrs(net: Network, topo: Topology, loads: list[int], tx_bytes: int, faulty: set):
    result = {"latency": None, "txs": 0}
    pending = {"n": 0, "answered": 0}

    def on_response(src, dst):
        pending["answered"] += 1
        if pending["answered"] == pending["n"]:
            result["latency"] = net.now
            result["txs"] = pending["n"]

    def on_request(src, dst):
        # the SAS answers once the request is verified
        net.send(SAS_ID, src, tx_bytes, "Response", on_response, SAS_ID, src)

    for r in range(topo.m):
        ground = [n for n in topo.regions[r] if n.is_ground and n not in faulty]
        for k in range(loads[r]):
            if not ground:
                break
            issuer = ground[k % len(ground)]
            pending["n"] += 1
            net.send(issuer, SAS_ID, tx_bytes, "Request", on_request, issuer, SAS_ID)
    net.queue.run()
    return result


_ROUNDS = {
    Protocol.PSCDSS: _round_pscdss,
    Protocol.CBRS: _round_cbrs,
    Protocol.SINGLE_CHAIN: _round_single_chain,
    Protocol.MULTI_CHAIN: _round_multi_chain,
    Protocol.CROSS_CHAIN: _round_cross_chain,
}


def _all_nodes(topo: Topology) -> list[ParticipantId]:
    return [n for region in topo.regions for n in region]


def run_scenario(topology: Topology, protocol: Protocol | str, workload: Workload | None = None,
                 rounds: int = 1, seed: int = 0, link: LinkModel | None = None,
                 max_attempts: int | None = None) -> Metrics:
    """Simulate until ``rounds`` heights commit and collect latency and TPS inputs.

    Each attempt starts from idle nodes. Faults, when the workload carries
    non-zero fault probabilities, are drawn per attempt from a stream keyed
    by (seed, attempt). An attempt that commits nothing is counted as failed,
    its simulated time still accrues, and the same block is retried. Gives up
    after ``max_attempts`` (default ``100 * rounds``).
    """
    protocol = Protocol(protocol)
    workload = workload or Workload()
    link = link or LinkModel()
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    metrics = Metrics(protocol=protocol.value)
    total = workload.total(topology)
    if total < topology.m:
        raise ValueError(f"workload of {total} txs cannot give every one of {topology.m} regions a tx")
    if protocol is Protocol.SINGLE_CHAIN:
        loads = [total] + [0] * (topology.m - 1)
    else:
        loads = split_evenly(total, topology.m)
    nodes = _all_nodes(topology)
    topo = topology
    if protocol is Protocol.CBRS:
        topo = Topology(positions={**topology.positions, SAS_ID: sas_position(topology)},
                        regions=topology.regions, disseminators=topology.disseminators,
                        bootstrapper=topology.bootstrapper, catalog=topology.catalog)
    limit = max_attempts if max_attempts is not None else 100 * rounds
    attempt = 0
    while metrics.committed_rounds < rounds and attempt < limit:
        faulty: set = set()
        if workload.pf_g > 0 or workload.pf_s > 0:
            rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x5EED, attempt])))
            u = rng.random(len(nodes))
            for n, x in zip(nodes, u):
                p = workload.pf_s if n.kind is ParticipantKind.SATELLITE else workload.pf_g
                if x < p:
                    faulty.add(n)
        attempt += 1
        net = Network(topo, link, EventQueue())
        out = _ROUNDS[protocol](net, topo, loads, workload.tx_bytes, faulty)
        metrics.messages += net.counters.messages
        metrics.bytes += net.counters.bytes
        if out["latency"] is None:
            metrics.failed_rounds += 1
            metrics.elapsed += net.now
        else:
            metrics.latencies.append(out["latency"])
            metrics.committed_txs += out["txs"]
            metrics.elapsed += out["latency"]
    return metrics
