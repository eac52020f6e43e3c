"""Discrete-event core: link cost model, event queue and a message-passing
network with one serial CPU and one transmitter per node."""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

from ..consensus import MESSAGE_BYTES, ConsensusMessage, MessageKind
from ..domain import ParticipantId
from .topology import LinkKind, Topology

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class LinkModel:
    rate_bps: float = 200e6
    cpu_hz: float = 2.4e9
    msg_cycles: float = 4e6
    light_speed: float = SPEED_OF_LIGHT
    fiber_factor: float = 2.0 / 3.0

    def __post_init__(self):
        for name in ("rate_bps", "cpu_hz", "msg_cycles", "light_speed", "fiber_factor"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def cpu_time(self) -> float:
        """Seconds to generate or to verify one message."""
        return self.msg_cycles / self.cpu_hz

    def transmission(self, size_bytes: int) -> float:
        return size_bytes * 8.0 / self.rate_bps

    def propagation(self, distance_m: float, kind: LinkKind = LinkKind.SAT_TERRESTRIAL) -> float:
        speed = self.light_speed * (self.fiber_factor if kind is LinkKind.WIRED else 1.0)
        return distance_m / speed


def _size(msg: ConsensusMessage | MessageKind | int) -> int:
    if isinstance(msg, ConsensusMessage):
        return msg.size_bytes
    if isinstance(msg, MessageKind):
        return MESSAGE_BYTES[msg]
    return int(msg)


def message_delay(msg: ConsensusMessage | MessageKind | int, link: LinkModel, distance: float,
                  kind: LinkKind = LinkKind.SAT_TERRESTRIAL) -> float:
    """Unloaded one-hop delay: generate + transmit + propagate + verify."""
    if distance < 0:
        raise ValueError("distance must be non-negative")
    return (link.cpu_time + link.transmission(_size(msg))
            + link.propagation(distance, kind) + link.cpu_time)


class EventQueue:
    """Time-ordered callbacks; ties run in scheduling order."""

    def __init__(self):
        self._heap: list[tuple[float, int, Callable[..., None], tuple]] = []
        self._seq = itertools.count()
        self.now = 0.0
        self.processed = 0
        self.log: list[float] | None = None

    def schedule(self, at: float, fn: Callable[..., None], *args: Any) -> None:
        if at < self.now:
            raise ValueError(f"event at {at} scheduled in the past (now {self.now})")
        heapq.heappush(self._heap, (at, next(self._seq), fn, args))

    def run(self, until: float = float("inf")) -> float:
        while self._heap and self._heap[0][0] <= until:
            at, _, fn, args = heapq.heappop(self._heap)
            self.now = at
            self.processed += 1
            if self.log is not None:
                self.log.append(at)
            fn(*args)
        return self.now

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class Counters:
    messages: int = 0
    bytes: int = 0
    by_kind: dict[str, int] = field(default_factory=dict)


class Network:
    """Message passing over a topology with per-node CPU and transmitter queues.

    Sending charges one generate cost on the sender's CPU per recipient, then
    the transmission time on its transmitter; the receiver's CPU verifies the
    message after propagation before the handler runs.
    """

    def __init__(self, topology: Topology, link: LinkModel | None = None,
                 queue: EventQueue | None = None):
        self.topology = topology
        self.link = link or LinkModel()
        self.queue = queue or EventQueue()
        self.cpu_free: dict[ParticipantId, float] = {}
        self.nic_free: dict[ParticipantId, float] = {}
        self.counters = Counters()

    @property
    def now(self) -> float:
        return self.queue.now

    def compute(self, node: ParticipantId, seconds: float) -> float:
        """Occupy a node's CPU from now; returns the completion time."""
        start = max(self.now, self.cpu_free.get(node, 0.0))
        done = start + seconds
        self.cpu_free[node] = done
        return done

    def send(self, src: ParticipantId, dst: ParticipantId, size_bytes: int, label: str,
             handler: Callable[..., None], *args: Any) -> None:
        generated = self.compute(src, self.link.cpu_time)
        tx_start = max(generated, self.nic_free.get(src, 0.0))
        tx_done = tx_start + self.link.transmission(size_bytes)
        self.nic_free[src] = tx_done
        kind = self.topology.link_kind(src, dst)
        arrival = tx_done + self.link.propagation(self.topology.distance(src, dst), kind)
        self.counters.messages += 1
        self.counters.bytes += size_bytes
        self.counters.by_kind[label] = self.counters.by_kind.get(label, 0) + 1
        self.queue.schedule(arrival, self._arrive, dst, handler, args)

    def _arrive(self, dst: ParticipantId, handler: Callable[..., None], args: tuple) -> None:
        verified = self.compute(dst, self.link.cpu_time)
        self.queue.schedule(verified, handler, *args)

    def after(self, node: ParticipantId, seconds: float, handler: Callable[..., None], *args: Any) -> None:
        self.queue.schedule(self.compute(node, seconds), handler, *args)
