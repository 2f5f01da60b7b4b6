"""Deterministic discrete-event network core.

Simulated time is kept in integer nanoseconds. A linear chain of ``hops``
wireless links connects the sender-side node 0 to the receiver node. Every
hop is a half-duplex channel: the forward queue at its upstream node and the
reverse queue at its downstream node share one transmitter, served in order
of enqueue time. Frames can be lost at random, or by collision with the other
streams contending for the same hop (those with a frame queued there when the
transmission starts).
"""

from __future__ import annotations

import heapq
import itertools
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import SimulationError

NS = 1_000_000_000

DATA = "data"
ACK = "ack"
UDP = "udp"


def to_ns(seconds: float) -> int:
    return int(round(seconds * NS))


def to_s(ns: int) -> float:
    return ns / NS


@dataclass(slots=True)
class Segment:
    kind: str
    flow: int
    seq: int
    size_bits: int
    ts_val: float = 0.0
    ts_ecr: Optional[float] = None
    awnd: int = 0
    first_sent: float = 0.0
    retransmit: bool = False
    enqueued_at: int = 0

    @property
    def stream(self):
        return (self.flow, self.kind)


class EventQueue:
    """Time-ordered callbacks; equal times run in scheduling order."""

    def __init__(self):
        self._heap = []
        self._counter = itertools.count()
        self.now = 0

    def schedule(self, at_ns: int, callback: Callable, *args) -> None:
        if at_ns < self.now:
            raise SimulationError(f"event scheduled in the past: {at_ns} < {self.now}")
        heapq.heappush(self._heap, (at_ns, next(self._counter), callback, args))

    def after(self, delay_ns: int, callback: Callable, *args) -> None:
        self.schedule(self.now + delay_ns, callback, *args)

    def __len__(self):
        return len(self._heap)

    def run_until(self, t_end_ns: int) -> int:
        """Process every event with time <= ``t_end_ns``; returns the count."""
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= t_end_ns:
            t, _, callback, args = pop(heap)
            self.now = t
            callback(*args)
            n += 1
        self.now = max(self.now, t_end_ns)
        return n


@dataclass
class Topology:
    hops: int = 3
    hop_bandwidth: float = 6e6
    bottleneck_bandwidth: float = 1e6
    propagation: float = 0.0
    queue_capacity: int = 50

    def __post_init__(self):
        if self.hops < 1:
            raise ValueError("hop count must be at least 1")
        if not (self.hop_bandwidth > 0 and self.bottleneck_bandwidth > 0):
            raise ValueError("bandwidths must be positive")
        if self.queue_capacity < 1:
            raise ValueError("queue capacity must be at least 1")
        if self.propagation < 0:
            raise ValueError("propagation delay must be non-negative")

    def bandwidth(self, hop: int) -> float:
        return self.bottleneck_bandwidth if hop == self.hops - 1 else self.hop_bandwidth

    def one_way_delay(self, size_bits: int) -> float:
        """Unloaded one-way latency of a frame across the chain."""
        return sum(size_bits / self.bandwidth(h) + self.propagation for h in range(self.hops))


@dataclass
class LossModel:
    """Random per-hop loss plus a collision term.

    A transmission on a hop contended by ``n_active`` streams (itself
    included) is lost with probability
    ``1 - (1 - loss) * (1 - beta) ** (n_active - 1)``.
    """

    loss: float = 0.0
    beta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss <= 1.0:
            raise ValueError("per-hop loss probability must lie in [0, 1]")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("collision coefficient must lie in [0, 1)")

    def probability(self, n_active: int) -> float:
        return 1.0 - (1.0 - self.loss) * (1.0 - self.beta) ** max(0, n_active - 1)


def sample_loss(model: LossModel, n_active: int, rng: random.Random) -> bool:
    p = model.probability(n_active)
    if p <= 0.0:
        return False
    return rng.random() < p


class DropTailQueue:
    __slots__ = ("capacity", "items", "drops", "accepted")

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.items = deque()
        self.drops = 0
        self.accepted = 0

    def __len__(self):
        return len(self.items)


def drop_tail_enqueue(queue: DropTailQueue, seg) -> bool:
    if len(queue.items) < queue.capacity:
        queue.items.append(seg)
        queue.accepted += 1
        return True
    queue.drops += 1
    return False


@dataclass
class HopCounters:
    offered: int = 0
    delivered: int = 0
    queue_dropped: int = 0
    loss_dropped: int = 0


class Channel:
    """One half-duplex hop with a forward and a reverse drop-tail queue.

    ``waiting`` counts queued frames per stream; a stream contends for the
    hop while it has at least one frame queued.
    """

    __slots__ = ("net", "index", "bandwidth", "prop_ns", "fwd", "rev", "busy", "waiting", "counters")

    def __init__(self, net, index, bandwidth, prop_ns, capacity):
        self.net = net
        self.index = index
        self.bandwidth = bandwidth
        self.prop_ns = prop_ns
        self.fwd = DropTailQueue(capacity)
        self.rev = DropTailQueue(capacity)
        self.busy = False
        self.waiting = {}
        self.counters = HopCounters()

    def offer(self, seg: Segment, forward: bool) -> None:
        self.counters.offered += 1
        seg.enqueued_at = self.net.events.now
        queue = self.fwd if forward else self.rev
        if not drop_tail_enqueue(queue, seg):
            self.counters.queue_dropped += 1
            self.net.on_drop(seg, self.index, "queue")
            return
        stream = seg.stream
        self.waiting[stream] = self.waiting.get(stream, 0) + 1
        if not self.busy:
            self._start()

    def _start(self) -> None:
        fwd, rev = self.fwd.items, self.rev.items
        if fwd and (not rev or fwd[0].enqueued_at <= rev[0].enqueued_at):
            seg, forward = fwd.popleft(), True
        elif rev:
            seg, forward = rev.popleft(), False
        else:
            self.busy = False
            return
        self.busy = True
        waiting = self.waiting
        n_active = len(waiting)
        stream = seg.stream
        left = waiting[stream] - 1
        if left:
            waiting[stream] = left
        else:
            del waiting[stream]
        airtime = int(round(seg.size_bits * NS / self.bandwidth))
        self.net.events.after(airtime, self._done, seg, forward, n_active)

    def _done(self, seg, forward, n_active) -> None:
        net = self.net
        lost = sample_loss(net.loss, n_active, net.rng)
        if self.prop_ns:
            net.events.after(self.prop_ns, self._arrive, seg, forward, lost)
        else:
            self._arrive(seg, forward, lost)
        self._start()

    def _arrive(self, seg, forward, lost) -> None:
        if lost:
            self.counters.loss_dropped += 1
            self.net.on_drop(seg, self.index, "loss")
            return
        self.counters.delivered += 1
        self.net.forward(seg, self.index, forward)


class AccessLink:
    """Private sender-side link: a fixed delay, optionally rate-capped."""

    __slots__ = ("net", "delay_ns", "rate", "queue", "busy", "drops")

    def __init__(self, net, delay_ns: int, capacity: int):
        self.net = net
        self.delay_ns = delay_ns
        self.rate = None
        self.queue = DropTailQueue(capacity)
        self.busy = False
        self.drops = 0

    def send(self, seg: Segment) -> None:
        if self.rate is None:
            self.net.events.after(self.delay_ns, self.net.inject, seg)
            return
        if not drop_tail_enqueue(self.queue, seg):
            self.drops += 1
            self.net.on_drop(seg, -1, "queue")
            return
        if not self.busy:
            self._start()

    def _start(self) -> None:
        if not self.queue.items:
            self.busy = False
            return
        self.busy = True
        seg = self.queue.items.popleft()
        airtime = int(round(seg.size_bits * NS / self.rate))
        self.net.events.after(airtime, self._done, seg)

    def _done(self, seg) -> None:
        self.net.events.after(self.delay_ns, self.net.inject, seg)
        self._start()


class Network:
    """Chain topology wiring senders (node 0 side) to the receiver node.

    ``deliver_up(seg)`` is called for data/UDP frames reaching the receiver
    node; ``deliver_down(seg)`` for ACKs reaching the sender side (after the
    flow's access delay). Drops are reported through ``drop_hook``.
    """

    def __init__(self, topology: Topology, loss: LossModel, events: Optional[EventQueue] = None):
        self.topology = topology
        self.loss = loss
        self.events = events if events is not None else EventQueue()
        self.rng = random.Random(loss.seed)
        self.channels = [
            Channel(
                self, h, topology.bandwidth(h), to_ns(topology.propagation),
                topology.queue_capacity,
            )
            for h in range(topology.hops)
        ]
        self.access = {}
        self.deliver_up: Callable = lambda seg: None
        self.deliver_down: Callable = lambda seg: None
        self.drop_hook: Callable = lambda seg, hop, why: None

    def add_access(self, flow: int, delay: float = 0.0) -> AccessLink:
        link = AccessLink(self, to_ns(delay), self.topology.queue_capacity)
        self.access[flow] = link
        return link

    def send_from_sender(self, seg: Segment) -> None:
        link = self.access.get(seg.flow)
        if link is None:
            self.inject(seg)
        else:
            link.send(seg)

    def inject(self, seg: Segment) -> None:
        self.channels[0].offer(seg, True)

    def send_from_receiver(self, seg: Segment) -> None:
        self.channels[-1].offer(seg, False)

    def forward(self, seg: Segment, hop: int, forward: bool) -> None:
        if forward:
            if hop + 1 < len(self.channels):
                self.channels[hop + 1].offer(seg, True)
            else:
                self.deliver_up(seg)
        else:
            if hop > 0:
                self.channels[hop - 1].offer(seg, False)
            else:
                link = self.access.get(seg.flow)
                if link is not None and link.delay_ns:
                    self.events.after(link.delay_ns, self.deliver_down, seg)
                else:
                    self.deliver_down(seg)

    def on_drop(self, seg, hop, why) -> None:
        self.drop_hook(seg, hop, why)


def run_until(net: Network, t_end: float) -> int:
    return net.events.run_until(to_ns(t_end))


class UdpCbrSource:
    """Constant-bit-rate UDP source injecting at the sender-side node.

    Packet ``k`` (1-based) leaves at ``start + k * size / rate``.
    """

    def __init__(self, net: Network, flow: int, rate: float, start: float,
                 packet_bits: int, stop: Optional[float] = None):
        if not rate > 0:
            raise ValueError("UDP rate must be positive")
        self.net = net
        self.flow = flow
        self.rate = rate
        self.packet_bits = packet_bits
        self.interval_ns = to_ns(packet_bits / rate)
        self.start_ns = to_ns(start)
        self.stop_ns = None if stop is None else to_ns(stop)
        self.sent = 0
        net.events.schedule(self.start_ns + self.interval_ns, self._emit)

    def _emit(self) -> None:
        now = self.net.events.now
        if self.stop_ns is not None and now >= self.stop_ns:
            return
        seg = Segment(UDP, self.flow, self.sent, self.packet_bits, ts_val=to_s(now),
                      first_sent=to_s(now))
        self.sent += 1
        self.net.inject(seg)
        self.net.events.schedule(self.start_ns + (self.sent + 1) * self.interval_ns, self._emit)


def udp_cbr_times(rate: float, start: float, packet_bits: int, until: float) -> list:
    """Emission times of a CBR source over ``(start, until]``."""
    interval = to_ns(packet_bits / rate)
    start_ns, end_ns = to_ns(start), to_ns(until)
    out, k = [], 1
    while start_ns + k * interval <= end_ns:
        out.append(to_s(start_ns + k * interval))
        k += 1
    return out
