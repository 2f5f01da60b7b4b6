"""RTPS receiver: per-arrival orchestration of estimation, allocation and
window control for every flow terminating at one node."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from . import estimator, lccm
from .netsim import ACK, Segment
from .pfaocm import WindowEngine, WindowParams, effective_timeout
from .social import PopularityProfile

# event times are integer nanoseconds; allow for the rounding
TIME_TOLERANCE = 1e-9


@dataclass(frozen=True)
class RtpsConfig:
    sigma: float = 0.3
    theta: float = 0.7
    phi: float = 3.0
    f: float = 1.0
    epsilon: float = 0.7
    epoch: float = 1.0
    reinit: float = 100.0
    initial_capacity: float = 1e6
    packet_bits: int = 11680
    ack_bits: int = 320
    per_arrival_allocation: bool = False

    def window_params(self) -> WindowParams:
        return WindowParams(self.sigma, self.theta, self.phi, self.f)


@dataclass
class FlowState:
    flow: int
    next_expected: int = 0
    buffer: dict = field(default_factory=dict)  # seq -> first-send time
    est: estimator.RateEstimate = field(default_factory=estimator.RateEstimate)
    engine: Optional[WindowEngine] = None
    centrality: float = 0.0
    desired: float = 0.0
    uncapped_desired: float = 0.0
    is_top: bool = False
    deadline: Optional[float] = None
    last_echo: Optional[float] = None
    epoch_bits: float = 0.0
    duplicates: int = 0
    acks_sent: int = 0
    last_ack_no: int = -1
    # (arrival time, effective timeout) of in-order packets awaiting an ACK
    pending_since: list = field(default_factory=list)

    @property
    def window(self):
        return self.engine.state


def detect_out_of_order(fs: FlowState, seq: int) -> bool:
    """True for a packet beyond the next expected one that is not yet buffered."""
    return seq != fs.next_expected and seq > fs.next_expected and seq not in fs.buffer


class RtpsReceiver:
    """Receiver-side RTPS for all flows arriving at one node.

    Args:
        config: protocol constants.
        profile: popularity of the flows' sender nodes.
        least: flow -> least rate in bits/s.
        base_rtt: flow -> RTT used until the first timestamp-echo sample.
        send_ack: called with each emitted ACK segment.
        schedule_timer: called as ``schedule_timer(deadline_s, flow)`` whenever a
            delayed-ACK deadline is (re)armed; the caller must invoke
            :meth:`on_timer_expiry` at that time.
    """

    def __init__(
        self,
        config: RtpsConfig,
        profile: PopularityProfile,
        least: Mapping,
        base_rtt: Mapping,
        send_ack: Callable = lambda ack: None,
        schedule_timer: Callable = lambda deadline, flow: None,
        on_deliver: Optional[Callable] = None,
    ):
        self.config = config
        self.params = config.window_params()
        self.profile = profile
        self.least = dict(least)
        self.send_ack = send_ack
        self.schedule_timer = schedule_timer
        self.on_deliver = on_deliver
        self.link = lccm.LinkCapacityState(
            initial_capacity=config.initial_capacity,
            epsilon=config.epsilon,
            epoch_length=config.epoch,
            reinit_period=config.reinit,
        )
        self.flows = {}
        for f in profile.rank:
            fs = FlowState(f)
            fs.est.srtt = base_rtt[f]
            fs.engine = WindowEngine(self.params)
            fs.centrality = profile.centrality[f]
            fs.is_top = profile.is_top(f)
            self.flows[f] = fs
        self.max_ack_wait = 0.0
        self.max_ack_wait_excess = float("-inf")
        self.ack_wait_violations = 0
        self.refresh_allocation()

    # -- allocation ------------------------------------------------------
    def refresh_allocation(self) -> None:
        alloc, uncapped = lccm.desired_allocation(self.link, self.least, self.profile)
        for f, fs in self.flows.items():
            fs.desired = alloc.desired[f]
            fs.uncapped_desired = uncapped[f]
        self.allocation = alloc

    def on_epoch(self, now: float) -> None:
        """Close a measurement epoch: contention checks and reallocation."""
        length = self.config.epoch
        rates = {f: fs.epoch_bits / length for f, fs in self.flows.items()}
        desired = {f: fs.desired for f, fs in self.flows.items()}
        uncapped = {f: fs.uncapped_desired for f, fs in self.flows.items()}
        top = self.flows[self.profile.top]
        quantum = self.config.packet_bits / top.est.srtt
        lccm.update_link_capacity(self.link, rates, desired, now, quantum, uncapped)
        self.refresh_allocation()
        for fs in self.flows.values():
            fs.epoch_bits = 0.0

    # -- arrivals --------------------------------------------------------
    def _ack(self, fs: FlowState, now: float, echo: Optional[float]) -> Segment:
        ack_no = fs.next_expected - 1
        ack = Segment(
            ACK, fs.flow, ack_no, self.config.ack_bits,
            ts_val=now, ts_ecr=echo, awnd=fs.window.awnd,
        )
        for t, limit in fs.pending_since:
            wait = now - t
            self.max_ack_wait = max(self.max_ack_wait, wait)
            self.max_ack_wait_excess = max(self.max_ack_wait_excess, wait - limit)
            if wait > limit + TIME_TOLERANCE:
                self.ack_wait_violations += 1
        fs.pending_since.clear()
        fs.window.ac = 0
        fs.deadline = None
        fs.acks_sent += 1
        fs.last_ack_no = ack_no
        return ack

    def on_data_packet(self, seg: Segment, now: float) -> list:
        """Handle one data segment; returns the ACKs to emit (zero or one)."""
        fs = self.flows[seg.flow]
        cfg = self.config
        if seg.seq < fs.next_expected or seg.seq in fs.buffer:
            fs.duplicates += 1
            return self._emit([self._ack(fs, now, seg.ts_val)])

        est = fs.est
        if seg.ts_ecr is not None and seg.ts_ecr != fs.last_echo:
            fs.last_echo = seg.ts_ecr
            sample = now - seg.ts_ecr
            if sample > 0.0:
                estimator.update_srtt(est, sample)

        timer_expired = False
        gap = None
        if est.last_arrival is not None:
            gap = now - est.last_arrival
            limit = effective_timeout(est.smoothed_gap, cfg.f) if est.has_gap_sample else None
            timer_expired = limit is not None and gap > limit
        estimator.update_rate(est, cfg.packet_bits, now)
        # Only gaps that follow a held (unacknowledged) packet measure how fast
        # the sender fills a delay window; the gap after an ACK also contains
        # this receiver's own hold time and would feed back into t_k.
        if gap is not None and fs.window.ac > 0:
            estimator.update_smoothed_arrival(est, gap)
        fs.epoch_bits += cfg.packet_bits

        out_of_order = seg.seq != fs.next_expected or bool(fs.buffer)
        in_order = seg.seq == fs.next_expected
        if in_order:
            delivered = [seg.first_sent]
            fs.next_expected += 1
            while fs.next_expected in fs.buffer:
                delivered.append(fs.buffer.pop(fs.next_expected))
                fs.next_expected += 1
            if self.on_deliver is not None:
                self.on_deliver(fs.flow, delivered, now)
        else:
            fs.buffer[seg.seq] = seg.first_sent

        lccm.update_consumable(self.link, [g.est.rate for g in self.flows.values()])
        if cfg.per_arrival_allocation:
            self.refresh_allocation()
        ack_now = fs.engine.on_arrival(
            now, est.rate, fs.desired, est.srtt, cfg.packet_bits,
            self.link.c, self.link.me, out_of_order, fs.is_top, timer_expired,
        )
        lccm.commit_consumable(self.link)

        if ack_now:
            return self._emit([self._ack(fs, now, seg.ts_val)])
        t_k = effective_timeout(est.smoothed_gap, cfg.f)
        if in_order:
            fs.pending_since.append((now, t_k))
        deadline = now + t_k
        if fs.deadline is None or deadline < fs.deadline:
            fs.deadline = deadline
            self.schedule_timer(deadline, fs.flow)
        return []

    def on_timer_expiry(self, flow: int, now: float) -> list:
        fs = self.flows[flow]
        if fs.deadline is None or now < fs.deadline - TIME_TOLERANCE:
            return []
        if not fs.engine.on_timer():
            fs.deadline = None
            return []
        return self._emit([self._ack(fs, now, None)])

    def _emit(self, acks: list) -> list:
        for ack in acks:
            self.send_ack(ack)
        return acks
