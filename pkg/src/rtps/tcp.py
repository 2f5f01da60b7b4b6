"""Packet-counting TCP sender and baseline delayed-ACK receivers.

Sequence numbers count packets from 0. An ACK carries the highest in-order
sequence number received so far (-1 before any data) and the receiver's
advertised window in packets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .netsim import ACK, DATA, NS, EventQueue, Segment, to_ns, to_s

SLOW_START = "slow_start"
CONGESTION_AVOIDANCE = "congestion_avoidance"
FAST_RECOVERY = "fast_recovery"

RTO_MIN = 0.2
RTO_MAX = 60.0
RTO_INITIAL = 1.0
DUPACK_THRESHOLD = 3


@dataclass
class SenderStats:
    data_sent: int = 0
    retransmissions: int = 0
    acks_received: int = 0
    rto_events: int = 0
    fast_retransmits: int = 0
    max_outstanding_violation: int = 0


@dataclass
class SenderState:
    cwnd: float = 2.0
    ssthresh: float = 64.0
    snd_una: int = 0
    snd_nxt: int = 0
    high_sent: int = -1
    peer_window: int = 64
    dupacks: int = 0
    phase: str = SLOW_START
    recover: int = -1
    srtt: Optional[float] = None
    rttvar: float = 0.0
    rto: float = RTO_INITIAL
    backoff: int = 0

    @property
    def outstanding(self) -> int:
        return self.snd_nxt - self.snd_una

    @property
    def window(self) -> int:
        return max(1, min(int(self.cwnd), self.peer_window))


class Sender:
    """Bulk-transfer TCP sender (slow start, congestion avoidance, NewReno
    fast recovery, RTO with binary backoff).

    ``transmit(seg)`` hands a data segment to the network.
    """

    def __init__(
        self,
        flow: int,
        events: EventQueue,
        transmit: Callable,
        payload_bits: int = 11680,
        header_bits: int = 320,
        initial_window: float = 2.0,
        on_send: Optional[Callable] = None,
    ):
        self.flow = flow
        self.events = events
        self.transmit = transmit
        self.payload_bits = payload_bits
        self.header_bits = header_bits
        self.state = SenderState(cwnd=initial_window)
        self.stats = SenderStats()
        self.send_time = {}
        self.first_sent = {}
        self.retransmitted = set()
        self.ts_recent = None
        self._rto_gen = 0
        self._rto_deadline = None
        self.on_send = on_send
        self.started = False

    # -- transmission ---------------------------------------------------
    def start(self) -> None:
        self.started = True
        self.try_send()

    def _send(self, seq: int) -> None:
        now = to_s(self.events.now)
        retx = seq <= self.state.high_sent
        first = self.first_sent.setdefault(seq, now)
        seg = Segment(
            DATA, self.flow, seq, self.payload_bits + self.header_bits,
            ts_val=now, ts_ecr=self.ts_recent, first_sent=first, retransmit=retx,
        )
        self.stats.data_sent += 1
        if retx:
            self.stats.retransmissions += 1
            self.retransmitted.add(seq)
        else:
            self.state.high_sent = seq
        self.send_time[seq] = now
        if self.on_send is not None:
            self.on_send(seg)
        self.transmit(seg)
        if self._rto_deadline is None:
            self._arm_rto()

    def try_send(self) -> None:
        s = self.state
        while s.outstanding < s.window:
            self._send(s.snd_nxt)
            s.snd_nxt += 1

    # -- timers -----------------------------------------------------------
    def _arm_rto(self) -> None:
        self._rto_gen += 1
        self._rto_deadline = self.events.now + to_ns(self.state.rto)
        self.events.schedule(self._rto_deadline, self._rto_fire, self._rto_gen)

    def _stop_rto(self) -> None:
        self._rto_gen += 1
        self._rto_deadline = None

    def _rto_fire(self, gen: int) -> None:
        if gen != self._rto_gen:
            return
        self._rto_deadline = None
        self.on_rto()

    def _rtt_sample(self, sample: float) -> None:
        s = self.state
        if s.srtt is None:
            s.srtt = sample
            s.rttvar = sample / 2.0
        else:
            s.rttvar = 0.75 * s.rttvar + 0.25 * abs(s.srtt - sample)
            s.srtt = 0.875 * s.srtt + 0.125 * sample
        s.rto = min(RTO_MAX, max(RTO_MIN, s.srtt + 4.0 * s.rttvar))
        s.backoff = 0

    # -- events -----------------------------------------------------------
    def on_ack(self, ack: Segment) -> None:
        sender_on_ack(self, ack, to_s(self.events.now))

    def on_rto(self) -> None:
        sender_on_rto(self, to_s(self.events.now))


def sender_on_ack(snd: Sender, ack: Segment, now: float) -> None:
    """Process one ACK and transmit whatever the new window allows."""
    s = snd.state
    snd.stats.acks_received += 1
    snd.ts_recent = ack.ts_val
    s.peer_window = max(1, ack.awnd)
    ackno = ack.seq
    newly = ackno + 1 - s.snd_una
    if newly > 0:
        if ackno not in snd.retransmitted and ackno in snd.send_time:
            snd._rtt_sample(now - snd.send_time[ackno])
        for seq in range(s.snd_una, ackno + 1):
            snd.send_time.pop(seq, None)
            snd.first_sent.pop(seq, None)
            snd.retransmitted.discard(seq)
        s.snd_una = ackno + 1
        if s.snd_nxt < s.snd_una:
            s.snd_nxt = s.snd_una
        if s.phase == FAST_RECOVERY:
            if ackno >= s.recover:
                s.cwnd = s.ssthresh
                s.phase = CONGESTION_AVOIDANCE
                s.dupacks = 0
            else:
                # partial ACK: resend the next hole, deflate by the amount acked
                snd._send(s.snd_una)
                s.cwnd = max(1.0, s.cwnd - newly + 1.0)
        else:
            s.dupacks = 0
            # per-ACK growth, however many packets the ACK covers
            if s.phase == SLOW_START:
                s.cwnd += 1.0
                if s.cwnd >= s.ssthresh:
                    s.phase = CONGESTION_AVOIDANCE
            else:
                s.cwnd += 1.0 / s.cwnd
        if s.outstanding > 0:
            snd._arm_rto()
        else:
            snd._stop_rto()
    elif ackno == s.snd_una - 1 and s.high_sent >= s.snd_una:
        s.dupacks += 1
        if s.phase == FAST_RECOVERY:
            s.cwnd += 1.0
        elif s.dupacks == DUPACK_THRESHOLD and s.snd_una > s.recover:
            s.ssthresh = max(s.cwnd / 2.0, 2.0)
            s.recover = s.high_sent
            s.phase = FAST_RECOVERY
            s.cwnd = s.ssthresh + DUPACK_THRESHOLD
            snd.stats.fast_retransmits += 1
            snd._send(s.snd_una)
    else:
        return
    if snd.started:
        snd.try_send()


def sender_on_rto(snd: Sender, now: float) -> None:
    s = snd.state
    if s.outstanding <= 0 and s.high_sent < s.snd_una:
        return
    snd.stats.rto_events += 1
    s.ssthresh = max(2.0, s.cwnd / 2.0)
    s.cwnd = 1.0
    s.phase = SLOW_START
    s.dupacks = 0
    s.recover = s.high_sent
    s.rto = min(RTO_MAX, s.rto * 2.0)
    s.backoff += 1
    s.snd_nxt = s.snd_una
    snd._arm_rto()
    snd.try_send()


# ---------------------------------------------------------------------------
# baseline receivers

DELACK2 = "delack2"
DCA3 = "dca3"
DAAP4 = "daap4"
BASELINES = (DELACK2, DCA3, DAAP4)


@dataclass
class BaselineReceiverState:
    variant: str
    da: float
    ac: int = 0
    next_expected: int = 0
    buffer: dict = field(default_factory=dict)  # seq -> first-send time
    timer_deadline: Optional[int] = None


class BaselineReceiver:
    """Delayed-ACK receiver: fixed ``da`` (delack2, dca3) or adaptive up to 4 (daap4).

    Out-of-order arrivals, duplicates and gap fills are acknowledged at once.
    Pending in-order data is acknowledged by a fallback timer.
    """

    def __init__(
        self,
        flow: int,
        variant: str,
        events: EventQueue,
        send_ack: Callable,
        ack_bits: int = 320,
        advertised: int = 64,
        timer: float = 0.2,
        daap_growth: float = 0.25,
        daap_cap: float = 4.0,
        on_deliver: Optional[Callable] = None,
    ):
        if variant not in BASELINES:
            raise ValueError(f"unknown baseline variant {variant!r}")
        start_da = {DELACK2: 2.0, DCA3: 3.0, DAAP4: 1.0}[variant]
        self.flow = flow
        self.state = BaselineReceiverState(variant, start_da)
        self.events = events
        self.send_ack = send_ack
        self.ack_bits = ack_bits
        self.advertised = advertised
        self.timer_ns = to_ns(timer)
        self.daap_growth = daap_growth
        self.daap_cap = daap_cap
        self.on_deliver = on_deliver
        self.acks_sent = 0

    def _ack(self, data: Optional[Segment]) -> Segment:
        b = self.state
        b.ac = 0
        b.timer_deadline = None
        ack = Segment(
            ACK, self.flow, b.next_expected - 1, self.ack_bits,
            ts_val=to_s(self.events.now), ts_ecr=None if data is None else data.ts_val,
            awnd=self.advertised,
        )
        self.acks_sent += 1
        return ack

    def on_data(self, seg: Segment) -> None:
        ack = baseline_on_data(self, seg, to_s(self.events.now))
        if ack is not None:
            self.send_ack(ack)

    def _on_timer(self, deadline: int) -> None:
        b = self.state
        if b.timer_deadline != deadline or b.ac == 0:
            return
        self.send_ack(self._ack(None))


def baseline_on_data(rx: BaselineReceiver, seg: Segment, now: float) -> Optional[Segment]:
    b = rx.state
    if seg.seq < b.next_expected or seg.seq in b.buffer:
        return rx._ack(seg)
    if seg.seq > b.next_expected:
        b.buffer[seg.seq] = seg.first_sent
        if b.variant == DAAP4:
            b.da = 1.0
        return rx._ack(seg)
    gap_fill = bool(b.buffer)
    b.next_expected += 1
    delivered = [seg.first_sent]
    while b.next_expected in b.buffer:
        delivered.append(b.buffer.pop(b.next_expected))
        b.next_expected += 1
    if rx.on_deliver is not None:
        rx.on_deliver(rx.flow, delivered, now)
    if b.variant == DAAP4:
        b.da = min(rx.daap_cap, b.da + rx.daap_growth)
    if gap_fill:
        return rx._ack(seg)
    b.ac += 1
    if b.ac >= math.floor(b.da):
        return rx._ack(seg)
    if b.timer_deadline is None:
        b.timer_deadline = rx.events.now + rx.timer_ns
        rx.events.schedule(b.timer_deadline, rx._on_timer, b.timer_deadline)
    return None
