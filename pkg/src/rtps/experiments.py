"""Scenario execution, metrics, parameter sweeps and CSV output."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .netsim import (
    ACK, DATA, UDP, EventQueue, LossModel, Network, UdpCbrSource, to_ns, to_s,
)
from .receiver import RtpsConfig, RtpsReceiver
from .scenario import FlowSpec, Scenario
from .tcp import BaselineReceiver, Sender

SERIES_COLUMNS = ("t_s", "flow_id", "goodput_kbps", "awnd_pkts", "dawnd", "acks_cum", "retx_cum")

SUMMARY_COLUMNS = (
    "run_id", "scenario", "variant", "seed", "param", "value", "duration_s", "hops",
    "connections", "loss_e2e", "goodput_kbps", "mean_flow_goodput_kbps",
    "mean_latency_s", "p95_latency_s", "ack_overhead", "coordination_overhead",
    "data_sent", "acks_received", "retransmissions", "rto_events", "queue_drops",
    "loss_drops", "udp_delivered_kbps", "max_ack_wait_s", "ack_wait_violations",
    "flow_goodputs_kbps",
)


@dataclass
class MetricsReport:
    scenario: str
    variant: str
    seed: int
    duration: float
    hops: int
    connections: int
    loss_e2e: float
    param: str = ""
    value: str = ""
    flow_goodput: dict = field(default_factory=dict)   # flow -> bits/s
    goodput: float = 0.0
    mean_latency: float = 0.0
    p95_latency: float = 0.0
    ack_overhead: float = 0.0
    coordination_overhead: float = 0.0
    data_sent: int = 0
    acks_received: int = 0
    retransmissions: int = 0
    rto_events: int = 0
    queue_drops: int = 0
    loss_drops: int = 0
    udp_delivered: float = 0.0
    max_ack_wait: float = 0.0
    ack_wait_violations: int = 0
    series: list = field(default_factory=list)
    trace: Optional[list] = None

    @property
    def run_id(self) -> str:
        tag = f"-{self.param}{self.value}" if self.param else ""
        return f"{self.scenario}-{self.variant}{tag}-s{self.seed}"

    @property
    def mean_flow_goodput(self) -> float:
        return self.goodput / self.connections if self.connections else 0.0

    def summary_row(self) -> dict:
        return {
            "run_id": self.run_id,
            "scenario": self.scenario,
            "variant": self.variant,
            "seed": self.seed,
            "param": self.param,
            "value": self.value,
            "duration_s": _fmt(self.duration),
            "hops": self.hops,
            "connections": self.connections,
            "loss_e2e": _fmt(self.loss_e2e),
            "goodput_kbps": _fmt(self.goodput / 1e3),
            "mean_flow_goodput_kbps": _fmt(self.mean_flow_goodput / 1e3),
            "mean_latency_s": _fmt(self.mean_latency),
            "p95_latency_s": _fmt(self.p95_latency),
            "ack_overhead": _fmt(self.ack_overhead),
            "coordination_overhead": _fmt(self.coordination_overhead),
            "data_sent": self.data_sent,
            "acks_received": self.acks_received,
            "retransmissions": self.retransmissions,
            "rto_events": self.rto_events,
            "queue_drops": self.queue_drops,
            "loss_drops": self.loss_drops,
            "udp_delivered_kbps": _fmt(self.udp_delivered / 1e3),
            "max_ack_wait_s": _fmt(self.max_ack_wait),
            "ack_wait_violations": self.ack_wait_violations,
            "flow_goodputs_kbps": ";".join(
                f"{f}:{_fmt(g / 1e3)}" for f, g in sorted(self.flow_goodput.items())
            ),
        }


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def percentile(values, q: float) -> float:
    """Nearest-rank percentile of ``values`` (q in [0, 100])."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = max(1, math.ceil(q / 100.0 * len(ordered)))
    return ordered[rank - 1]


def chain_rtt(sc: Scenario) -> float:
    c = sc.constants
    data_bits = (c.packet_bytes + c.header_bytes) * 8
    ack_bits = c.ack_bytes * 8
    topo = sc.topology
    return topo.one_way_delay(data_bits) + topo.one_way_delay(ack_bits)


def access_delay(sc: Scenario, fl: FlowSpec) -> float:
    if fl.base_rtt is None:
        return 0.0
    return max(0.0, (fl.base_rtt - chain_rtt(sc)) / 2.0)


class _Run:
    """Wiring of one scenario into a network, endpoints and recorders."""

    def __init__(self, sc: Scenario, record_trace: bool = False):
        self.sc = sc
        c = sc.constants
        self.events = EventQueue()
        hops = sc.topology.hops
        self.loss_model = LossModel(
            loss=sc.loss.per_hop_probability(hops),
            beta=sc.loss.beta,
            seed=sc.seed,
        )
        self.net = Network(sc.topology, self.loss_model, self.events)
        self.net.deliver_up = self._deliver_up
        self.net.deliver_down = self._deliver_down
        self.net.drop_hook = self._on_drop
        self.payload_bits = c.packet_bytes * 8
        self.trace = [] if record_trace else None
        self.delivered_bits = {fl.id: 0 for fl in sc.flows}
        self.interval_bits = {fl.id: 0 for fl in sc.flows}
        self.latencies = []
        self.udp_bits = 0
        self.queue_drops = 0
        self.loss_drops = 0
        self.series = []

        self.senders = {}
        base_rtt = {}
        for fl in sc.flows:
            delay = access_delay(sc, fl)
            link = self.net.add_access(fl.id, delay)
            if fl.cap is not None:
                self.events.schedule(to_ns(fl.cap_start), self._apply_cap, link, fl.cap)
            base_rtt[fl.id] = chain_rtt(sc) + 2.0 * delay
            sender = Sender(
                fl.id, self.events, self.net.send_from_sender,
                payload_bits=self.payload_bits, header_bits=c.header_bytes * 8,
                on_send=self._on_send if record_trace else None,
            )
            self.senders[fl.id] = sender
            self.events.schedule(to_ns(fl.start), sender.start)

        if sc.variant == "rtps":
            config = RtpsConfig(
                sigma=c.sigma, theta=c.theta, phi=c.phi, f=c.f, epsilon=c.epsilon,
                epoch=c.epoch, reinit=c.reinit, initial_capacity=sc.initial_capacity,
                packet_bits=self.payload_bits, ack_bits=c.ack_bytes * 8,
                per_arrival_allocation=c.per_arrival,
            )
            self.rtps = RtpsReceiver(
                config, sc.profile(), {fl.id: fl.least_rate for fl in sc.flows}, base_rtt,
                send_ack=self._send_ack, schedule_timer=self._schedule_timer,
                on_deliver=self._on_deliver,
            )
            self.receivers = None
            self.events.schedule(to_ns(c.epoch), self._epoch)
        else:
            self.rtps = None
            self.receivers = {
                fl.id: BaselineReceiver(
                    fl.id, sc.variant, self.events, self._send_ack,
                    ack_bits=c.ack_bytes * 8, advertised=c.receive_window,
                    timer=c.delack_timer, daap_growth=c.daap_growth,
                    on_deliver=self._on_deliver,
                )
                for fl in sc.flows
            }

        self.udp = []
        for i, cr in enumerate(sc.cross):
            self.udp.append(
                UdpCbrSource(self.net, -1 - i, cr.rate, cr.start,
                             (c.packet_bytes + c.header_bytes) * 8, cr.stop)
            )
        self.series_interval = sc.series_interval or c.epoch
        self.events.schedule(to_ns(self.series_interval), self._sample_series)

    # -- hooks -------------------------------------------------------------
    def _apply_cap(self, link, rate):
        link.rate = rate

    def _on_send(self, seg):
        self.trace.append((to_s(self.events.now), "send", seg.flow, seg.seq, int(seg.retransmit)))

    def _send_ack(self, ack):
        if self.trace is not None:
            self.trace.append((to_s(self.events.now), "ack_tx", ack.flow, ack.seq, 0))
        self.net.send_from_receiver(ack)

    def _schedule_timer(self, deadline, flow):
        at = max(self.events.now, to_ns(deadline))
        self.events.schedule(at, self._timer, flow)

    def _timer(self, flow):
        self.rtps.on_timer_expiry(flow, to_s(self.events.now))

    def _epoch(self):
        now = to_s(self.events.now)
        self.rtps.on_epoch(now)
        self.events.schedule(self.events.now + to_ns(self.sc.constants.epoch), self._epoch)

    def _on_deliver(self, flow, first_sent_times, now):
        bits = self.payload_bits * len(first_sent_times)
        self.delivered_bits[flow] += bits
        self.interval_bits[flow] += bits
        for t in first_sent_times:
            self.latencies.append(now - t)

    def _deliver_up(self, seg):
        if seg.kind == UDP:
            self.udp_bits += seg.size_bits
            return
        now = to_s(self.events.now)
        if self.rtps is not None:
            self.rtps.on_data_packet(seg, now)
        else:
            self.receivers[seg.flow].on_data(seg)

    def _deliver_down(self, seg):
        if self.trace is not None:
            self.trace.append((to_s(self.events.now), "ack_rx", seg.flow, seg.seq, 0))
        self.senders[seg.flow].on_ack(seg)

    def _on_drop(self, seg, hop, why):
        if why == "queue":
            self.queue_drops += 1
        else:
            self.loss_drops += 1
        if self.trace is not None:
            self.trace.append((to_s(self.events.now), f"drop_{why}", seg.flow, seg.seq, hop))

    def _sample_series(self):
        t = to_s(self.events.now)
        for fl in self.sc.flows:
            f = fl.id
            snd = self.senders[f]
            if self.rtps is not None:
                ws = self.rtps.flows[f].window
                awnd, da = ws.awnd, ws.da
            else:
                rx = self.receivers[f]
                awnd, da = rx.advertised, rx.state.da
            self.series.append((
                _fmt(t), f, _fmt(self.interval_bits[f] / self.series_interval / 1e3),
                awnd, _fmt(da), snd.stats.acks_received, snd.stats.retransmissions,
            ))
            self.interval_bits[f] = 0
        self.events.schedule(self.events.now + to_ns(self.series_interval), self._sample_series)

    # -- run ---------------------------------------------------------------
    def run(self) -> MetricsReport:
        sc = self.sc
        self.events.run_until(to_ns(sc.duration))
        flow_goodput = {}
        for fl in sc.flows:
            active = sc.duration - fl.start
            flow_goodput[fl.id] = self.delivered_bits[fl.id] / active if active > 0 else 0.0
        data_sent = sum(s.stats.data_sent for s in self.senders.values())
        acks = sum(s.stats.acks_received for s in self.senders.values())
        retx = sum(s.stats.retransmissions for s in self.senders.values())
        report = MetricsReport(
            scenario=sc.name,
            variant=sc.variant,
            seed=sc.seed,
            duration=sc.duration,
            hops=sc.topology.hops,
            connections=len(sc.flows),
            loss_e2e=_e2e_loss(sc),
            flow_goodput=flow_goodput,
            goodput=math.fsum(flow_goodput.values()),
            mean_latency=math.fsum(self.latencies) / len(self.latencies) if self.latencies else 0.0,
            p95_latency=percentile(self.latencies, 95.0),
            ack_overhead=acks / data_sent if data_sent else 0.0,
            coordination_overhead=retx / data_sent if data_sent else 0.0,
            data_sent=data_sent,
            acks_received=acks,
            retransmissions=retx,
            rto_events=sum(s.stats.rto_events for s in self.senders.values()),
            queue_drops=self.queue_drops,
            loss_drops=self.loss_drops,
            udp_delivered=self.udp_bits / sc.duration,
            series=self.series,
            trace=self.trace,
        )
        if self.rtps is not None:
            report.max_ack_wait = self.rtps.max_ack_wait
            report.ack_wait_violations = self.rtps.ack_wait_violations
        return report


def _e2e_loss(sc: Scenario) -> float:
    if sc.loss.end_to_end is not None:
        return sc.loss.end_to_end
    return 1.0 - (1.0 - sc.loss.per_hop) ** sc.topology.hops


def run_scenario(sc: Scenario, record_trace: bool = False) -> MetricsReport:
    """Simulate ``sc`` to its duration and compute its metrics."""
    return _Run(sc, record_trace).run()


# ---------------------------------------------------------------------------
# sweeps

SWEEP_PARAMS = ("hops", "connections", "loss")

COMMUNITY_MEMBERS = 10


def generated_flows(n: int, template: FlowSpec) -> tuple:
    """``n`` flows whose sender popularity decreases with the flow id.

    Sender ``i`` (1-based) knows ``max(1, 10 - (i - 1) % 10)`` of ten shared
    community members, so the first ten flows have distinct centralities.
    """
    flows, edges = [], []
    members = [f"M{j}" for j in range(1, COMMUNITY_MEMBERS + 1)]
    for i in range(1, n + 1):
        node = f"S{i}"
        flows.append(replace(template, id=i, node=node, base_rtt=None, cap=None))
        degree = max(1, COMMUNITY_MEMBERS - (i - 1) % COMMUNITY_MEMBERS)
        edges.extend((node, m) for m in members[:degree])
    return tuple(flows), tuple(members), tuple(edges)


def apply_param(sc: Scenario, param: str, value) -> Scenario:
    if param == "hops":
        return replace(sc, topology=replace(sc.topology, hops=int(value)))
    if param == "connections":
        flows, members, edges = generated_flows(int(value), sc.flows[0])
        return replace(sc, flows=flows, social_nodes=members, social_edges=edges)
    if param == "loss":
        return replace(sc, loss=replace(sc.loss, end_to_end=float(value), per_hop=0.0))
    raise ValueError(f"unknown sweep parameter {param!r}; expected one of {SWEEP_PARAMS}")


def sweep_seed(base_seed: int, value_index: int, rep: int) -> int:
    return base_seed + 1000 * value_index + rep


def _value_label(value) -> str:
    if isinstance(value, float) and not value.is_integer():
        return f"{value:g}"
    return str(int(value)) if isinstance(value, float) else str(value)


def sweep_scenarios(sc: Scenario, param: str, values, reps: int) -> list:
    if not values:
        raise ValueError("sweep needs at least one value")
    if reps < 1:
        raise ValueError("sweep needs at least one repetition")
    out = []
    for i, value in enumerate(values):
        base = apply_param(sc, param, value)
        for r in range(reps):
            out.append((param, _value_label(value), replace(base, seed=sweep_seed(sc.seed, i, r))))
    return out


def _run_tagged(job):
    param, label, scenario = job
    report = run_scenario(scenario)
    report.param, report.value = param, label
    return report


def sweep(sc: Scenario, param: str, values, reps: int = 1, jobs: int = 1) -> list:
    """One report per (value, repetition), ordered by value then repetition."""
    work = sweep_scenarios(sc, param, values, reps)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_tagged, work))
    return [_run_tagged(job) for job in work]


# ---------------------------------------------------------------------------
# output

def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def emit_outputs(reports, out_dir) -> list:
    """Write ``summary.csv`` plus one ``<run_id>_series.csv`` per report."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(reports, key=lambda r: (r.param, r.value, r.variant, r.seed, r.run_id))
    summary = out / "summary.csv"
    _write_csv(
        summary, SUMMARY_COLUMNS,
        ([row[c] for c in SUMMARY_COLUMNS] for row in (r.summary_row() for r in ordered)),
    )
    written = [summary]
    for r in ordered:
        path = out / f"{r.run_id}_series.csv"
        _write_csv(path, SERIES_COLUMNS, r.series)
        written.append(path)
    return written
