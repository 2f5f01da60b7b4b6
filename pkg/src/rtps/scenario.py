"""Scenario description and the line-oriented scenario file format.

A scenario file is a sequence of ``key = value`` lines grouped into sections::

    duration = 1000
    seed = 7
    variant = rtps

    [topology]
    hops = 3

    [flow 1]
    node = SA1
    least_kbps = 50

    [social]
    SA1 - X1
    SA1 - X2

    [loss]
    end_to_end = 0.05

    [cross udp]
    rate_kbps = 300
    start = 500

    [constants]
    epsilon = 0.7

Keys before the first section belong to the scenario itself. Blank lines and
text after ``#`` are ignored. Rates are given in kbps, delays in ms unless the
key says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from .errors import ScenarioError
from .netsim import Topology
from .social import PopularityProfile, build_graph, popularity_profile

VARIANTS = ("rtps", "dca3", "daap4", "delack2")


@dataclass(frozen=True)
class FlowSpec:
    id: int
    node: str
    least_rate: float = 50e3
    start: float = 0.0
    base_rtt: Optional[float] = None
    cap: Optional[float] = None
    cap_start: float = 0.0


@dataclass(frozen=True)
class LossSpec:
    """Per-hop loss, or an end-to-end loss rate spread evenly over the hops."""

    per_hop: float = 0.0
    end_to_end: Optional[float] = None
    beta: float = 0.02

    def per_hop_probability(self, hops: int) -> float:
        if self.end_to_end is None:
            return self.per_hop
        return 1.0 - (1.0 - self.end_to_end) ** (1.0 / hops)


@dataclass(frozen=True)
class CrossSpec:
    name: str
    rate: float
    start: float = 0.0
    stop: Optional[float] = None


@dataclass(frozen=True)
class Constants:
    epsilon: float = 0.7
    sigma: float = 0.3
    theta: float = 0.7
    phi: float = 3.0
    f: float = 1.0
    epoch: float = 1.0
    reinit: float = 100.0
    initial_capacity: Optional[float] = None
    packet_bytes: int = 1460
    header_bytes: int = 40
    ack_bytes: int = 40
    per_arrival: bool = False
    daap_growth: float = 0.25
    delack_timer: float = 0.2
    receive_window: int = 64


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    duration: float = 1000.0
    seed: int = 1
    variant: str = "rtps"
    topology: Topology = field(default_factory=Topology)
    flows: tuple = ()
    social_nodes: tuple = ()
    social_edges: tuple = ()
    loss: LossSpec = field(default_factory=LossSpec)
    cross: tuple = ()
    constants: Constants = field(default_factory=Constants)
    series_interval: Optional[float] = None

    @property
    def initial_capacity(self) -> float:
        c = self.constants.initial_capacity
        return self.topology.bottleneck_bandwidth if c is None else c

    def profile(self) -> PopularityProfile:
        return build_profile(self)

    def with_(self, **changes) -> "Scenario":
        return replace(self, **changes)


def build_profile(sc: Scenario) -> PopularityProfile:
    """Popularity of every flow's sender node in the scenario's community."""
    nodes = list(sc.social_nodes) + [fl.node for fl in sc.flows]
    graph = build_graph(sc.social_edges, nodes)
    flow_nodes = {fl.id: fl.node for fl in sc.flows}
    if graph.n < 2:
        return PopularityProfile({f: 0.0 for f in flow_nodes}, tuple(sorted(flow_nodes)))
    return popularity_profile(graph, flow_nodes)


# ---------------------------------------------------------------------------
# parsing

def _number(text, line, *, positive=False, nonneg=False, integer=False):
    try:
        value = int(text) if integer else float(text)
    except ValueError:
        kind = "an integer" if integer else "a number"
        raise ScenarioError(f"expected {kind}, got {text!r}", line) from None
    if not math.isfinite(value):
        raise ScenarioError(f"value must be finite, got {text!r}", line)
    if positive and not value > 0:
        raise ScenarioError(f"value must be positive, got {text}", line)
    if nonneg and value < 0:
        raise ScenarioError(f"value must be non-negative, got {text}", line)
    return value


def _fraction(text, line, *, upper_open=False):
    value = _number(text, line, nonneg=True)
    if value > 1 or (upper_open and value >= 1):
        raise ScenarioError(f"value must be a fraction below 1, got {text}", line)
    return value


def _bool(text, line):
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ScenarioError(f"expected a boolean, got {text!r}", line)


KBPS = 1e3
MS = 1e-3

_TOP_KEYS = {
    "name": ("name", str),
    "duration": ("duration", "positive"),
    "seed": ("seed", "int"),
    "variant": ("variant", str),
    "series_interval": ("series_interval", "positive"),
}

_TOPOLOGY_KEYS = {
    "hops": ("hops", "posint", 1),
    "hop_bandwidth_kbps": ("hop_bandwidth", "positive", KBPS),
    "bottleneck_kbps": ("bottleneck_bandwidth", "positive", KBPS),
    "propagation_ms": ("propagation", "nonneg", MS),
    "queue_packets": ("queue_capacity", "posint", 1),
}

_FLOW_KEYS = {
    "node": ("node", str, None),
    "least_kbps": ("least_rate", "nonneg", KBPS),
    "start": ("start", "nonneg", 1.0),
    "base_rtt_ms": ("base_rtt", "positive", MS),
    "cap_kbps": ("cap", "positive", KBPS),
    "cap_start": ("cap_start", "nonneg", 1.0),
}

_LOSS_KEYS = {
    "per_hop": ("per_hop", "fraction", 1.0),
    "end_to_end": ("end_to_end", "fraction_open", 1.0),
    "beta": ("beta", "fraction_open", 1.0),
}

_CROSS_KEYS = {
    "rate_kbps": ("rate", "positive", KBPS),
    "start": ("start", "nonneg", 1.0),
    "stop": ("stop", "nonneg", 1.0),
}

_CONSTANT_KEYS = {
    "epsilon": ("epsilon", "fraction_open", 1.0),
    "sigma": ("sigma", "fraction_open", 1.0),
    "theta": ("theta", "fraction_open", 1.0),
    "phi": ("phi", "positive", 1.0),
    "f": ("f", "positive", 1.0),
    "epoch": ("epoch", "positive", 1.0),
    "reinit": ("reinit", "positive", 1.0),
    "initial_capacity_kbps": ("initial_capacity", "positive", KBPS),
    "packet_bytes": ("packet_bytes", "posint", 1),
    "header_bytes": ("header_bytes", "nonnegint", 1),
    "ack_bytes": ("ack_bytes", "posint", 1),
    "per_arrival": ("per_arrival", "bool", None),
    "daap_growth": ("daap_growth", "positive", 1.0),
    "delack_timer_ms": ("delack_timer", "positive", MS),
    "receive_window": ("receive_window", "posint", 1),
}


def _convert(kind, text, line, scale):
    if kind is str:
        if not text:
            raise ScenarioError("empty value", line)
        return text
    if kind == "bool":
        return _bool(text, line)
    if kind == "int":
        return _number(text, line, integer=True)
    if kind == "posint":
        return _number(text, line, integer=True, positive=True)
    if kind == "nonnegint":
        return _number(text, line, integer=True, nonneg=True)
    if kind == "fraction":
        return _fraction(text, line)
    if kind == "fraction_open":
        return _fraction(text, line, upper_open=True)
    value = _number(text, line, positive=kind == "positive", nonneg=kind == "nonneg")
    return value * scale


def _apply(table, values, key, text, line, section):
    if key not in table:
        raise ScenarioError(f"unknown key {key!r} in {section}", line)
    spec = table[key]
    attr, kind = spec[0], spec[1]
    scale = spec[2] if len(spec) > 2 else 1.0
    values[attr] = _convert(kind, text, line, scale)


def parse_scenario(text: str, name: str = "scenario") -> Scenario:
    top = {"name": name}
    topology, loss, constants = {}, {}, {}
    flows, cross = [], []
    social_nodes, social_edges = [], []
    section, current, section_line = None, None, None
    seen_sections = set()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"malformed section header {line!r}", lineno)
            header = line[1:-1].split()
            if not header:
                raise ScenarioError("empty section header", lineno)
            kind, args = header[0], header[1:]
            section_line = lineno
            if kind in ("topology", "social", "loss", "constants"):
                if args:
                    raise ScenarioError(f"section [{kind}] takes no name", lineno)
                if kind in seen_sections:
                    raise ScenarioError(f"duplicate section [{kind}]", lineno)
                seen_sections.add(kind)
                section, current = kind, None
            elif kind == "flow":
                if len(args) != 1:
                    raise ScenarioError("flow section needs exactly one id", lineno)
                fid = _number(args[0], lineno, integer=True, nonneg=True)
                if any(fl["id"] == fid for fl in flows):
                    raise ScenarioError(f"duplicate flow id {fid}", lineno)
                current = {"id": fid, "_line": lineno}
                flows.append(current)
                section = "flow"
            elif kind == "cross":
                if len(args) != 1:
                    raise ScenarioError("cross section needs exactly one name", lineno)
                current = {"name": args[0], "_line": lineno}
                cross.append(current)
                section = "cross"
            else:
                raise ScenarioError(f"unknown section [{kind}]", lineno)
            continue

        if section == "social":
            if "=" in line:
                key, _, value = (part.strip() for part in line.partition("="))
                if key == "nodes":
                    social_nodes.extend(value.split())
                    continue
                if key == "edge":
                    parts = value.split()
                else:
                    raise ScenarioError(f"unknown key {key!r} in [social]", lineno)
            else:
                parts = [p for p in line.replace("-", " ").split()]
            if len(parts) != 2:
                raise ScenarioError(f"social edge must name two nodes: {line!r}", lineno)
            if parts[0] == parts[1]:
                raise ScenarioError(f"self-loop on node {parts[0]!r}", lineno)
            social_edges.append((tuple(parts), lineno))
            continue

        if "=" not in line:
            raise ScenarioError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = (part.strip() for part in line.partition("="))
        if section is None:
            if key not in _TOP_KEYS:
                raise ScenarioError(f"unknown key {key!r}", lineno)
            attr, kind = _TOP_KEYS[key]
            top[attr] = _convert(kind, value, lineno, 1.0)
            if key == "variant" and value not in VARIANTS:
                raise ScenarioError(
                    f"unknown variant {value!r}; expected one of {', '.join(VARIANTS)}", lineno
                )
        elif section == "topology":
            _apply(_TOPOLOGY_KEYS, topology, key, value, lineno, "[topology]")
        elif section == "loss":
            _apply(_LOSS_KEYS, loss, key, value, lineno, "[loss]")
        elif section == "constants":
            _apply(_CONSTANT_KEYS, constants, key, value, lineno, "[constants]")
        elif section == "flow":
            _apply(_FLOW_KEYS, current, key, value, lineno, f"[flow {current['id']}]")
        elif section == "cross":
            _apply(_CROSS_KEYS, current, key, value, lineno, f"[cross {current['name']}]")

    if "per_hop" in loss and "end_to_end" in loss:
        raise ScenarioError("[loss] takes either per_hop or end_to_end, not both")

    flow_specs = []
    for fl in flows:
        line = fl.pop("_line")
        fl.setdefault("node", f"S{fl['id']}")
        if "cap_start" in fl and "cap" not in fl:
            raise ScenarioError("cap_start given without cap_kbps", line)
        flow_specs.append(FlowSpec(**fl))
    cross_specs = []
    for cr in cross:
        line = cr.pop("_line")
        if cr.get("stop") is not None and cr["stop"] <= cr.get("start", 0.0):
            raise ScenarioError("cross traffic must stop after it starts", line)
        cross_specs.append(CrossSpec(**cr))

    known_nodes = set(social_nodes) | {fl.node for fl in flow_specs}
    for (u, v), line in social_edges:
        for node in (u, v):
            if node not in known_nodes:
                raise ScenarioError(f"social edge references unknown node {node!r}", line)
    if len({fl.node for fl in flow_specs}) != len(flow_specs):
        raise ScenarioError("two flows share one sender node")
    if not flow_specs:
        raise ScenarioError("scenario defines no [flow] sections")

    try:
        topo = Topology(**topology)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    sc = Scenario(
        topology=topo,
        flows=tuple(flow_specs),
        social_nodes=tuple(social_nodes),
        social_edges=tuple(edge for edge, _ in social_edges),
        loss=LossSpec(**loss),
        cross=tuple(cross_specs),
        constants=Constants(**constants),
        **top,
    )
    validate(sc)
    return sc


def validate(sc: Scenario) -> Scenario:
    if not sc.duration > 0:
        raise ScenarioError("duration must be positive")
    if sc.variant not in VARIANTS:
        raise ScenarioError(f"unknown variant {sc.variant!r}")
    if not sc.flows:
        raise ScenarioError("scenario has no flows")
    ids = [fl.id for fl in sc.flows]
    if len(set(ids)) != len(ids):
        raise ScenarioError("duplicate flow ids")
    for fl in sc.flows:
        if fl.least_rate < 0:
            raise ScenarioError(f"flow {fl.id}: least rate must be non-negative")
    c = sc.constants
    if not 0 < c.epsilon < 1 or not 0 <= c.sigma < 1 or not 0 < c.theta < 1:
        raise ScenarioError("epsilon, sigma and theta must be fractions below 1")
    if not c.phi > 1:
        raise ScenarioError("phi must exceed 1")
    sc.profile()
    return sc


def load_scenario(path) -> Scenario:
    path = Path(path)
    return parse_scenario(path.read_text(), name=path.stem)
