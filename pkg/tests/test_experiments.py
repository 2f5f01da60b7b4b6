import csv
from dataclasses import replace

import pytest

from rtps.experiments import (
    SERIES_COLUMNS, SUMMARY_COLUMNS, apply_param, emit_outputs, generated_flows,
    percentile, run_scenario, sweep, sweep_scenarios, sweep_seed,
)
from rtps.scenario import FlowSpec, LossSpec, load_scenario

PAYLOAD_RATE = 1e6 * 1460 / 1500


@pytest.fixture
def three_hop(scenarios_dir):
    return load_scenario(scenarios_dir / "three_hop.scn")


@pytest.mark.parametrize("variant", ["rtps", "dca3", "daap4", "delack2"])
def test_single_loss_free_flow_near_bottleneck(three_hop, variant):
    sc = replace(three_hop, variant=variant, duration=60.0, loss=LossSpec(beta=0.0))
    goodput = run_scenario(sc).goodput
    assert goodput <= 1e6
    assert goodput == pytest.approx(PAYLOAD_RATE, rel=0.05)


def test_rtps_ack_overhead_lower_at_ten_connections(three_hop):
    sc = apply_param(replace(three_hop, duration=30.0), "connections", 10)
    rtps = run_scenario(sc).ack_overhead
    dca3 = run_scenario(replace(sc, variant="dca3")).ack_overhead
    assert rtps < dca3


def test_tiny_duration_is_guarded(three_hop):
    rep = run_scenario(replace(three_hop, duration=0.001))
    assert rep.goodput == 0.0
    assert rep.ack_overhead == 0.0 and rep.mean_latency == 0.0


@pytest.mark.parametrize("variant", ["rtps", "dca3"])
def test_ratios_recomputed_from_trace(scenarios_dir, variant):
    sc = replace(load_scenario(scenarios_dir / "three_flows.scn"), duration=20.0, variant=variant)
    rep = run_scenario(sc, record_trace=True)
    sends = [e for e in rep.trace if e[1] == "send"]
    acks = [e for e in rep.trace if e[1] == "ack_rx"]
    retx = [e for e in sends if e[4] == 1]
    assert rep.ack_overhead == len(acks) / len(sends)
    assert rep.coordination_overhead == len(retx) / len(sends)
    if variant == "dca3":
        assert rep.ack_overhead <= 1.0


def test_sweep_counts_and_seeds(three_hop):
    scs = sweep_scenarios(three_hop, "hops", [3, 6, 9, 12, 15], reps=5)
    assert len(scs) == 25
    assert len({s.seed for _, _, s in scs}) == 25
    assert [label for _, label, _ in scs[::5]] == ["3", "6", "9", "12", "15"]
    assert sweep_seed(1, 2, 3) == 2004


def test_loss_and_connection_sweeps(three_hop):
    loss = sweep(replace(three_hop, duration=2.0), "loss", [0, 0.02, 0.04, 0.06, 0.08, 0.1])
    assert len(loss) == 6
    assert [r.loss_e2e for r in loss] == pytest.approx([0, 0.02, 0.04, 0.06, 0.08, 0.1])
    conn = sweep(replace(three_hop, duration=2.0), "connections", [1, 5, 10, 15, 20, 25])
    assert [r.connections for r in conn] == [1, 5, 10, 15, 20, 25]


def test_generated_flows_rank_by_member_links():
    flows, members, edges = generated_flows(12, FlowSpec(1, "S1", least_rate=10e3))
    assert [f.node for f in flows[:2]] == ["S1", "S2"]
    assert all(f.least_rate == 10e3 for f in flows)
    assert len(members) == 10
    degree = {f.node: sum(f.node in e for e in edges) for f in flows}
    assert degree["S1"] == 10 and degree["S10"] == 1 and degree["S11"] == 10


def test_percentile_nearest_rank():
    assert percentile([], 95) == 0.0
    assert percentile(list(range(1, 101)), 95) == 95


def test_emit_outputs_files_and_determinism(tmp_path, scenarios_dir):
    sc = replace(load_scenario(scenarios_dir / "three_flows.scn"), duration=5.0)
    a = emit_outputs([run_scenario(sc)], tmp_path / "a")
    b = emit_outputs([run_scenario(sc)], tmp_path / "b")
    assert len(a) == 2
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
        assert b"\r\n" not in pa.read_bytes()
    with open(a[0], newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SUMMARY_COLUMNS and len(rows) == 2
    with open(a[1], newline="") as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == SERIES_COLUMNS
    # one row per flow per epoch
    assert len(rows) == 1 + 3 * 5


def test_sweep_output_is_order_invariant(tmp_path, three_hop):
    reps = sweep(replace(three_hop, duration=2.0), "hops", [3, 6], reps=2)
    a = emit_outputs(reps, tmp_path / "a")
    b = emit_outputs(list(reversed(reps)), tmp_path / "b")
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]
