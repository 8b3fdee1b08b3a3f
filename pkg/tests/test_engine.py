import math

import numpy as np
import pytest

from _reference import reference_run
from tricklesim.core import TrickleConfig
from tricklesim.engine import (
    SimRunConfig,
    Skew,
    attempt_process_test,
    export_gaps,
    export_interval_counts,
    export_transmissions,
    node_schedule,
    replication_seeds,
    run,
    sweep,
)
from tricklesim.topology import Grid, SingleCell, cell_size, neighbor_table, num_nodes


def cell_cfg(k, n, eta, duration=60.0, warmup=10.0, seed=0, **kw):
    return SimRunConfig(
        trickle=TrickleConfig(k=k, tau_l=1.0, tau_h=1.0, eta=eta),
        topology=SingleCell(n),
        duration=duration,
        warmup=warmup,
        seed=seed,
        **kw,
    )


# --------------------------------------------------------------------------
# topology

def test_cell_size_reference_values():
    # hand-checked neighborhood sizes on the 50x50 torus
    expected = {1.0: 5, 1.5: 9, 2.0: 13, 4.0: 49, 6.0: 113, 8.0: 197}
    for r, s in expected.items():
        assert cell_size(Grid(side=50, radio_range=r)) == s
        assert cell_size(Grid(side=50, radio_range=r), include_self=False) == s - 1


def test_cell_size_small_grid_wraparound():
    # side 2: offsets (0,1),(1,0) wrap to distance 1; (1,1) to sqrt(2)
    assert cell_size(Grid(side=2, radio_range=1.0)) == 3
    assert cell_size(Grid(side=2, radio_range=1.5)) == 4
    assert cell_size(Grid(side=3, radio_range=1.0)) == 5


def test_cell_size_rejects_single_cell():
    with pytest.raises(TypeError):
        cell_size(SingleCell(5))


@pytest.mark.parametrize("toroidal", [True, False])
def test_neighbor_table_symmetric_no_self(toroidal):
    g = Grid(side=5, radio_range=2.2, toroidal=toroidal)
    nbrs = [set(a.tolist()) for a in neighbor_table(g)]
    for i, s in enumerate(nbrs):
        assert i not in s
        for h in s:
            assert i in nbrs[h]


def test_neighbor_table_torus_uniform_edge_shrinks():
    g = Grid(side=6, radio_range=1.0)
    sizes = {a.size for a in neighbor_table(g)}
    assert sizes == {4}
    flat = Grid(side=6, radio_range=1.0, toroidal=False)
    sizes = [a.size for a in neighbor_table(flat)]
    assert sizes[0] == 2  # corner
    assert max(sizes) == 4


def test_num_nodes():
    assert num_nodes(SingleCell(7)) == 7
    assert num_nodes(Grid(side=4, radio_range=1.0)) == 16


# --------------------------------------------------------------------------
# config validation and determinism

def test_run_config_validation():
    with pytest.raises(ValueError):
        cell_cfg(1, 5, 0.0, duration=5.0, warmup=5.0)
    with pytest.raises(ValueError):
        cell_cfg(1, 5, 0.0, warmup=-1.0)
    with pytest.raises(ValueError):
        cell_cfg(1, 5, 0.0, seed="abc")


def test_bit_identical_reruns():
    a = run(cell_cfg(2, 30, 0.3, seed=77))
    b = run(cell_cfg(2, 30, 0.3, seed=77))
    assert np.array_equal(a.transmission_times, b.transmission_times)
    assert np.array_equal(a.transmission_nodes, b.transmission_nodes)
    assert np.array_equal(a.per_interval_counts, b.per_interval_counts)
    c = run(cell_cfg(2, 30, 0.3, seed=78))
    assert not np.array_equal(a.transmission_times, c.transmission_times)


def test_replication_seeds_deterministic_distinct():
    s1 = replication_seeds(9, 64)
    assert s1 == replication_seeds(9, 64)
    assert len(set(s1)) == 64
    assert s1[:32] == replication_seeds(9, 32)


# --------------------------------------------------------------------------
# exact invariants

def test_single_node_synchronized_one_per_window():
    st = run(cell_cfg(1, 1, 0.0, duration=40.0, skew=Skew.SYNCHRONIZED))
    assert np.all(st.per_interval_counts == 1)
    assert st.mean_per_interval == 1.0


@pytest.mark.parametrize("eta", [0.0, 0.5, 1.0])
def test_single_node_uniform_mean_near_one(eta):
    # absolute windows straddle the node's own skewed intervals, so the
    # window counts are 0/1/2 but the mean is off by at most a boundary term
    st = run(cell_cfg(1, 1, eta, duration=110.0, seed=5))
    w = st.per_interval_counts
    assert set(np.unique(w)) <= {0, 1, 2}
    assert abs(st.mean_per_interval - 1.0) <= 1.5 / w.size


def test_synchronized_cell_exactly_k_per_window():
    for k in (1, 2, 3):
        st = run(cell_cfg(k, 40, 0.0, duration=30.0, skew=Skew.SYNCHRONIZED, seed=2))
        assert np.all(st.per_interval_counts == k)


def test_no_suppression_when_threshold_unreachable():
    # With skewed intervals a listening window can overlap two intervals of
    # each neighbour, so a node can hear up to 2*(n-1) messages per interval.
    # Past that threshold every attempt transmits.
    cfg = cell_cfg(8, 4, 0.2, duration=80.0, seed=13, record_attempts=True)
    st = run(cfg)
    assert np.array_equal(st.attempt_times, st.transmission_times)
    assert abs(st.mean_per_interval - 4.0) <= 1.5 * 4 / st.per_interval_counts.size
    assert sum(st.per_node_counts.values()) == st.total_transmissions


def test_eta_one_single_transmitter():
    # with theta pinned to the interval end, one node wins and suppresses
    # the rest of the cell forever (k=1); two survive at k=2
    st = run(cell_cfg(1, 5, 1.0, duration=60.0, seed=3))
    assert np.all(st.per_interval_counts == 1)
    st = run(cell_cfg(2, 6, 1.0, duration=60.0, seed=3))
    assert st.mean_per_interval == 2.0


def test_gaps_are_diffs_in_window():
    st = run(cell_cfg(2, 20, 0.0, seed=31))
    assert st.inter_transmission_times.size == st.total_transmissions - 1
    assert np.all(st.inter_transmission_times >= 0)
    assert np.allclose(st.inter_transmission_times, np.diff(st.transmission_times))
    assert st.transmission_times.min() > 10.0
    assert st.transmission_times.max() <= 60.0


def test_window_bookkeeping():
    st = run(cell_cfg(1, 10, 0.0, duration=25.5, warmup=3.2, seed=8))
    assert st.first_window == 4
    assert st.per_interval_counts.size == 25 - 4
    assert st.per_interval_counts.sum() <= st.total_transmissions


def test_per_node_counts_cover_all_nodes():
    st = run(cell_cfg(1, 12, 0.5, seed=21))
    assert sorted(st.per_node_counts) == list(range(12))
    assert sum(st.per_node_counts.values()) == st.total_transmissions


# --------------------------------------------------------------------------
# schedule audit

def test_transmissions_are_scheduled_attempts():
    cfg = cell_cfg(2, 9, 0.3, duration=40.0, seed=17, record_attempts=True)
    st = run(cfg)
    scheduled = set()
    for i in range(9):
        s, thetas = node_schedule(cfg, i)
        for j, th in enumerate(thetas.tolist()):
            scheduled.add(min(s + 1.0 * j + th, s + 1.0 * (j + 1)))
    assert set(st.attempt_times.tolist()) <= scheduled
    assert set(st.transmission_times.tolist()) <= set(st.attempt_times.tolist())


def test_node_schedule_offsets_in_listen_window():
    cfg = cell_cfg(1, 3, 0.6, duration=200.0, seed=4)
    for i in range(3):
        s, thetas = node_schedule(cfg, i)
        assert 0.0 <= s < 1.0
        assert np.all(thetas >= 0.6) and np.all(thetas < 1.0)
        assert thetas.size == math.floor(200.0 - s) + 1


def test_synchronized_schedule_has_no_skew_draw():
    cfg = cell_cfg(1, 2, 0.0, skew=Skew.SYNCHRONIZED, seed=99)
    s, thetas = node_schedule(cfg, 0)
    assert s == 0.0
    # first theta must reuse the stream's first value, not the second
    rng = np.random.default_rng(np.random.SeedSequence(99, spawn_key=(0,)))
    assert thetas[0] == rng.random()


# --------------------------------------------------------------------------
# equivalence against the event-loop reference

@pytest.mark.parametrize(
    "k,n,eta,skew",
    [
        (1, 6, 0.0, Skew.UNIFORM_RANDOM),
        (2, 7, 0.4, Skew.UNIFORM_RANDOM),
        (3, 5, 0.9, Skew.UNIFORM_RANDOM),
        (1, 4, 1.0, Skew.UNIFORM_RANDOM),
        (2, 5, 1.0, Skew.SYNCHRONIZED),
        (1, 8, 0.0, Skew.SYNCHRONIZED),
    ],
)
def test_single_cell_matches_reference(k, n, eta, skew):
    cfg = cell_cfg(k, n, eta, duration=23.0, warmup=2.0, seed=123, skew=skew,
                   record_attempts=True)
    st = run(cfg)
    att, tx_t, tx_i = reference_run(cfg)
    m = (tx_t > 2.0) & (tx_t <= 23.0)
    assert np.array_equal(st.transmission_times, tx_t[m])
    assert np.array_equal(st.transmission_nodes, tx_i[m])
    am = (att > 2.0) & (att <= 23.0)
    assert np.array_equal(st.attempt_times, att[am])


@pytest.mark.parametrize("k,r,eta", [(1, 1.0, 0.0), (2, 1.5, 0.5), (1, 2.2, 1.0)])
def test_grid_matches_reference(k, r, eta):
    cfg = SimRunConfig(
        trickle=TrickleConfig(k=k, tau_l=1.0, tau_h=1.0, eta=eta),
        topology=Grid(side=4, radio_range=r),
        duration=17.0,
        warmup=2.0,
        seed=321,
        record_attempts=True,
    )
    st = run(cfg)
    att, tx_t, tx_i = reference_run(cfg)
    m = (tx_t > 2.0) & (tx_t <= 17.0)
    assert np.array_equal(st.transmission_times, tx_t[m])
    assert np.array_equal(st.transmission_nodes, tx_i[m])


def test_reference_fuzz_many_seeds():
    for seed in range(20):
        cfg = cell_cfg(2, 5, 0.25, duration=11.0, warmup=1.0, seed=seed)
        st = run(cfg)
        _, tx_t, tx_i = reference_run(cfg)
        m = (tx_t > 1.0) & (tx_t <= 11.0)
        assert np.array_equal(st.transmission_times, tx_t[m]), f"seed {seed}"
        assert np.array_equal(st.transmission_nodes, tx_i[m]), f"seed {seed}"


# --------------------------------------------------------------------------
# sweeps and the attempt process

def test_sweep_pools_windows():
    cfgs = [cell_cfg(1, 10, 0.0, duration=30.0, seed=5)]
    (res,) = sweep(cfgs, replications=4)
    assert res.replications == 4
    assert res.pooled_windows == 4 * 20
    assert res.ci_halfwidth > 0
    assert 1.0 < res.mean_per_interval < 10.0
    (again,) = sweep(cfgs, replications=4)
    assert again.mean_per_interval == res.mean_per_interval


def test_sweep_validation():
    with pytest.raises(ValueError):
        sweep([cell_cfg(1, 5, 0.0)], replications=0)
    with pytest.raises(ValueError):
        sweep([cell_cfg(1, 5, 0.0, duration=10.4, warmup=9.7)], replications=1)


def test_attempt_process_poisson_in_large_cell():
    assert attempt_process_test(200, 0.0, 110.0, seed=1) < 0.02
    assert attempt_process_test(200, 0.5, 110.0, seed=1) < 0.02


def test_attempt_process_far_from_poisson_single_node():
    assert attempt_process_test(1, 0.0, 510.0, seed=1) > 0.1


# --------------------------------------------------------------------------
# exports

def test_exports_roundtrip(tmp_path):
    st = run(cell_cfg(1, 8, 0.0, seed=44))
    p1 = tmp_path / "tx.csv"
    p2 = tmp_path / "counts.csv"
    p3 = tmp_path / "gaps.csv"
    export_transmissions(st, p1, comment="demo")
    export_interval_counts(st, p2)
    export_gaps(st, p3)

    lines = p1.read_text().splitlines()
    assert lines[0] == "# demo"
    assert lines[1] == "time,node_id"
    assert len(lines) == 2 + st.total_transmissions
    t0, n0 = lines[2].split(",")
    assert float(t0) == st.transmission_times[0]
    assert int(n0) == st.transmission_nodes[0]

    lines = p2.read_text().splitlines()
    assert lines[0] == "interval_index,count"
    assert int(lines[1].split(",")[0]) == st.first_window

    lines = p3.read_text().splitlines()
    assert lines[0] == "gap"
    assert len(lines) == 1 + st.inter_transmission_times.size
