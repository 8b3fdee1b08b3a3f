"""Seeded discrete-event simulation of the steady-state broadcast process.

Every node runs the suppression timer with a fixed interval length
``tau_h`` (the steady-state regime: all messages consistent, intervals
never shrink or grow).  Events are pre-generated per node from independent
seeded streams, merged into one time-ordered schedule, and swept once.
Two topology-specific sweeps share that schedule:

* single cell -- every node hears every transmission, so a node's message
  counter equals the number of network-wide transmissions since its own
  interval started (a snapshot subtraction instead of per-node counters);
* grid -- per-node counters, bumped for all lattice neighbors in range of
  each sender.

Determinism: node ``i``'s draws come from a stream derived from
``(seed, i)``, so runs are bit-reproducible and changing the node count
does not perturb the other nodes' draws.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from math import ceil, floor, sqrt

import numpy as np
from scipy import stats as _stats

from .core import TrickleConfig
from .csvio import write_csv
from .topology import SingleCell, Topology, neighbor_table, num_nodes

__all__ = [
    "Skew",
    "SimRunConfig",
    "SimStats",
    "SweepResult",
    "run",
    "sweep",
    "attempt_process_test",
    "node_schedule",
    "replication_seeds",
    "export_transmissions",
    "export_interval_counts",
    "export_gaps",
]


class Skew(Enum):
    """How nodes' interval boundaries are offset against absolute time."""

    UNIFORM_RANDOM = "uniform"
    SYNCHRONIZED = "synchronized"


@dataclass(frozen=True)
class SimRunConfig:
    """One simulation run: algorithm parameters, topology, horizon, seed.

    ``duration`` and ``warmup`` are in absolute time units; statistics are
    collected for events in ``(warmup, duration]`` only.  Per-interval
    counts use windows of length ``tau_h`` aligned to absolute time, and
    only windows lying entirely inside the measured span are kept.
    """

    trickle: TrickleConfig
    topology: Topology
    duration: float = 100.0
    warmup: float = 10.0
    seed: int = 0
    skew: Skew = Skew.UNIFORM_RANDOM
    record_attempts: bool = False

    def __post_init__(self) -> None:
        if not self.duration > self.warmup:
            raise ValueError(
                f"duration must exceed warmup, got duration={self.duration} warmup={self.warmup}"
            )
        if self.warmup < 0:
            raise ValueError(f"warmup must be >= 0, got {self.warmup}")
        if not isinstance(self.seed, (int, np.integer)):
            raise ValueError(f"seed must be an integer, got {self.seed!r}")


@dataclass
class SimStats:
    """Statistics collected from one run, all restricted to the measured span.

    Attributes
    ----------
    transmission_times, transmission_nodes : ndarray
        Time-ordered successful broadcasts in ``(warmup, duration]``.
    inter_transmission_times : ndarray
        Gaps between consecutive network-wide transmissions; pairs spanning
        the warmup boundary are never formed.
    per_interval_counts : ndarray of int
        Transmissions per window ``[w*tau_h, (w+1)*tau_h)`` for the whole
        windows after warmup; ``first_window`` is the absolute index of the
        first one.
    per_node_counts : dict
        node id -> number of transmissions (every node has an entry).
    attempt_times : ndarray or None
        All timer fires (suppressed or not), when recording was requested.
    """

    config: SimRunConfig
    transmission_times: np.ndarray
    transmission_nodes: np.ndarray
    inter_transmission_times: np.ndarray
    per_interval_counts: np.ndarray
    per_node_counts: dict[int, int]
    first_window: int
    attempt_times: np.ndarray | None = None

    @property
    def total_transmissions(self) -> int:
        return int(self.transmission_times.size)

    @property
    def mean_per_interval(self) -> float:
        return float(self.per_interval_counts.mean())


def node_schedule(config: SimRunConfig, node_id: int) -> tuple[float, np.ndarray]:
    """Deterministic schedule for one node: (first interval start, theta draws).

    The node's stream yields its interval skew first (uniform-random mode
    only), then one broadcast offset per interval.  Interval ``j`` runs
    over ``[s + j*tau_h, s + (j+1)*tau_h)`` and its broadcast time is
    ``s + j*tau_h + theta_j`` with ``theta_j`` in ``[eta*tau_h, tau_h)``.
    Exposed so tests can audit a run event-by-event.
    """
    tau = config.trickle.tau_h
    eta = config.trickle.eta
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(node_id,)))
    if config.skew is Skew.UNIFORM_RANDOM:
        s = rng.random() * tau
    else:
        s = 0.0
    n_intervals = int(floor((config.duration - s) / tau)) + 1
    u = rng.random(n_intervals)
    thetas = tau * (eta + u * (1.0 - eta))
    return s, thetas


def _event_schedule(config: SimRunConfig, n: int):
    """Merged, time-ordered event arrays for all nodes.

    Returns (times, nodes, is_fire) with simultaneous events ordered by
    (time, node id, per-node sequence).  The per-node sequence interleaves
    interval starts and fires (start_j < fire_j < start_{j+1}), which keeps
    the two degenerate corners right: a fire at offset zero lands after its
    own interval start, and a fire at offset tau (eta = 1) lands before the
    next interval start.
    """
    tau = config.trickle.tau_h
    dur = config.duration
    times = []
    nodes = []
    seqs = []
    for i in range(n):
        s, thetas = node_schedule(config, i)
        j = np.arange(thetas.size)
        starts = s + tau * j
        # Cap each fire at the next interval start as computed below, so a
        # fire at offset tau (eta = 1, or rounding on the last ulp) compares
        # equal to the rollover time and the sequence tie-break keeps it
        # inside its own interval.
        fires = np.minimum(starts + thetas, s + tau * (j + 1))
        t_i = np.concatenate([starts, fires])
        q_i = np.concatenate([2 * j, 2 * j + 1])
        keep = t_i <= dur
        times.append(t_i[keep])
        seqs.append(q_i[keep])
        nodes.append(np.full(int(keep.sum()), i, dtype=np.intp))
    t = np.concatenate(times)
    node = np.concatenate(nodes)
    seq = np.concatenate(seqs)
    order = np.lexsort((seq, node, t))
    return t[order], node[order], (seq[order] & 1).astype(np.uint8)


def _sweep_single_cell(times, nodes, is_fire, n: int, k: int, record_attempts: bool):
    """Single-cell sweep via snapshot subtraction.

    ``snap[i]`` is the global transmission count when node ``i``'s current
    interval began; the node's heard-message counter is the difference.  A
    node's own broadcast never contributes: it happens at the moment the
    difference is evaluated and the node fires at most once per interval.
    """
    snap = [0] * n
    txc = 0
    tx_t: list[float] = []
    tx_i: list[int] = []
    att: list[float] | None = [] if record_attempts else None
    for t, i, fire in zip(times.tolist(), nodes.tolist(), is_fire.tolist()):
        if fire:
            if att is not None:
                att.append(t)
            if txc - snap[i] < k:
                txc += 1
                tx_t.append(t)
                tx_i.append(i)
        else:
            snap[i] = txc
    return tx_t, tx_i, att


def _sweep_grid(times, nodes, is_fire, neighbors, k: int, record_attempts: bool):
    """Grid sweep with explicit per-node counters; a transmission bumps the
    counter of every in-range node at the same timestamp, before any later
    event is processed."""
    n = len(neighbors)
    c = np.zeros(n, dtype=np.int64)
    tx_t: list[float] = []
    tx_i: list[int] = []
    att: list[float] | None = [] if record_attempts else None
    for t, i, fire in zip(times.tolist(), nodes.tolist(), is_fire.tolist()):
        if fire:
            if att is not None:
                att.append(t)
            if c[i] < k:
                c[neighbors[i]] += 1
                tx_t.append(t)
                tx_i.append(i)
        else:
            c[i] = 0
    return tx_t, tx_i, att


def run(config: SimRunConfig) -> SimStats:
    """Execute one seeded run and collect statistics.

    Transmissions are delivered instantaneously and losslessly to all
    topology neighbors of the sender; all messages are consistent, so
    interval lengths never change.  Identical configs (including the seed)
    produce bit-identical results.
    """
    n = num_nodes(config.topology)
    times, nodes, is_fire = _event_schedule(config, n)
    if isinstance(config.topology, SingleCell):
        tx_t, tx_i, att = _sweep_single_cell(
            times, nodes, is_fire, n, config.trickle.k, config.record_attempts
        )
    else:
        nbrs = neighbor_table(config.topology)
        tx_t, tx_i, att = _sweep_grid(
            times, nodes, is_fire, nbrs, config.trickle.k, config.record_attempts
        )

    tau = config.trickle.tau_h
    warm, dur = config.warmup, config.duration
    tx_times = np.asarray(tx_t, dtype=np.float64)
    tx_nodes = np.asarray(tx_i, dtype=np.intp)
    m = (tx_times > warm) & (tx_times <= dur)
    tx_times = tx_times[m]
    tx_nodes = tx_nodes[m]

    w0 = int(ceil(warm / tau))
    n_windows = max(0, int(floor(dur / tau)) - w0)
    if n_windows > 0:
        in_win = (tx_times >= w0 * tau) & (tx_times < (w0 + n_windows) * tau)
        idx = np.floor(tx_times[in_win] / tau).astype(np.int64) - w0
        per_interval = np.bincount(idx, minlength=n_windows)
    else:
        per_interval = np.zeros(0, dtype=np.int64)

    per_node = dict(enumerate(np.bincount(tx_nodes, minlength=n).tolist()))

    attempts = None
    if att is not None:
        a = np.asarray(att, dtype=np.float64)
        attempts = a[(a > warm) & (a <= dur)]

    return SimStats(
        config=config,
        transmission_times=tx_times,
        transmission_nodes=tx_nodes,
        inter_transmission_times=np.diff(tx_times),
        per_interval_counts=per_interval,
        per_node_counts=per_node,
        first_window=w0,
        attempt_times=attempts,
    )


def replication_seeds(seed: int, replications: int) -> list[int]:
    """Independent per-replication seeds derived from one master seed.

    Pre-assigned up front so result merging is order-independent no matter
    how replications are scheduled.
    """
    ss = np.random.SeedSequence(seed)
    return [int(s) for s in ss.generate_state(replications, dtype=np.uint64)]


@dataclass
class SweepResult:
    """Pooled per-interval transmission counts for one config."""

    config: SimRunConfig
    replications: int
    pooled_windows: int
    mean_per_interval: float
    std: float
    ci_halfwidth: float


def sweep(configs: list[SimRunConfig], replications: int) -> list[SweepResult]:
    """Run each config `replications` times and pool per-interval counts.

    The confidence half-width is ``1.96 * std / sqrt(pooled window count)``.
    """
    if replications < 1:
        raise ValueError(f"replications must be >= 1, got {replications}")
    out = []
    for cfg in configs:
        seeds = replication_seeds(cfg.seed, replications)
        pools = []
        for s in seeds:
            st = run(replace(cfg, seed=s))
            if st.per_interval_counts.size == 0:
                raise ValueError(
                    "no whole measurement window between warmup and duration; "
                    f"got warmup={cfg.warmup}, duration={cfg.duration}"
                )
            pools.append(st.per_interval_counts)
        pool = np.concatenate(pools)
        std = float(pool.std(ddof=1)) if pool.size > 1 else 0.0
        out.append(
            SweepResult(
                config=cfg,
                replications=replications,
                pooled_windows=int(pool.size),
                mean_per_interval=float(pool.mean()),
                std=std,
                ci_halfwidth=1.96 * std / sqrt(pool.size),
            )
        )
    return out


def attempt_process_test(n: int, eta: float, duration: float, seed: int) -> float:
    """KS distance between scaled inter-attempt gaps and the unit exponential.

    Records every timer fire (suppressed or not) in a single cell of `n`
    nodes, dilates time by the factor `n`, and compares the empirical gap
    distribution against Exp(1).  In a large cell the pooled attempt
    process is statistically indistinguishable from a unit-rate Poisson
    process, so the statistic is small; for n = 1 the gaps are the spacings
    of a single node's timer and the statistic is large.  The value is
    returned without judgment.
    """
    cfg = SimRunConfig(
        trickle=TrickleConfig(k=1, tau_l=1.0, tau_h=1.0, eta=eta),
        topology=SingleCell(n),
        duration=duration,
        warmup=10.0,
        seed=seed,
        record_attempts=True,
    )
    st = run(cfg)
    scaled = np.diff(st.attempt_times) * n
    return float(_stats.kstest(scaled, "expon").statistic)


def export_transmissions(stats: SimStats, path, comment: str | None = None) -> None:
    """Write ``time,node_id`` rows for all measured transmissions."""
    rows = zip(stats.transmission_times.tolist(), stats.transmission_nodes.tolist())
    write_csv(path, ["time", "node_id"], rows, comment)


def export_interval_counts(stats: SimStats, path, comment: str | None = None) -> None:
    """Write ``interval_index,count`` rows (absolute window indices)."""
    rows = (
        (stats.first_window + i, int(c))
        for i, c in enumerate(stats.per_interval_counts.tolist())
    )
    write_csv(path, ["interval_index", "count"], rows, comment)


def export_gaps(stats: SimStats, path, comment: str | None = None) -> None:
    """Write one ``gap`` row per inter-transmission time."""
    rows = ((g,) for g in stats.inter_transmission_times.tolist())
    write_csv(path, ["gap"], rows, comment)
