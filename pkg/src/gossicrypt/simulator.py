"""Discrete-event simulation of sink refreshing versus node compromise on a
torus.

Refresh and compromise events come from two independent Poisson clocks,
merged by superposition: the next event is a refresh with probability
``lam / (lam + 1/tau)`` and inter-event times are exponential with the summed
rate. The whole event stream (kinds, times, targets) is drawn up front from
its own RNG stream; the protocol machinery (keys, nonces, relay coins) draws
from a second one. The state-only fast path and the full protocol path thus
see the same events and, with sealed refreshes and no loss, the same trace.
"""
from __future__ import annotations

import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels
from .adversary import DIRECTIONS, AdversaryState, compromise, intercept, within_radius
from .analysis import MarkovModel, prob_relay_compromised, success_probability
from .crypto import get_suite
from .protocol import (
    DECRYPT_FAILED,
    RefreshPayload,
    node_report,
    provision,
    refresh_build_replicas,
    relay_process,
    rgen_fire,
    sink_receive,
)
from .topology import build_topology, shortest_path

STRATEGIES = ("uniform", "walk", "sweep")
SINK_MODES = ("uniform", "walk")
MEASUREMENT_SIZE = 20


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass(frozen=True)
class SimConfig:
    N: int = 100
    q: float = 0.7
    lam: float = 1.0
    tau: float = 1.5
    lambda_r: Optional[float] = None
    L: int = 6
    k: int = 5
    delta: float = 1.0
    r: int = 1
    transitions: int = 11000
    burn_in: int = 1000
    seed: int = 42
    variant: int = 2
    strategy: str = "uniform"
    sink_mode: str = "uniform"
    protocol: bool = True
    suite: str = "standard"
    refresh_loss: float = 0.0
    sink_node: int = 0
    report_every: int = 10
    snapshot_every: int = 10
    intercept_radius: int = 0
    epoch_spacing: Optional[int] = None
    min_gap: float = 0.0

    def __post_init__(self):
        self.validate()

    def validate(self):
        side = math.isqrt(self.N) if self.N > 0 else 0
        if side * side != self.N:
            raise ConfigError("N", f"{self.N} is not a positive perfect square")
        if not 0 < self.q < 1:
            raise ConfigError("q", "must lie strictly between 0 and 1")
        if self.lam < 0 or math.isnan(self.lam):
            raise ConfigError("lam", "must be >= 0")
        if not self.tau > 0:
            raise ConfigError("tau", "must be > 0")
        if self.lam == 0 and math.isinf(self.tau):
            raise ConfigError("lam", "lam = 0 with tau = inf leaves no events")
        if self.lambda_r is not None and self.lambda_r < 0:
            raise ConfigError("lambda_r", "must be >= 0")
        if self.L < 1:
            raise ConfigError("L", "must be >= 1")
        if self.k < 0:
            raise ConfigError("k", "must be >= 0")
        if not 0 < self.delta <= 1:
            raise ConfigError("delta", "must lie in (0, 1]")
        if self.delta < 1 and (self.strategy != "uniform" or self.sink_mode != "uniform"):
            raise ConfigError("delta", "a partial node set needs uniform targeting")
        if self.r < 1:
            raise ConfigError("r", "must be >= 1")
        if self.transitions < 1:
            raise ConfigError("transitions", "must be >= 1")
        if not 0 <= self.burn_in < self.transitions:
            raise ConfigError("burn_in", "must satisfy 0 <= burn_in < transitions")
        if self.seed < 0:
            raise ConfigError("seed", "must be >= 0")
        if self.variant not in (1, 2):
            raise ConfigError("variant", "must be 1 or 2")
        if self.strategy not in STRATEGIES:
            raise ConfigError("strategy", f"must be one of {STRATEGIES}")
        if self.sink_mode not in SINK_MODES:
            raise ConfigError("sink_mode", f"must be one of {SINK_MODES}")
        try:
            get_suite(self.suite)
        except ValueError as exc:
            raise ConfigError("suite", str(exc)) from None
        if not 0 <= self.refresh_loss <= 1:
            raise ConfigError("refresh_loss", "must lie in [0, 1]")
        if not 0 <= self.sink_node < self.N:
            raise ConfigError("sink_node", "must be a node id")
        for name in ("report_every", "snapshot_every", "intercept_radius"):
            if getattr(self, name) < 0:
                raise ConfigError(name, "must be >= 0")
        if self.epoch_spacing is not None and self.epoch_spacing < 1:
            raise ConfigError("epoch_spacing", "must be >= 1")
        if self.min_gap < 0:
            raise ConfigError("min_gap", "must be >= 0")

    @property
    def side(self) -> int:
        return math.isqrt(self.N)

    @property
    def n_interest(self) -> int:
        """Size of the targeted node set, ceil(delta * N)."""
        return max(1, math.ceil(self.delta * self.N - 1e-9))

    @property
    def refresh_probability(self) -> float:
        """Chance that the next merged event is a refresh."""
        return self.lam / (self.lam + 1.0 / self.tau)

    @property
    def node_refresh_rate(self) -> float:
        return self.lambda_r if self.lambda_r is not None else self.lam / self.n_interest

    @property
    def spacing(self) -> int:
        return self.epoch_spacing if self.epoch_spacing is not None else 5 * self.N

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def markov_model(self) -> MarkovModel:
        return MarkovModel(self.n_interest, self.lam, self.tau)


def replicate_seeds(seed: int, n: int) -> list:
    """``n`` independent child seeds, reproducible from ``seed``."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def replicate_configs(cfg: SimConfig, n: int) -> list:
    return [cfg.replace(seed=s) for s in replicate_seeds(cfg.seed, n)]


def _streams(seed: int):
    events, proto, measure = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(events), np.random.default_rng(proto), np.random.default_rng(measure)


# -- event stream ---------------------------------------------------------------


@dataclass
class EventStream:
    kinds: np.ndarray        # 1 = refresh, 0 = compromise
    targets: np.ndarray
    times: np.ndarray
    adv_cells: np.ndarray    # adversary cell after each event
    adv_start: int
    sink_start: int


def _walk(start: int, count: int, side: int, rng) -> np.ndarray:
    steps = np.asarray(DIRECTIONS)[rng.integers(4, size=count)]
    x0, y0 = divmod(start, side)
    x = (x0 + np.cumsum(steps[:, 0])) % side
    y = (y0 + np.cumsum(steps[:, 1])) % side
    return x * side + y


def _targets(mode: str, start: int, count: int, cfg: SimConfig, rng) -> np.ndarray:
    if mode == "uniform":
        return rng.integers(cfg.n_interest, size=count)
    if mode == "walk":
        return _walk(start, count, cfg.side, rng)
    return (start + np.arange(1, count + 1)) % cfg.N


def event_stream(cfg: SimConfig, rng) -> EventStream:
    n = cfg.transitions
    rate = cfg.lam + 1.0 / cfg.tau
    times = np.cumsum(rng.exponential(1.0 / rate, n))
    kinds = (rng.random(n) < cfg.refresh_probability).astype(np.int8)
    sink_start, adv_start = (int(v) for v in rng.integers(cfg.n_interest, size=2))
    is_sink = kinds == 1
    targets = np.empty(n, dtype=np.int64)
    targets[is_sink] = _targets(cfg.sink_mode, sink_start, int(is_sink.sum()), cfg, rng)
    targets[~is_sink] = _targets(cfg.strategy, adv_start, int((~is_sink).sum()), cfg, rng)
    last_adv = np.where(~is_sink, np.arange(n), -1)
    np.maximum.accumulate(last_adv, out=last_adv)
    adv_cells = np.where(last_adv >= 0, targets[np.maximum(last_adv, 0)], adv_start)
    return EventStream(kinds, targets, times, adv_cells, adv_start, sink_start)


# -- metrics ------------------------------------------------------------------


@dataclass
class SimMetrics:
    config: SimConfig
    kinds: np.ndarray
    targets: np.ndarray
    times: np.ndarray
    adv_cells: np.ndarray
    effects: np.ndarray       # target's correct/compromised state after the event
    counts: np.ndarray        # correct nodes (within the targeted set) after each event
    initial: np.ndarray
    refresh: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)
    intercepts: list = field(default_factory=list)

    @property
    def burn_in(self) -> int:
        return self.config.burn_in

    @property
    def n_states(self) -> int:
        return self.config.n_interest

    @property
    def state_histogram(self) -> np.ndarray:
        return np.bincount(self.counts[self.burn_in:], minlength=self.n_states + 1)

    @property
    def empirical_distribution(self) -> np.ndarray:
        h = self.state_histogram
        return h / h.sum()

    @property
    def sink_events(self) -> int:
        return int(self.kinds.sum())

    @property
    def adversary_events(self) -> int:
        return int(len(self.kinds) - self.kinds.sum())

    @property
    def final_correct(self) -> int:
        return int(self.counts[-1])

    @property
    def decrypt_fail_rate(self) -> float:
        sent = self.reports.get("sent", 0)
        return self.reports.get(DECRYPT_FAILED, 0) / sent if sent else 0.0

    def masks(self, indices) -> np.ndarray:
        """Correct-node masks right after each event in ``indices`` (sorted)."""
        return _kernels.masks_at(self.effects, self.targets, self.initial, indices)

    def to_dict(self, trace: bool = False) -> dict:
        out = {
            "config": dataclasses.asdict(self.config),
            "transitions": int(len(self.kinds)),
            "burn_in": self.burn_in,
            "sink_events": self.sink_events,
            "adversary_events": self.adversary_events,
            "final_correct": self.final_correct,
            "mean_correct": float(self.counts[self.burn_in:].mean()),
            "state_histogram": self.state_histogram.tolist(),
            "decrypt_fail_rate": self.decrypt_fail_rate,
            "refresh": dict(self.refresh),
            "reports": dict(self.reports),
            "intercepts": len(self.intercepts),
        }
        if trace:
            out["counts"] = self.counts.tolist()
        return out


# -- runs ---------------------------------------------------------------------


def run_fast(cfg: SimConfig) -> SimMetrics:
    """State-only run: the correct-node process without any cryptography."""
    ev_rng, _, _ = _streams(cfg.seed)
    ev = event_stream(cfg, ev_rng)
    initial = np.ones(cfg.n_interest, dtype=bool)
    counts = _kernels.count_trace(ev.kinds, ev.targets, initial)
    return SimMetrics(cfg, ev.kinds, ev.targets, ev.times, ev.adv_cells, ev.kinds.copy(),
                      counts, initial)


def _measurement(node: int, e: int) -> bytes:
    return f"n{node:05d}e{e:08d}".encode().ljust(MEASUREMENT_SIZE, b"\0")[:MEASUREMENT_SIZE]


class _Network:
    """Live protocol objects for one full-protocol run."""

    def __init__(self, cfg: SimConfig, rng):
        self.cfg = cfg
        self.rng = rng
        self.topo = build_topology(cfg.N)
        suite = get_suite(cfg.suite)
        self.nodes, self.sink = provision(cfg.N, cfg.q, rng, suite)
        self.sink_pub = self.sink.keypair.public if cfg.variant == 2 else None
        self.adv = AdversaryState(cfg.side, min_gap=cfg.min_gap, intercept_radius=cfg.intercept_radius,
                                  suite=suite, body_size=self.sink.body_size)
        self.refresh = {"built": 0, "replicas": 0, "lost": 0, "accepted": 0, "intercepted_keys": 0}
        self.reports = {"sent": 0, "accepted": 0}

    def _deliver(self, source: int, packets, t: float, tally: dict, lossy: bool):
        relays = shortest_path(self.topo, source, self.cfg.sink_node, self.rng)[1:]
        for pkt in packets:
            seen = within_radius(self.adv, source)
            if seen:
                self._overhear(pkt, t)
            for hop in relays:
                pkt = relay_process(self.nodes[hop], pkt, self.rng)
                if not seen and within_radius(self.adv, hop):
                    seen = True
                    self._overhear(pkt, t)
            if lossy and self.rng.random() < self.cfg.refresh_loss:
                tally["lost"] = tally.get("lost", 0) + 1
                continue
            verdict = sink_receive(self.sink, pkt)
            key = "accepted" if verdict.accepted else verdict.reason
            tally[key] = tally.get(key, 0) + 1

    def _overhear(self, pkt, t):
        payload = intercept(self.adv, pkt, t)
        if isinstance(payload, RefreshPayload) and not payload.sealed:
            self.refresh["intercepted_keys"] += 1

    def refresh_node(self, node_id: int, e: int, t: float):
        node = self.nodes[node_id]
        rgen_fire(node, self.rng)
        packets, _ = refresh_build_replicas(node, self.sink_pub, self.rng, self.cfg.r)
        self.refresh["built"] += 1
        self.refresh["replicas"] += len(packets)
        self._deliver(node_id, packets, t, self.refresh, lossy=True)

    def report(self, e: int, t: float):
        src = int(self.rng.integers(self.cfg.n_interest))
        packets = node_report(self.nodes[src], _measurement(src, e), self.rng, self.sink_pub, self.cfg.r)
        self.reports["sent"] += 1
        self._deliver(src, packets, t, self.reports, lossy=False)

    def correct(self, node_id: int) -> bool:
        return not self.adv.holds_current(self.nodes[node_id])


def run_full(cfg: SimConfig) -> SimMetrics:
    """Run with live keys, packets, relays, sink and adversary."""
    ev_rng, proto_rng, _ = _streams(cfg.seed)
    ev = event_stream(cfg, ev_rng)
    net = _Network(cfg, proto_rng)
    net.adv.position = net.topo.coords(ev.adv_start)
    n = cfg.n_interest
    initial = np.ones(n, dtype=bool)
    effects = np.empty(len(ev.kinds), dtype=np.int8)
    counts = np.empty(len(ev.kinds), dtype=np.int64)
    count = n
    for e in range(len(ev.kinds)):
        target = int(ev.targets[e])
        t = float(ev.times[e])
        before = net.correct(target)
        if ev.kinds[e]:
            net.refresh_node(target, e, t)
        else:
            net.adv.position = net.topo.coords(target)
            compromise(net.adv, net.nodes[target], t)
        after = net.correct(target)
        count += int(after) - int(before)
        effects[e] = after
        counts[e] = count
        if cfg.report_every and (e + 1) % cfg.report_every == 0:
            net.report(e, t)
    return SimMetrics(cfg, ev.kinds, ev.targets, ev.times, ev.adv_cells, effects, counts, initial,
                      refresh=net.refresh, reports=net.reports, intercepts=net.adv.intercept_log)


def run(cfg: SimConfig) -> SimMetrics:
    return run_full(cfg) if cfg.protocol else run_fast(cfg)


def run_many(cfgs, workers: int = 1) -> list:
    """Independent runs, optionally fanned out over processes; order preserved."""
    cfgs = list(cfgs)
    if workers <= 1 or len(cfgs) <= 1:
        return [run(c) for c in cfgs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, cfgs))


# -- estimators -----------------------------------------------------------------


@dataclass
class SuccessEstimate:
    L: int
    q: float
    per_run: np.ndarray
    analytical: float

    @property
    def median(self) -> float:
        return float(np.median(self.per_run))

    @property
    def band(self) -> tuple:
        lo, hi = np.quantile(self.per_run, [0.025, 0.975])
        return float(lo), float(hi)


def _success_from_metrics(metrics: SimMetrics, L: int, qs, trials: int, rng) -> list:
    cfg = metrics.config
    if cfg.n_interest < cfg.N:
        raise ConfigError("delta", "success measurement needs the full node set")
    topo = build_topology(cfg.N)
    post = np.arange(cfg.burn_in, cfg.transitions)
    stride = max(cfg.snapshot_every, 1)
    snaps = post[::stride]
    pick = np.sort(rng.integers(len(snaps), size=trials))
    masks = metrics.masks(snaps)
    relays = np.empty((trials, L), dtype=np.int64)
    for t, s in enumerate(pick):
        adv_cell = int(metrics.adv_cells[snaps[s]])
        ring = topo.cells_at_distance(adv_cell, L + 1)
        if not ring:
            raise ValueError(f"no node at distance {L + 1} on a {topo.side}x{topo.side} torus")
        source = ring[int(rng.integers(len(ring)))]
        relays[t] = shortest_path(topo, source, adv_cell, rng)[1:-1]
    u = rng.random((trials, L))
    return [float(_kernels.success_trials(masks, pick, relays, u < q).mean()) for q in qs]


def measure_success(cfg: SimConfig, L: Optional[int] = None, qs=None, trials: int = 2000,
                    runs: int = 20, workers: int = 1) -> list:
    """Empirical P{Y>0} per q across ``runs`` seeded simulations.

    Each trial picks a post-burn-in snapshot, a source ``L + 1`` hops from
    the adversary's cell and a random shortest path to that cell. The
    adversary overhears the packet as it reaches its cell, so the ``L`` nodes
    strictly between source and cell are the ones that flip coins. ``Y`` counts heads on correct
    nodes, exactly the quantity of the closed form (the source layer is not
    counted). All q values share the same snapshots, paths and uniforms.
    """
    L = cfg.L if L is None else L
    qs = [cfg.q] if qs is None else list(qs)
    results = run_many(replicate_configs(cfg, runs), workers)
    per_run = []
    for m in results:
        _, _, measure_rng = _streams(m.config.seed)
        per_run.append(_success_from_metrics(m, L, qs, trials, measure_rng))
    per_run = np.asarray(per_run)
    model = cfg.markov_model()
    return [SuccessEstimate(L, q, per_run[:, j], success_probability(model, L, q)) for j, q in enumerate(qs)]


@dataclass
class BreachEstimate:
    source: int
    collector: int
    relays: tuple
    q: float
    hits: np.ndarray
    windows: np.ndarray
    f1_analytical: float

    @property
    def k(self) -> np.ndarray:
        return np.arange(0, len(self.hits) + 1)

    @property
    def F(self) -> np.ndarray:
        """F̂(k) for k = 0..k_max; k = 0 is the empty conjunction."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.concatenate([[1.0], self.hits / self.windows])

    @property
    def analytical(self) -> np.ndarray:
        return self.f1_analytical ** self.k

    def log_slope(self) -> float:
        """Least-squares slope of log F̂(k) on k over k = 1..k_max."""
        k = self.k[1:]
        F = self.F[1:]
        if np.any(F <= 0):
            raise ValueError("F̂(k) hit zero; increase replicates or runs")
        return float(np.polyfit(k, np.log(F), 1)[0])


def measure_breach(cfg: SimConfig, source: int, collector: int, k_max: Optional[int] = None,
                   runs: int = 200, replicates: int = 2000, workers: int = 1) -> BreachEstimate:
    """Estimate F̂(k): every one of k consecutive epochs breached.

    One measurement per epoch goes from ``source`` to ``collector`` over a
    shortest path fixed per run; relays strictly between the two flip fresh
    coins every epoch and replicate. An epoch is breached when the adversary
    holds the source key and the key of every relay that re-encrypted, i.e.
    exactly when its stolen keys peel the packet. Epochs are
    ``cfg.spacing`` events apart.
    """
    if source == collector:
        raise ValueError("source and collector must differ")
    k_max = cfg.k if k_max is None else k_max
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    topo = build_topology(cfg.N)
    hits = np.zeros(k_max, dtype=np.int64)
    windows = np.zeros(k_max, dtype=np.int64)
    epochs = np.arange(cfg.burn_in, cfg.transitions, cfg.spacing)
    relays = None
    for m in run_many(replicate_configs(cfg, runs), workers):
        _, _, rng = _streams(m.config.seed)
        path = shortest_path(topo, source, collector, rng)
        run_relays = np.asarray(path[1:-1], dtype=np.int64)
        relays = tuple(int(v) for v in run_relays) if relays is None else relays
        masks = m.masks(epochs)
        heads = rng.random((replicates, len(epochs), len(run_relays))) < cfg.q
        h, w = _kernels.breach_windows(masks, source, run_relays, heads, k_max)
        hits += h
        windows += w
    p0 = prob_relay_compromised(cfg.markov_model())
    n_rel = topo.distance(source, collector) - 1
    f1 = p0 * ((1 - cfg.q) + cfg.q * p0) ** n_rel
    return BreachEstimate(source, collector, relays, cfg.q, hits, windows, f1)
