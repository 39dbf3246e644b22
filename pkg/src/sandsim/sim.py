"""Deterministic round-based network engine.

Each round runs the same fixed sequence over nodes in ascending id order:

1. failures scheduled for the round, then radio duty cycle for every node;
2. Hello emission and delivery to every alive, in-range, radio-on neighbor;
3. density control by settled routers, and delivery of their orders
   (a Hello and its reply fit in one round because the Hello period is
   more than twice the one-hop transmission bound);
4. state decisions for every node whose listen window just completed;
5. energy consumption and death;
6. stimuli, path checks and the round's metrics.

Decisions in step 4 only read what was delivered in steps 2-3, so the
result does not depend on the order nodes are visited in.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import protocol as P
from .config import FailureAction, FailureEvent, Mode, SimConfig
from .energy import EnergyCostTable
from .protocol import EnergyState, HelloPayload, NodeRecord, OrderPayload, RadioPower

S = EnergyState
SINK_TENURE = 2**31 - 1

# One independent stream per purpose, so switching a feature on or off never
# shifts the draws of another.
RNG_STREAMS = ("placement", "sinks", "stimuli", "phase", "loss", "flush", "jitter")


def make_rngs(seed: int) -> dict[str, np.random.Generator]:
    return {
        name: np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(i,)))
        for i, name in enumerate(RNG_STREAMS)
    }


@dataclass(frozen=True)
class Stimulus:
    position: tuple[float, float]
    round: int


@dataclass(frozen=True)
class Envelope:
    payload: HelloPayload | OrderPayload
    sender: int
    sent_round: int


@dataclass(frozen=True)
class StimulusOutcome:
    round: int
    x: float
    y: float
    sensing_count: int
    sensed: bool
    source_id: int | None
    connected: bool
    hops: int | None


@dataclass
class RoundMetrics:
    round: int
    router_count: int = 0
    gateway_count: int = 0
    sensor_only_count: int = 0
    sleep_count: int = 0
    dead_count: int = 0
    crashed_count: int = 0
    sink_count: int = 0
    mean_remaining_energy_alive: float = math.nan
    stimuli_sensed: int = 0
    stimuli_total_this_round: int = 0
    paths_ok: int = 0
    paths_checked: int = 0
    path_lengths: tuple[int, ...] = ()

    @property
    def total(self) -> int:
        return (
            self.router_count
            + self.gateway_count
            + self.sensor_only_count
            + self.sleep_count
            + self.dead_count
            + self.crashed_count
            + self.sink_count
        )


@dataclass
class Deployment:
    nodes: list[NodeRecord]
    sinks: frozenset[int]
    neighbors: list[list[int]]
    positions: np.ndarray
    tx_range: float
    tree: cKDTree = field(repr=False)

    def is_sensing(self, i: int) -> bool:
        node = self.nodes[i]
        return not node.sink and node.state in P.SENSING

    def is_awake(self, i: int) -> bool:
        node = self.nodes[i]
        return node.alive and node.state != S.SLEEP

    def neighbor_graph(self, include: Callable[[int], bool] | None = None) -> dict[int, set[int]]:
        """Adjacency over alive nodes (optionally filtered further)."""
        keep = [
            i for i, n in enumerate(self.nodes) if n.alive and (include is None or include(i))
        ]
        keep_set = set(keep)
        return {i: {j for j in self.neighbors[i] if j in keep_set} for i in keep}

    def awake_graph(self) -> dict[int, set[int]]:
        return self.neighbor_graph(self.is_awake)

    def in_range(self, x: float, y: float) -> list[int]:
        return sorted(self.tree.query_ball_point((x, y), self.tx_range))


def unit_disk_neighbors(positions: np.ndarray, tx_range: float) -> tuple[cKDTree, list[list[int]]]:
    tree = cKDTree(positions)
    adj: list[list[int]] = [[] for _ in range(len(positions))]
    for i, j in sorted(tree.query_pairs(tx_range)):
        adj[i].append(j)
        adj[j].append(i)
    for row in adj:
        row.sort()
    return tree, adj


def deploy(config: SimConfig, rngs: dict[str, np.random.Generator] | None = None) -> Deployment:
    """Uniform placement of sensors and sinks over the square area."""
    rngs = rngs or make_rngs(config.seed)
    n = config.node_count
    positions = rngs["placement"].uniform(0.0, config.area_side, size=(n, 2))
    sinks = [int(i) for i in rngs["sinks"].choice(n, size=config.sink_count, replace=False)]
    phases = rngs["phase"].integers(0, config.timing.period, size=n)
    return build_deployment(config, positions, sinks, phases)


def build_deployment(
    config: SimConfig,
    positions: Sequence[Sequence[float]] | np.ndarray,
    sinks: Sequence[int] = (),
    phases: Sequence[int] | np.ndarray | None = None,
) -> Deployment:
    """Deployment from explicit coordinates (node ids follow ``positions``)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = len(positions)
    sinks = frozenset(int(s) for s in sinks)
    if phases is None:
        phases = [0] * n
    tree, adj = unit_disk_neighbors(positions, config.tx_range)
    baseline = config.mode == Mode.WITHOUT_SAND
    nodes = []
    for i in range(n):
        node = NodeRecord(
            id=i,
            position=(float(positions[i, 0]), float(positions[i, 1])),
            energy=config.initial_energy,
            el=config.initial_energy,
            wake_phase=int(phases[i]),
        )
        if i in sinks:
            node.sink = True
            node.state = S.ROUTER_SENSOR
            node.time_in_state = SINK_TENURE
        elif baseline:
            node.state = S.ROUTER_SENSOR
        nodes.append(node)
    return Deployment(nodes, sinks, adj, positions, config.tx_range, tree)


def generate_stimuli(config: SimConfig, rng: np.random.Generator) -> list[Stimulus]:
    count = config.stimuli_count if config.rounds > 0 else 0
    xy = rng.uniform(0.0, config.area_side, size=(count, 2))
    rounds = rng.integers(0, max(config.rounds, 1), size=count)
    order = np.argsort(rounds, kind="stable")
    return [
        Stimulus((float(xy[i, 0]), float(xy[i, 1])), int(rounds[i])) for i in order
    ]


def sense_stimulus(deployment: Deployment, stimulus: Stimulus, k: int) -> tuple[bool, int]:
    """Whether at least ``k`` sensing-capable nodes cover the stimulus."""
    count = sum(1 for i in deployment.in_range(*stimulus.position) if deployment.is_sensing(i))
    return count >= k, count


def nearest_source(deployment: Deployment, stimulus: Stimulus) -> int | None:
    x, y = stimulus.position
    best = None
    for i in deployment.in_range(x, y):
        if not deployment.is_sensing(i):
            continue
        px, py = deployment.nodes[i].position
        d = (px - x) ** 2 + (py - y) ** 2
        if best is None or d < best[0]:
            best = (d, i)
    return None if best is None else best[1]


def is_forwarder(node: NodeRecord) -> bool:
    return node.sink or node.state in P.ALWAYS_ON


def sink_distances(deployment: Deployment) -> dict[int, int]:
    """Hop distance from every backbone vertex to its nearest sink."""
    nodes, adj = deployment.nodes, deployment.neighbors
    dist = {s: 0 for s in sorted(deployment.sinks)}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        du = dist[u] + 1
        for v in adj[u]:
            if v not in dist:
                nv = nodes[v]
                if nv.state == S.ROUTER_SENSOR or nv.state == S.GATEWAY:
                    dist[v] = du
                    queue.append(v)
    return dist


def source_hops(deployment: Deployment, source: int, dist: dict[int, int]) -> int | None:
    if source in dist:
        return dist[source]
    best = None
    for v in deployment.neighbors[source]:
        d = dist.get(v)
        if d is not None and (best is None or d < best):
            best = d
    return None if best is None else best + 1


def inject_failures(
    deployment: Deployment, schedule: Sequence[FailureEvent], round_: int
) -> list[FailureEvent]:
    """Apply the schedule entries for ``round_``; returns the ones that acted."""
    applied = []
    for ev in schedule:
        if ev.round != round_:
            continue
        node = deployment.nodes[ev.node]
        if node.sink:
            continue
        if ev.action == FailureAction.CRASH:
            if not node.alive:
                continue
            node.crashed = True
            node.state = S.DEAD
            node.radio = RadioPower.OFF
            _reset_window(node)
            node.neighbor_table = {}
            node.last_el_of_sleepers = {}
        else:
            if not node.crashed or node.energy <= 0:
                continue
            node.crashed = False
            node.state = S.SENSOR_ONLY
            node.radio = RadioPower.ON
            node.time_in_state = 0
            node.el = node.energy
            node.lonely_windows = 0
            node.last_routers = frozenset()
        applied.append(ev)
    return applied


def _reset_window(node: NodeRecord) -> None:
    node.listen_remaining = 0
    node.heard = []
    node.orders = []


TransitionHook = Callable[[int, int, EnergyState, EnergyState], None]
DeliveryHook = Callable[[int, int, int, "HelloPayload | OrderPayload"], None]


class Simulation:
    """One run of one scenario.  Call :meth:`run` or :meth:`step` repeatedly."""

    def __init__(
        self,
        config: SimConfig,
        on_transition: TransitionHook | None = None,
        on_delivery: DeliveryHook | None = None,
        deployment: Deployment | None = None,
    ) -> None:
        self.config = config
        self.timing = config.timing
        self.rngs = make_rngs(config.seed)
        if deployment is None:
            deployment = deploy(config, self.rngs)
        self.deployment = deployment
        self.stimuli = generate_stimuli(config, self.rngs["stimuli"])
        self._stim_pos = 0
        self._schedule_by_round: dict[int, list[FailureEvent]] = {}
        for ev in config.failure_schedule:
            self._schedule_by_round.setdefault(ev.round, []).append(ev)
        self.round = 0
        self.metrics: list[RoundMetrics] = []
        self.outcomes: list[StimulusOutcome] = []
        self.on_transition = on_transition
        self.on_delivery = on_delivery
        self._costs = config.cost_table.as_array()
        self._sand = config.mode == Mode.SAND
        self._sensors = [n for n in self.deployment.nodes if not n.sink]
        self._sinks = [n for n in self.deployment.nodes if n.sink]

    # -- public API ---------------------------------------------------------

    def run(self, rounds: int | None = None) -> list[RoundMetrics]:
        end = self.config.rounds if rounds is None else min(rounds, self.config.rounds)
        while self.round < end:
            self.step()
        return self.metrics

    def iter_rounds(self) -> Iterator[RoundMetrics]:
        while self.round < self.config.rounds:
            yield self.step()[1]

    def step(self) -> tuple[list[Envelope], RoundMetrics]:
        """Run one round: returns the envelopes sent and the round's metrics."""
        if self.round >= self.config.rounds:
            raise RuntimeError("simulation already finished")
        r = self.round
        events = self._schedule_by_round.get(r)
        if events:
            inject_failures(self.deployment, events, r)
        alive = [n for n in self._sensors if n.state != S.DEAD]
        if self._sand:
            envelopes = self._protocol_round(alive, r)
        else:
            envelopes = []
            for n in alive:
                n.radio = RadioPower.ON
        self._consume(alive, r)
        for n in alive:
            n.time_in_state += 1
        metrics = self._measure(r)
        self.metrics.append(metrics)
        self.round += 1
        return envelopes, metrics

    # -- round phases -------------------------------------------------------

    def _protocol_round(self, alive: list[NodeRecord], r: int) -> list[Envelope]:
        timing = self.timing
        nodes = self.deployment.nodes
        adj = self.deployment.neighbors
        t_on = timing.t_on
        flush_p = self.config.flush_probability
        flush_rng = self.rngs["flush"]

        # 1. radio
        for n in alive:
            flush = False
            if flush_p > 0.0 and n.state == S.SENSOR_ONLY:
                flush = bool(flush_rng.random() < flush_p)
            radio = P.duty_cycle_tick(n, r, timing, flush)
            n.radio = radio
            if radio == RadioPower.ON:
                if n.listen_remaining == 0:
                    n.listen_remaining = t_on
                    n.heard = []
                    n.orders = []
            elif n.listen_remaining:
                _reset_window(n)
        self._pre_round = [(n, n.state, n.radio) for n in alive]

        # 2. hellos
        envelopes: list[Envelope] = []
        hellos: list[HelloPayload] = []
        if r % timing.delta_big == 0:
            for s in self._sinks:
                hellos.append(
                    HelloPayload(s.id, S.ROUTER_SENSOR, P.StateTimestamp(SINK_TENURE, s.id), 0, sink=True)
                )
        for n in alive:
            hellos.extend(P.emit_hellos(n, r, timing))
        hellos.sort(key=lambda h: h.sender)
        drop_p = self.config.drop_probability
        loss_rng = self.rngs["loss"]
        hook = self.on_delivery
        fresh: dict[int, set[int]] = {}
        for h in hellos:
            envelopes.append(Envelope(h, h.sender, r))
            u = h.sender
            for v in adj[u]:
                node = nodes[v]
                if node.sink or node.radio != RadioPower.ON or node.state == S.DEAD:
                    continue
                if drop_p > 0.0 and loss_rng.random() < drop_p:
                    continue
                node.heard.append(h)
                if hook is not None:
                    hook(r, u, v, h)
                if node.state == S.ROUTER_SENSOR:
                    node.neighbor_table[u] = (r, h)
                    if h.state != S.SLEEP:
                        node.last_el_of_sleepers.pop(u, None)
                    fresh.setdefault(v, set()).add(u)

        # 3. density control
        k = self.config.reliability_k
        mode = self.config.threshold_mode
        horizon = timing.period
        for n in alive:
            if n.state != S.ROUTER_SENSOR:
                continue
            table = n.neighbor_table
            stale = [u for u, (seen, _) in table.items() if r - seen >= horizon]
            for u in stale:
                del table[u]
            if n.time_in_state < horizon:
                continue
            known = [table[u][1] for u in sorted(table)]
            orders = P.density_control_step(n, known, k, fresh.get(n.id, ()), mode)
            for o in orders:
                envelopes.append(Envelope(o, n.id, r))
                if o.kind == P.OrderKind.SWITCH_TO_SLEEP:
                    seen = table.pop(o.target)
                    n.last_el_of_sleepers[o.target] = seen[1].el
                target = nodes[o.target]
                if (
                    target.radio != RadioPower.ON
                    or target.state == S.DEAD
                    or o.target not in adj[n.id]
                ):
                    continue
                if drop_p > 0.0 and loss_rng.random() < drop_p:
                    continue
                target.orders.append(o)
                if hook is not None:
                    hook(r, n.id, o.target, o)

        # 4. decisions on completed windows
        grace = timing.gateway_grace
        for n in alive:
            if n.radio != RadioPower.ON:
                continue
            n.listen_remaining -= 1
            if n.listen_remaining > 0:
                continue
            self._decide(n, r, grace)
        return envelopes

    def _decide(self, n: NodeRecord, r: int, grace: int) -> None:
        heard = n.heard
        old = n.state
        new = old
        if old == S.SENSOR_ONLY or old == S.ROUTER_SENSOR:
            new = P.phase1_step(n, heard)
        if new == old and (old == S.SENSOR_ONLY or old == S.GATEWAY):
            new = P.phase2_step(n, heard, grace)
        n.lonely_windows = P.next_lonely_windows(n, heard) if new == S.GATEWAY else 0
        if new == old and n.orders:
            new = P.apply_orders(n, n.orders)
        if new == old and old == S.SLEEP:
            new = P.connectivity_watchdog(n, heard)
        if new == S.GATEWAY or old == S.GATEWAY:
            n.last_routers = frozenset(h.sender for h in heard if h.state == S.ROUTER_SENSOR)
        n.listen_remaining = 0
        n.heard = []
        n.orders = []
        if new != old:
            self._transition(n, old, new, r)

    def _transition(self, n: NodeRecord, old: EnergyState, new: EnergyState, r: int) -> None:
        if not P.is_legal_transition(old, new):
            raise AssertionError(f"illegal transition {old.name}->{new.name} at node {n.id}")
        n.state = new
        n.time_in_state = -1  # incremented to 0 at the end of the round
        if old == S.ROUTER_SENSOR or new == S.ROUTER_SENSOR:
            n.neighbor_table = {}
            n.last_el_of_sleepers = {}
        if new != S.GATEWAY:
            n.last_routers = frozenset()
            n.lonely_windows = 0
        if old == S.SLEEP:
            n.el = n.energy
        if self.on_transition is not None:
            self.on_transition(r, n.id, old, new)

    def _consume(self, alive: list[NodeRecord], r: int) -> None:
        costs = self._costs
        jitter = self.config.energy_jitter
        rng = self.rngs["jitter"]
        pre = self._pre_round if self._sand else [(n, n.state, n.radio) for n in alive]
        for n, state, radio in pre:
            cost = costs[state][radio]
            if jitter:
                cost = max(1, round(cost * float(rng.uniform(0.95, 1.05))))
            n.energy = max(0, n.energy - cost)
            if n.energy == 0:
                old = n.state
                n.state = S.DEAD
                n.radio = RadioPower.OFF
                n.el = 0
                _reset_window(n)
                n.neighbor_table = {}
                n.last_el_of_sleepers = {}
                if self.on_transition is not None:
                    self.on_transition(r, n.id, old, S.DEAD)
            elif n.state != S.SLEEP:
                n.el = n.energy
        self._pre_round = []

    # -- measurement --------------------------------------------------------

    def _measure(self, r: int) -> RoundMetrics:
        m = RoundMetrics(round=r, sink_count=len(self._sinks))
        energy = 0
        alive = 0
        for n in self._sensors:
            st = n.state
            if st == S.DEAD:
                if n.crashed:
                    m.crashed_count += 1
                else:
                    m.dead_count += 1
                continue
            alive += 1
            energy += n.energy
            if st == S.ROUTER_SENSOR:
                m.router_count += 1
            elif st == S.GATEWAY:
                m.gateway_count += 1
            elif st == S.SENSOR_ONLY:
                m.sensor_only_count += 1
            else:
                m.sleep_count += 1
        if alive:
            m.mean_remaining_energy_alive = energy / alive
        dist = None
        lengths = []
        dep = self.deployment
        k = self.config.reliability_k
        while self._stim_pos < len(self.stimuli) and self.stimuli[self._stim_pos].round == r:
            stim = self.stimuli[self._stim_pos]
            self._stim_pos += 1
            sensed, count = sense_stimulus(dep, stim, k)
            source = nearest_source(dep, stim)
            hops = None
            if source is not None:
                if dist is None:
                    dist = sink_distances(dep)
                hops = source_hops(dep, source, dist)
            connected = hops is not None
            m.stimuli_total_this_round += 1
            m.stimuli_sensed += sensed
            m.paths_checked += 1
            if connected:
                m.paths_ok += 1
                lengths.append(hops)
            self.outcomes.append(
                StimulusOutcome(r, stim.position[0], stim.position[1], count, sensed, source, connected, hops)
            )
        m.path_lengths = tuple(lengths)
        return m


def run_round(sim: Simulation) -> tuple[Deployment, list[Envelope], RoundMetrics]:
    envelopes, metrics = sim.step()
    return sim.deployment, envelopes, metrics


def simulate(config: SimConfig, rounds: int | None = None) -> Simulation:
    sim = Simulation(config)
    sim.run(rounds)
    return sim
