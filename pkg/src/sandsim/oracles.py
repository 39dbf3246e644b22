"""Graph checks and statistics computed over deployment snapshots and run logs."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .protocol import EnergyState
from .sim import Deployment, RoundMetrics, StimulusOutcome, is_forwarder

S = EnergyState


@dataclass(frozen=True)
class IdsReport:
    undominated: tuple[int, ...] = ()
    adjacent_routers: tuple[tuple[int, int], ...] = ()

    @property
    def ok(self) -> bool:
        return not self.undominated and not self.adjacent_routers


def check_independent_dominating(
    graph: Mapping[int, Iterable[int]],
    routers: Iterable[int],
    exempt: Callable[[int, int], bool] | None = None,
) -> IdsReport:
    """Dominance and independence of ``routers`` in an undirected graph.

    ``exempt(u, v)`` marks router pairs whose adjacency is not a violation
    (fixed infrastructure such as two neighboring sinks).
    """
    chosen = set(routers)
    missing = chosen - set(graph)
    if missing:
        raise ValueError(f"routers not in graph: {sorted(missing)}")
    undominated = []
    for v in sorted(graph):
        if v in chosen:
            continue
        if not any(u in chosen for u in graph[v]):
            undominated.append(v)
    pairs = []
    for u in sorted(chosen):
        for v in sorted(graph[u]):
            if u < v and v in chosen and not (exempt and exempt(u, v)):
                pairs.append((u, v))
    return IdsReport(tuple(undominated), tuple(pairs))


def awake_router_check(deployment: Deployment) -> IdsReport:
    """Router set (sinks included) against the awake communication graph."""
    graph = deployment.awake_graph()
    nodes = deployment.nodes
    routers = [
        i for i in graph if nodes[i].sink or nodes[i].state == S.ROUTER_SENSOR
    ]
    return check_independent_dominating(
        graph, routers, exempt=lambda u, v: nodes[u].sink and nodes[v].sink
    )


def backbone_graph(deployment: Deployment) -> dict[int, set[int]]:
    return deployment.neighbor_graph(lambda i: is_forwarder(deployment.nodes[i]))


@dataclass(frozen=True)
class PathResult:
    connected: bool
    hops: int | None = None


def verify_sink_path(deployment: Deployment, source: int) -> PathResult:
    """Shortest hop count from ``source`` to any sink through forwarders."""
    node = deployment.nodes[source]
    if node.sink:
        raise ValueError(f"node {source} is a sink, not a source")
    if not node.alive or node.state == S.SLEEP:
        raise ValueError(f"node {source} in state {node.state.name} cannot be a path source")
    nodes = deployment.nodes
    seen = {source: 0}
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in deployment.neighbors[u]:
            if v in seen:
                continue
            nv = nodes[v]
            if not nv.alive or not is_forwarder(nv):
                continue
            seen[v] = seen[u] + 1
            if nv.sink:
                return PathResult(True, seen[v])
            queue.append(v)
    return PathResult(False)


def summarize_path_lengths(samples: Sequence[int]) -> tuple[float, float] | None:
    """Population mean and standard deviation, or None for no samples."""
    if not samples:
        return None
    n = len(samples)
    mean = math.fsum(samples) / n
    var = math.fsum((x - mean) ** 2 for x in samples) / n
    return mean, math.sqrt(var)


def stimulus_success(o: StimulusOutcome) -> bool:
    """Detected by a source node and forwarded to a sink.

    This is routing success; the k-coverage requirement is tracked apart
    (``o.sensed``) so sparse deployments still produce hop statistics.
    """
    return o.source_id is not None and o.connected


def gated_path_lengths(
    outcomes: Sequence[StimulusOutcome], threshold: float = 0.9, window: int = 100
) -> list[int]:
    """Hop counts collected while the trailing routing success rate stays >= threshold.

    The rate at each stimulus covers the last ``window`` stimuli including
    itself (fewer at the start of a run).
    """
    recent: deque[bool] = deque(maxlen=window)
    hits = 0
    kept = []
    for o in outcomes:
        if len(recent) == window:
            hits -= recent[0]
        ok = stimulus_success(o)
        recent.append(ok)
        hits += ok
        if hits / len(recent) >= threshold and o.connected and o.hops is not None:
            kept.append(o.hops)
    return kept


def lifetime(
    outcomes: Sequence[StimulusOutcome],
    predicate: Callable[[StimulusOutcome], bool],
    rounds: int,
    threshold: float = 0.95,
    window: int = 100,
) -> int:
    """Round at which the trailing success rate drops below ``threshold``.

    The rate is judged on full windows of ``window`` stimuli.  The clock only
    starts once a window has reached the threshold, so the start-up period of
    the protocol is not mistaken for the end of the network.  A run that never
    comes up returns 0; one that never drops returns ``rounds``.
    """
    recent: deque[bool] = deque(maxlen=window)
    hits = 0
    up = False
    for o in outcomes:
        if len(recent) == window:
            hits -= recent[0]
        ok = bool(predicate(o))
        recent.append(ok)
        hits += ok
        if len(recent) < window:
            continue
        if hits >= threshold * window:
            up = True
        elif up:
            return o.round
    return rounds if up else 0


def sensing_lifetime(outcomes: Sequence[StimulusOutcome], rounds: int, threshold: float = 0.95) -> int:
    return lifetime(outcomes, lambda o: o.sensed, rounds, threshold)


def path_lifetime(outcomes: Sequence[StimulusOutcome], rounds: int, threshold: float = 0.95) -> int:
    return lifetime(outcomes, lambda o: o.connected, rounds, threshold)


@dataclass(frozen=True)
class PopulationFractions:
    active_over_total: float
    forwarding_over_total: float
    active_over_alive: float | None
    forwarding_over_alive: float | None


def population_fractions(m: RoundMetrics) -> PopulationFractions:
    """Active (awake) and forwarding shares among sensors; sinks are excluded."""
    total = m.total - m.sink_count
    alive = total - m.dead_count - m.crashed_count
    active = m.router_count + m.gateway_count + m.sensor_only_count
    forwarding = m.router_count + m.gateway_count
    return PopulationFractions(
        active / total if total else 0.0,
        forwarding / total if total else 0.0,
        active / alive if alive else None,
        forwarding / alive if alive else None,
    )


@dataclass
class RunSummary:
    sensing_lifetime: int
    path_lifetime: int
    tau: float | None
    sigma: float | None
    final: RoundMetrics | None
    path_samples: list[int] = field(default_factory=list)


def summarize_run(
    metrics: Sequence[RoundMetrics], outcomes: Sequence[StimulusOutcome], rounds: int
) -> RunSummary:
    samples = gated_path_lengths(outcomes)
    stats = summarize_path_lengths(samples)
    return RunSummary(
        sensing_lifetime(outcomes, rounds),
        path_lifetime(outcomes, rounds),
        stats[0] if stats else None,
        stats[1] if stats else None,
        metrics[-1] if metrics else None,
        samples,
    )
