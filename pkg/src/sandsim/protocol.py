"""SAND node state machine as pure decision functions.

Nothing here mutates a :class:`NodeRecord`.  Each operation looks at a node
and the payloads it heard during a listen window and returns a decision
(a new :class:`EnergyState`, a radio setting, or a list of orders).  The
simulation engine owns the records and commits the decisions.
"""

from __future__ import annotations

import enum
import statistics
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence


class EnergyState(enum.IntEnum):
    SLEEP = 0
    SENSOR_ONLY = 1
    ROUTER_SENSOR = 2
    GATEWAY = 3
    DEAD = 4


class RadioPower(enum.IntEnum):
    OFF = 0
    ON = 1


class Ordering(enum.Enum):
    A_WINS = "a-wins"
    B_WINS = "b-wins"


class OrderKind(enum.IntEnum):
    SWITCH_TO_SLEEP = 0
    SWITCH_TO_SENSOR = 1


class ThresholdMode(str, enum.Enum):
    """How a router turns (mean, deviation) into a sleep threshold."""

    MEAN_MINUS_STD = "mean_minus_std"
    RAW_STD = "raw_std"


ALWAYS_ON = frozenset({EnergyState.ROUTER_SENSOR, EnergyState.GATEWAY})
SENSING = frozenset({EnergyState.SENSOR_ONLY, EnergyState.ROUTER_SENSOR, EnergyState.GATEWAY})

# Edges of the state transition diagram (Dead is reachable from anywhere).
LEGAL_TRANSITIONS = frozenset(
    {
        (EnergyState.SENSOR_ONLY, EnergyState.ROUTER_SENSOR),
        (EnergyState.ROUTER_SENSOR, EnergyState.SENSOR_ONLY),
        (EnergyState.SENSOR_ONLY, EnergyState.GATEWAY),
        (EnergyState.GATEWAY, EnergyState.SENSOR_ONLY),
        (EnergyState.SENSOR_ONLY, EnergyState.SLEEP),
        (EnergyState.SLEEP, EnergyState.SENSOR_ONLY),
    }
)


def is_legal_transition(old: EnergyState, new: EnergyState) -> bool:
    if old == new:
        return True
    if old == EnergyState.DEAD:
        return False
    if new == EnergyState.DEAD:
        return True
    return (old, new) in LEGAL_TRANSITIONS


class ConfigError(ValueError):
    """Raised for scenario or timing parameters that cannot be simulated."""


@dataclass(frozen=True)
class TimingConstants:
    """Protocol timers, all in rounds except ``delta_small``.

    ``delta_small`` is the one-hop transmission bound expressed as a fraction
    of a round.  Messages are delivered inside the round they are sent in.
    """

    delta_big: int = 1
    delta_small: float = 0.25
    t_on: int = 1
    t_off: int = 2
    gateway_grace: int = 1

    def __post_init__(self) -> None:
        if self.delta_big < 1 or self.t_on < 1 or self.t_off < 0:
            raise ConfigError("delta_big and t_on must be >= 1, t_off >= 0")
        if not 0 <= self.delta_small < 0.5 * self.delta_big:
            raise ConfigError("need delta_big > 2 * delta_small")
        # A listen window has to span at least one Hello period, otherwise a
        # periodic emitter can be missed entirely.
        if self.t_on < self.delta_big:
            raise ConfigError("need t_on >= delta_big")
        if self.gateway_grace not in (self.t_on, 2 * self.t_on):
            raise ConfigError("gateway_grace must be t_on or 2 * t_on")

    @property
    def period(self) -> int:
        return self.t_on + self.t_off


@dataclass(frozen=True, slots=True)
class StateTimestamp:
    time_in_state: int
    node: int

    def beats(self, other: StateTimestamp) -> bool:
        """True when this timestamp wins an election against ``other``."""
        if self.time_in_state != other.time_in_state:
            return self.time_in_state > other.time_in_state
        return self.node < other.node


def compare_ts(a: StateTimestamp, b: StateTimestamp) -> Ordering:
    """Total order on timestamps of distinct nodes.

    Longer incumbency wins; equal incumbency goes to the smaller id.
    """
    if a.node == b.node:
        raise ValueError(f"cannot compare timestamps of the same node {a.node}")
    return Ordering.A_WINS if a.beats(b) else Ordering.B_WINS


@dataclass(frozen=True, slots=True)
class HelloPayload:
    sender: int
    state: EnergyState
    ts: StateTimestamp
    el: int
    connected_routers: frozenset[int] = frozenset()
    # Sinks announce themselves as routers; the flag keeps them out of the
    # sensing count.
    sink: bool = False

    def __post_init__(self) -> None:
        if self.connected_routers and self.state != EnergyState.GATEWAY:
            raise ValueError("only gateways announce connected routers")
        if self.el < 0:
            raise ValueError("el must be non-negative")

    def encode(self) -> bytes:
        routers = sorted(self.connected_routers)
        head = struct.pack(
            "<IBIIqI",
            self.sender,
            int(self.state),
            self.ts.time_in_state,
            self.ts.node,
            self.el,
            len(routers),
        )
        return head + struct.pack(f"<{len(routers)}I", *routers) + struct.pack("<B", self.sink)


@dataclass(frozen=True, slots=True)
class OrderPayload:
    sender: int
    kind: OrderKind
    target: int
    # Issuing router's mean el; a sleeper only wakes if its own el is higher.
    average: float = 0.0

    def encode(self) -> bytes:
        return struct.pack("<IBId", self.sender, int(self.kind), self.target, self.average)


@dataclass(slots=True)
class NodeRecord:
    """Mutable per-node protocol state, owned by the engine."""

    id: int
    position: tuple[float, float]
    state: EnergyState = EnergyState.SENSOR_ONLY
    radio: RadioPower = RadioPower.ON
    time_in_state: int = 0
    el: int = 0
    energy: int = 0
    wake_phase: int = 0
    listen_remaining: int = 0
    heard: list[HelloPayload] = field(default_factory=list)
    orders: list[OrderPayload] = field(default_factory=list)
    # RouterSensor bookkeeping: el of the neighbors this node put to sleep,
    # and the latest Hello (with its round) from every neighbor.
    last_el_of_sleepers: dict[int, int] = field(default_factory=dict)
    neighbor_table: dict[int, tuple[int, HelloPayload]] = field(default_factory=dict)
    lonely_windows: int = 0
    last_routers: frozenset[int] = frozenset()
    crashed: bool = False
    sink: bool = False

    @property
    def ts(self) -> StateTimestamp:
        return StateTimestamp(self.time_in_state, self.id)

    @property
    def alive(self) -> bool:
        return self.state != EnergyState.DEAD


def _routers(heard: Iterable[HelloPayload]) -> dict[int, HelloPayload]:
    return {h.sender: h for h in heard if h.state == EnergyState.ROUTER_SENSOR}


def phase1_step(node: NodeRecord, heard: Sequence[HelloPayload]) -> EnergyState:
    """Router election.

    A sensor-only node that heard no router promotes itself; a router that
    heard a router beating its timestamp steps back to sensor-only.
    """
    routers = _routers(heard)
    if node.state == EnergyState.SENSOR_ONLY:
        return EnergyState.ROUTER_SENSOR if not routers else node.state
    if node.state == EnergyState.ROUTER_SENSOR:
        mine = node.ts
        for r in routers.values():
            if r.sender != node.id and r.ts.beats(mine):
                return EnergyState.SENSOR_ONLY
    return node.state


def phase2_step(
    node: NodeRecord, heard: Sequence[HelloPayload], gateway_grace: int = 1
) -> EnergyState:
    """Gateway election between routers two hops apart.

    ``node.lonely_windows`` counts the windows *before* this one in which a
    gateway saw fewer than two routers.
    """
    if node.state not in (EnergyState.SENSOR_ONLY, EnergyState.GATEWAY):
        return node.state
    routers = set(_routers(heard))
    if len(routers) < 2:
        if node.state == EnergyState.GATEWAY and node.lonely_windows + 1 >= gateway_grace:
            return EnergyState.SENSOR_ONLY
        return node.state
    mine = node.ts
    suppressed = any(
        h.state == EnergyState.GATEWAY
        and h.sender != node.id
        and h.ts.beats(mine)
        and routers <= h.connected_routers
        for h in heard
    )
    if suppressed:
        return EnergyState.SENSOR_ONLY
    return EnergyState.GATEWAY


def next_lonely_windows(node: NodeRecord, heard: Sequence[HelloPayload]) -> int:
    if node.state != EnergyState.GATEWAY or len(_routers(heard)) >= 2:
        return 0
    return node.lonely_windows + 1


def emit_hellos(node: NodeRecord, round_: int, timing: TimingConstants) -> list[HelloPayload]:
    if not node.alive or node.radio == RadioPower.OFF or node.state == EnergyState.SLEEP:
        return []
    if round_ % timing.delta_big:
        return []
    routers: frozenset[int] = frozenset()
    if node.state == EnergyState.GATEWAY:
        routers = node.last_routers
    return [HelloPayload(node.id, node.state, node.ts, node.el, routers, node.sink)]


@dataclass(frozen=True)
class DensityView:
    """What a router knows about its radio disk when it issues orders."""

    mean: float
    std: float
    threshold: float
    awake: int


def density_view(
    router: NodeRecord,
    neighbor_hellos: Sequence[HelloPayload],
    mode: ThresholdMode = ThresholdMode.MEAN_MINUS_STD,
) -> DensityView | None:
    sensor_els = [h.el for h in neighbor_hellos if h.state == EnergyState.SENSOR_ONLY]
    pool = sensor_els + list(router.last_el_of_sleepers.values())
    # k is a sensor-only resolution: the router and gateways come on top.
    awake = len(sensor_els)
    if not pool:
        return None
    mean = statistics.fmean(pool)
    below = [el for el in sensor_els if el < mean]
    std = statistics.pstdev(below) if below else 0.0
    threshold = mean - std if mode == ThresholdMode.MEAN_MINUS_STD else std
    return DensityView(mean, std, threshold, awake)


def density_control_step(
    router: NodeRecord,
    neighbor_hellos: Sequence[HelloPayload],
    k: int,
    listening: Iterable[int] | None = None,
    mode: ThresholdMode = ThresholdMode.MEAN_MINUS_STD,
) -> list[OrderPayload]:
    """Sleep/wake orders that keep ``k`` awake sensing nodes in the router's disk.

    ``neighbor_hellos`` is the latest Hello of every neighbor the router
    currently knows about.  Sleep orders only go to nodes in ``listening``
    (sensors whose Hello arrived this round, so their radio is on); when it
    is None every known sensor-only neighbor is a candidate.
    """
    if router.state != EnergyState.ROUTER_SENSOR:
        return []
    if k < 1:
        raise ConfigError("reliability degree k must be >= 1")
    view = density_view(router, neighbor_hellos, mode)
    if view is None:
        return []
    orders: list[OrderPayload] = []
    sensors = [h for h in neighbor_hellos if h.state == EnergyState.SENSOR_ONLY]
    if view.awake < k:
        # Broadcast to the best recorded sleepers; only those listening get it.
        wanted = k - view.awake
        candidates = sorted(
            ((el, nid) for nid, el in router.last_el_of_sleepers.items() if el > view.mean),
            key=lambda p: (-p[0], p[1]),
        )
        for _, nid in candidates[:wanted]:
            orders.append(OrderPayload(router.id, OrderKind.SWITCH_TO_SENSOR, nid, view.mean))
        return orders
    if not sensors:
        return orders
    allowed = set(listening) if listening is not None else None
    victims = sorted(
        (h for h in sensors if h.el < view.threshold and (allowed is None or h.sender in allowed)),
        key=lambda h: (h.el, h.sender),
    )
    budget = min(view.awake - k, len(sensors) - 1)
    for h in victims[: max(budget, 0)]:
        orders.append(OrderPayload(router.id, OrderKind.SWITCH_TO_SLEEP, h.sender, view.mean))
    return orders


def apply_orders(node: NodeRecord, orders: Sequence[OrderPayload]) -> EnergyState:
    mine = [o for o in orders if o.target == node.id]
    if not mine or node.state not in (EnergyState.SLEEP, EnergyState.SENSOR_ONLY):
        return node.state
    wake = [o for o in mine if o.kind == OrderKind.SWITCH_TO_SENSOR]
    if wake:
        if node.state == EnergyState.SLEEP and any(node.el > o.average for o in wake):
            return EnergyState.SENSOR_ONLY
        # A wake order still overrides any sleep order in the same window.
        return node.state
    if node.state == EnergyState.SENSOR_ONLY:
        return EnergyState.SLEEP
    return node.state


def connectivity_watchdog(node: NodeRecord, heard: Sequence[HelloPayload]) -> EnergyState:
    if node.state != EnergyState.SLEEP or node.radio == RadioPower.OFF:
        return node.state
    if any(h.state == EnergyState.ROUTER_SENSOR for h in heard):
        return node.state
    return EnergyState.SENSOR_ONLY


def scheduled_radio(node: NodeRecord, round_: int, timing: TimingConstants) -> RadioPower:
    if (round_ + node.wake_phase) % timing.period < timing.t_on:
        return RadioPower.ON
    return RadioPower.OFF


def duty_cycle_tick(
    node: NodeRecord, round_: int, timing: TimingConstants, flush: bool = False
) -> RadioPower:
    """Radio setting for this round.

    The first ``t_on`` rounds are a bootstrap listen window for everyone.
    ``flush`` forces a sensor-only radio on to push local data.
    """
    if not node.alive:
        return RadioPower.OFF
    if node.state in ALWAYS_ON or node.sink:
        return RadioPower.ON
    if round_ < timing.t_on:
        return RadioPower.ON
    if flush and node.state == EnergyState.SENSOR_ONLY:
        return RadioPower.ON
    return scheduled_radio(node, round_, timing)
