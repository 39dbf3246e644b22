"""Per-round energy accounting and lifetime estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

from .protocol import ConfigError, EnergyState, NodeRecord, RadioPower, TimingConstants

DEFAULT_INITIAL_ENERGY = 100_000


@dataclass(frozen=True)
class EnergyCostTable:
    """Cost in energy units per round for each (state, radio) pair."""

    sleep_off: int = 10
    sleep_on: int = 70
    sensor_only_off: int = 200
    sensor_only_on: int = 270
    router_sensor_on: int = 1040
    gateway_on: int = 1040

    def __post_init__(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) <= 0:
                raise ConfigError(f"energy cost {f.name} must be positive")

    def cost(self, state: EnergyState, radio: RadioPower) -> int:
        try:
            return self._lookup[(state, radio)]
        except KeyError:
            raise ConfigError(f"no energy cost for {state.name}/{radio.name}") from None

    @property
    def _lookup(self) -> dict[tuple[EnergyState, RadioPower], int]:
        S, R = EnergyState, RadioPower
        return {
            (S.SLEEP, R.OFF): self.sleep_off,
            (S.SLEEP, R.ON): self.sleep_on,
            (S.SENSOR_ONLY, R.OFF): self.sensor_only_off,
            (S.SENSOR_ONLY, R.ON): self.sensor_only_on,
            (S.ROUTER_SENSOR, R.ON): self.router_sensor_on,
            (S.GATEWAY, R.ON): self.gateway_on,
            # Always-on states never see their radio off while alive; charge
            # the on-cost if a caller asks anyway.
            (S.ROUTER_SENSOR, R.OFF): self.router_sensor_on,
            (S.GATEWAY, R.OFF): self.gateway_on,
        }

    def as_array(self) -> list[list[int]]:
        """Dense lookup ``table[state][radio]`` for the engine's hot loop."""
        table = [[0, 0] for _ in EnergyState]
        for (state, radio), c in self._lookup.items():
            table[state][radio] = c
        return table


def consume(node: NodeRecord, table: EnergyCostTable, factor: float = 1.0) -> int:
    """Remaining energy after one round in the node's current state and radio.

    ``factor`` scales the cost (used by the optional jitter).  The result is
    clamped at zero; the caller marks the node dead when it hits zero.
    """
    if not node.alive:
        return node.energy
    cost = table.cost(node.state, node.radio)
    if factor != 1.0:
        cost = max(1, round(cost * factor))
    return max(0, node.energy - cost)


def estimate_lifetime(node: NodeRecord, table: EnergyCostTable | None = None) -> int:
    """Estimated lifetime of a node, in energy units.

    This is the remaining energy.  ``table`` is accepted so a predictive
    estimate can be slotted in without touching callers.
    """
    if not node.alive:
        return 0
    return node.energy


def mean_cost_per_round(
    state: EnergyState, table: EnergyCostTable, timing: TimingConstants
) -> float:
    if state in (EnergyState.ROUTER_SENSOR, EnergyState.GATEWAY):
        return table.cost(state, RadioPower.ON)
    on = table.cost(state, RadioPower.ON)
    off = table.cost(state, RadioPower.OFF)
    return (timing.t_on * on + timing.t_off * off) / timing.period


def closed_form_death_round(
    state: EnergyState,
    table: EnergyCostTable,
    timing: TimingConstants,
    initial: int = DEFAULT_INITIAL_ENERGY,
) -> int:
    """Round (1-based) in which a node held permanently in ``state`` dies."""
    return math.ceil(initial / mean_cost_per_round(state, table, timing))
