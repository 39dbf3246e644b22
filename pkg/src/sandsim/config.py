"""Scenario configuration and its flat ``key = value`` file format.

Nested groups are flattened with a dot: ``timing.t_on = 1``,
``cost_table.sleep_on = 70``.  The failure schedule is written inline as
``round:node:action`` entries separated by ``;``, or as ``@path.csv`` to
load a ``round,node_id,action`` CSV relative to the config file.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .energy import DEFAULT_INITIAL_ENERGY, EnergyCostTable
from .protocol import ConfigError, ThresholdMode, TimingConstants


class Mode(str, enum.Enum):
    SAND = "SAND"
    WITHOUT_SAND = "WithoutSAND"


class FailureAction(str, enum.Enum):
    CRASH = "crash"
    RECOVER = "recover"


@dataclass(frozen=True, order=True)
class FailureEvent:
    round: int
    node: int
    action: FailureAction


@dataclass(frozen=True)
class SimConfig:
    area_side: float = 700.0
    node_count: int = 4700
    tx_range: float = 37.0
    sink_fraction: float = 0.01
    rounds: int = 800
    timing: TimingConstants = field(default_factory=TimingConstants)
    reliability_k: int = 5
    stimuli_count: int = 1000
    seed: int = 0
    failure_schedule: tuple[FailureEvent, ...] = ()
    mode: Mode = Mode.SAND
    cost_table: EnergyCostTable = field(default_factory=EnergyCostTable)
    initial_energy: int = DEFAULT_INITIAL_ENERGY
    threshold_mode: ThresholdMode = ThresholdMode.MEAN_MINUS_STD
    drop_probability: float = 0.0
    energy_jitter: bool = False
    flush_probability: float = 0.0

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ConfigError("node_count must be >= 1")
        if self.tx_range <= 0 or self.area_side <= 0:
            raise ConfigError("tx_range and area_side must be positive")
        if self.rounds < 0 or self.stimuli_count < 0:
            raise ConfigError("rounds and stimuli_count must be non-negative")
        if self.reliability_k < 1:
            raise ConfigError("reliability_k must be >= 1")
        if not 0.0 <= self.drop_probability <= 1.0 or not 0.0 <= self.flush_probability <= 1.0:
            raise ConfigError("probabilities must lie in [0, 1]")
        sinks = self.sink_count
        if sinks < 1:
            raise ConfigError(f"sink_fraction {self.sink_fraction} yields no sink")
        if sinks >= self.node_count:
            raise ConfigError("deployment needs at least one sensor besides the sinks")
        validate_schedule(self.failure_schedule, self.node_count)

    @property
    def sink_count(self) -> int:
        return int(math.floor(self.sink_fraction * self.node_count + 0.5))

    def with_(self, **changes: Any) -> SimConfig:
        return replace(self, **changes)


def validate_schedule(schedule: tuple[FailureEvent, ...], node_count: int) -> None:
    """Reject schedules that recover live nodes or crash crashed ones.

    Energy exhaustion is not known in advance, so crashing a node that has
    already run dry is tolerated by the engine as a no-op.
    """
    crashed: set[int] = set()
    last = -1
    for ev in schedule:
        if ev.round < last:
            raise ConfigError("failure schedule must be sorted by round")
        last = ev.round
        if not 0 <= ev.node < node_count:
            raise ConfigError(f"failure schedule names unknown node {ev.node}")
        if ev.action == FailureAction.CRASH:
            if ev.node in crashed:
                raise ConfigError(f"node {ev.node} crashed twice at round {ev.round}")
            crashed.add(ev.node)
        else:
            if ev.node not in crashed:
                raise ConfigError(f"node {ev.node} recovers at round {ev.round} without a crash")
            crashed.discard(ev.node)


def read_failure_csv(path: str | Path) -> tuple[FailureEvent, ...]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.DictReader(fh)]
    return tuple(
        FailureEvent(int(r["round"]), int(r["node_id"]), FailureAction(r["action"].strip()))
        for r in rows
    )


def write_failure_csv(schedule: tuple[FailureEvent, ...], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "node_id", "action"])
        for ev in schedule:
            w.writerow([ev.round, ev.node, ev.action.value])


def _format_schedule(schedule: tuple[FailureEvent, ...]) -> str:
    return ";".join(f"{e.round}:{e.node}:{e.action.value}" for e in schedule)


def _parse_schedule(text: str, base: Path | None) -> tuple[FailureEvent, ...]:
    text = text.strip()
    if not text:
        return ()
    if text.startswith("@"):
        path = Path(text[1:])
        if base is not None and not path.is_absolute():
            path = base / path
        return read_failure_csv(path)
    events = []
    for item in text.split(";"):
        r, n, a = item.strip().split(":")
        events.append(FailureEvent(int(r), int(n), FailureAction(a)))
    return tuple(events)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, enum.Enum):
        return str(value.value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _coerce(raw: str, template: Any) -> Any:
    if isinstance(template, bool):
        low = raw.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"not a boolean: {raw!r}")
        return low in ("true", "1", "yes")
    if isinstance(template, enum.Enum):
        return type(template)(raw)
    if isinstance(template, int):
        return int(raw)
    if isinstance(template, float):
        return float(raw)
    return raw


def to_text(config: SimConfig) -> str:
    lines = []
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "failure_schedule":
            lines.append(f"{f.name} = {_format_schedule(value)}")
        elif f.name in ("timing", "cost_table"):
            for key, sub in asdict(value).items():
                lines.append(f"{f.name}.{key} = {_format_value(sub)}")
        else:
            lines.append(f"{f.name} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def parse_text(text: str, base: SimConfig | None = None, path: Path | None = None) -> SimConfig:
    """Parse config text; keys not given keep their value from ``base``."""
    base = base or SimConfig()
    top: dict[str, Any] = {}
    timing = asdict(base.timing)
    costs = asdict(base.cost_table)
    names = {f.name for f in fields(SimConfig)}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        try:
            if key.startswith("timing."):
                sub = key.split(".", 1)[1]
                if sub not in timing:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                timing[sub] = _coerce(raw, timing[sub])
            elif key.startswith("cost_table."):
                sub = key.split(".", 1)[1]
                if sub not in costs:
                    raise ConfigError(f"line {lineno}: unknown key {key!r}")
                costs[sub] = _coerce(raw, costs[sub])
            elif key == "failure_schedule":
                top[key] = _parse_schedule(raw, path.parent if path else None)
            elif key in names and key not in ("timing", "cost_table"):
                top[key] = _coerce(raw, getattr(base, key))
            else:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {raw!r}") from exc
    return replace(
        base, timing=TimingConstants(**timing), cost_table=EnergyCostTable(**costs), **top
    )


def load(path: str | Path, base: SimConfig | None = None) -> SimConfig:
    path = Path(path)
    return parse_text(path.read_text(), base, path)


def save(config: SimConfig, path: str | Path) -> None:
    Path(path).write_text(to_text(config))
