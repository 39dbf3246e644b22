"""File formats: per-round metrics CSV, per-stimulus CSV and topology snapshots.

Snapshot format, one record per line::

    # sandsim snapshot round=<R> vertices=<N> edges=<M>
    vertex <id> <x> <y> <STATE> <energy>
    edge <u> <v>

``STATE`` is one of SLEEP, SENSOR_ONLY, ROUTER_SENSOR, GATEWAY, DEAD or SINK.
Edges are the backbone: alive forwarders (routers, gateways, sinks) that are
in radio range of each other, listed once with ``u < v``.  Each ``vertex``
line maps to a node statement and each ``edge`` line to an undirected edge
in DOT or GraphML.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

from .sim import Deployment, RoundMetrics, StimulusOutcome, is_forwarder

METRICS_HEADER = (
    "round",
    "router_count",
    "gateway_count",
    "sensor_only_count",
    "sleep_count",
    "dead_count",
    "crashed_count",
    "sink_count",
    "mean_remaining_energy_alive",
    "stimuli_sensed",
    "stimuli_total_this_round",
    "paths_ok",
    "paths_checked",
    "path_lengths",
)

STIMULI_HEADER = ("round", "x", "y", "sensing_count", "sensed", "source_id", "connected", "hops")


def _num(x: float | None) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def metrics_csv(metrics: Iterable[RoundMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for m in metrics:
        w.writerow(
            [
                m.round,
                m.router_count,
                m.gateway_count,
                m.sensor_only_count,
                m.sleep_count,
                m.dead_count,
                m.crashed_count,
                m.sink_count,
                _num(m.mean_remaining_energy_alive),
                m.stimuli_sensed,
                m.stimuli_total_this_round,
                m.paths_ok,
                m.paths_checked,
                " ".join(map(str, m.path_lengths)),
            ]
        )
    return buf.getvalue()


def read_metrics_csv(path: str | Path) -> list[RoundMetrics]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            energy = row["mean_remaining_energy_alive"]
            out.append(
                RoundMetrics(
                    round=int(row["round"]),
                    router_count=int(row["router_count"]),
                    gateway_count=int(row["gateway_count"]),
                    sensor_only_count=int(row["sensor_only_count"]),
                    sleep_count=int(row["sleep_count"]),
                    dead_count=int(row["dead_count"]),
                    crashed_count=int(row["crashed_count"]),
                    sink_count=int(row["sink_count"]),
                    mean_remaining_energy_alive=float(energy) if energy else math.nan,
                    stimuli_sensed=int(row["stimuli_sensed"]),
                    stimuli_total_this_round=int(row["stimuli_total_this_round"]),
                    paths_ok=int(row["paths_ok"]),
                    paths_checked=int(row["paths_checked"]),
                    path_lengths=tuple(int(x) for x in row["path_lengths"].split()),
                )
            )
    return out


def stimuli_csv(outcomes: Iterable[StimulusOutcome]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(STIMULI_HEADER)
    for o in outcomes:
        w.writerow(
            [
                o.round,
                _num(o.x),
                _num(o.y),
                o.sensing_count,
                int(o.sensed),
                "" if o.source_id is None else o.source_id,
                int(o.connected),
                "" if o.hops is None else o.hops,
            ]
        )
    return buf.getvalue()


def read_stimuli_csv(path: str | Path) -> list[StimulusOutcome]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                StimulusOutcome(
                    int(row["round"]),
                    float(row["x"]),
                    float(row["y"]),
                    int(row["sensing_count"]),
                    row["sensed"] == "1",
                    int(row["source_id"]) if row["source_id"] else None,
                    row["connected"] == "1",
                    int(row["hops"]) if row["hops"] else None,
                )
            )
    return out


def export_snapshot(deployment: Deployment, round_: int) -> str:
    nodes = deployment.nodes
    vertices = []
    for n in nodes:
        state = "SINK" if n.sink else n.state.name
        vertices.append(f"vertex {n.id} {n.position[0]!r} {n.position[1]!r} {state} {n.energy}")
    edges = []
    for n in nodes:
        if not (n.alive and is_forwarder(n)):
            continue
        for v in deployment.neighbors[n.id]:
            other = nodes[v]
            if n.id < v and other.alive and is_forwarder(other):
                edges.append(f"edge {n.id} {v}")
    header = f"# sandsim snapshot round={round_} vertices={len(vertices)} edges={len(edges)}"
    return "\n".join([header, *vertices, *edges]) + "\n"


def parse_snapshot(text: str) -> tuple[dict[int, tuple[float, float, str, int]], list[tuple[int, int]]]:
    vertices: dict[int, tuple[float, float, str, int]] = {}
    edges: list[tuple[int, int]] = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "vertex":
            vertices[int(parts[1])] = (float(parts[2]), float(parts[3]), parts[4], int(parts[5]))
        elif parts[0] == "edge":
            edges.append((int(parts[1]), int(parts[2])))
        else:
            raise ValueError(f"unknown snapshot record {parts[0]!r}")
    return vertices, edges


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def summary_csv(rows: Sequence[dict[str, object]], header: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(header), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _cell(row.get(k)) for k in header})
    return buf.getvalue()


def _cell(v: object) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return _num(v)
    return str(v)
