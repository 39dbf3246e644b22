"""Scenario presets for the evaluation experiments and the sweep runner.

A run directory looks like::

    <out>/manifest.json
    <out>/summary.csv
    <out>/runs/<axis>=<value>/<mode>/seed<N>/{config.txt,metrics.csv,stimuli.csv,snapshot_r<R>.txt}

The manifest stores every run's fully resolved config text, so
:func:`replay` can rebuild each file byte for byte.
"""

from __future__ import annotations

import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from . import config as cfgmod
from .config import Mode, SimConfig
from .oracles import population_fractions, summarize_run
from .output import export_snapshot, metrics_csv, stimuli_csv, summary_csv, write_text
from .sim import Simulation

FIG2_RANGE = math.sqrt(20 * 300.0**2 / (500 * math.pi))  # ~20 neighbors on average
DENSITIES = (1000, 1900, 2800, 4700)
DEFAULT_SEEDS = 30


@dataclass(frozen=True)
class ExperimentPreset:
    name: str
    description: str
    base: SimConfig
    axis: str
    values: tuple[Any, ...]
    seeds: int = DEFAULT_SEEDS
    modes: tuple[Mode, ...] = (Mode.SAND, Mode.WITHOUT_SAND)
    # Axis values at which the baseline arm runs; None means all of them.
    baseline_values: tuple[Any, ...] | None = None
    snapshot_rounds: tuple[int, ...] = ()

    def points(self) -> list[tuple[Any, Mode]]:
        out = []
        for value in self.values:
            for mode in self.modes:
                if (
                    mode == Mode.WITHOUT_SAND
                    and self.baseline_values is not None
                    and value not in self.baseline_values
                ):
                    continue
                out.append((value, mode))
        return out

    def resolve(self, value: Any, mode: Mode, seed: int, base: SimConfig | None = None) -> SimConfig:
        cfg = base or self.base
        if self.axis == "mode":
            return cfg.with_(mode=Mode(value), seed=seed)
        return cfg.with_(**{self.axis: value}, mode=mode, seed=seed)


_BASE = SimConfig()
_FIG2 = SimConfig(area_side=300.0, node_count=500, tx_range=FIG2_RANGE, rounds=60)

PRESETS: dict[str, ExperimentPreset] = {
    p.name: p
    for p in (
        ExperimentPreset(
            "density",
            "lifetime, path length and fidelity over neighborhood density",
            _BASE,
            "node_count",
            DENSITIES,
        ),
        ExperimentPreset(
            "sinks",
            "sink connectivity at 1,900 nodes for 0.5%, 1% and 1.5% sinks",
            _BASE.with_(node_count=1900),
            "sink_fraction",
            (0.005, 0.01, 0.015),
            baseline_values=(0.01,),
        ),
        ExperimentPreset(
            "kdensity",
            "sensing fidelity at 1,900 nodes for required densities 2, 7 and 10",
            _BASE.with_(node_count=1900),
            "reliability_k",
            (2, 7, 10),
        ),
        ExperimentPreset(
            "fig2",
            "500 nodes on 300 m x 300 m, router selection and state distribution",
            _FIG2,
            "mode",
            (Mode.SAND.value,),
            modes=(Mode.SAND,),
            snapshot_rounds=(3, 50),
        ),
        ExperimentPreset(
            "energy40",
            "mean remaining energy after 40 rounds over density",
            _BASE.with_(rounds=40),
            "node_count",
            DENSITIES,
        ),
        ExperimentPreset(
            "population120",
            "active and forwarding node fractions after 120 rounds over density",
            _BASE.with_(rounds=120),
            "node_count",
            DENSITIES,
            modes=(Mode.SAND,),
        ),
    )
}


class PresetError(ValueError):
    pass


def get_preset(name: str) -> ExperimentPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise PresetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None


@dataclass
class RunSpec:
    directory: str
    config_text: str
    snapshot_rounds: tuple[int, ...] = ()
    axis: str = ""
    value: Any = None
    mode: str = ""
    seed: int = 0


@dataclass
class RunResult:
    spec: RunSpec
    sensing_lifetime: int
    path_lifetime: int
    tau: float | None
    sigma: float | None
    final: dict[str, Any] = field(default_factory=dict)


def _value_label(value: Any) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def plan(preset: ExperimentPreset, seeds: Sequence[int], base: SimConfig | None = None) -> list[RunSpec]:
    specs = []
    for value, mode in preset.points():
        for seed in seeds:
            cfg = preset.resolve(value, mode, seed, base)
            directory = f"runs/{preset.axis}={_value_label(value)}/{cfg.mode.value}/seed{seed}"
            specs.append(
                RunSpec(
                    directory,
                    cfgmod.to_text(cfg),
                    preset.snapshot_rounds,
                    preset.axis,
                    value,
                    cfg.mode.value,
                    seed,
                )
            )
    return specs


def execute(spec: RunSpec, out: Path) -> RunResult:
    """Run one simulation and write its files under ``out/spec.directory``."""
    cfg = cfgmod.parse_text(spec.config_text)
    run_dir = out / spec.directory
    sim = Simulation(cfg)
    for r in sorted(set(spec.snapshot_rounds)):
        sim.run(r)
        write_text(run_dir / f"snapshot_r{r}.txt", export_snapshot(sim.deployment, sim.round))
    sim.run()
    write_text(run_dir / "config.txt", spec.config_text)
    write_text(run_dir / "metrics.csv", metrics_csv(sim.metrics))
    write_text(run_dir / "stimuli.csv", stimuli_csv(sim.outcomes))
    s = summarize_run(sim.metrics, sim.outcomes, cfg.rounds)
    final: dict[str, Any] = {}
    if s.final is not None:
        fr = population_fractions(s.final)
        final = {
            "final_mean_energy": s.final.mean_remaining_energy_alive,
            "final_active_fraction_total": fr.active_over_total,
            "final_forwarding_fraction_total": fr.forwarding_over_total,
            "final_active_fraction_alive": fr.active_over_alive,
            "final_forwarding_fraction_alive": fr.forwarding_over_alive,
            "final_forwarding_count": s.final.router_count + s.final.gateway_count,
            "final_router_count": s.final.router_count,
            "final_gateway_count": s.final.gateway_count,
        }
    return RunResult(spec, s.sensing_lifetime, s.path_lifetime, s.tau, s.sigma, final)


SUMMARY_HEADER = (
    "axis",
    "value",
    "mode",
    "seeds",
    "sensing_lifetime",
    "path_lifetime",
    "tau",
    "sigma",
    "final_mean_energy",
    "final_active_fraction_total",
    "final_forwarding_fraction_total",
    "final_active_fraction_alive",
    "final_forwarding_fraction_alive",
    "final_forwarding_count",
    "final_router_count",
    "final_gateway_count",
)


def _mean(values: Sequence[float | None]) -> float | None:
    present = [v for v in values if v is not None and not math.isnan(v)]
    return statistics.fmean(present) if present else None


def aggregate(results: Sequence[RunResult]) -> list[dict[str, Any]]:
    groups: dict[tuple[str, str], list[RunResult]] = {}
    for res in results:
        key = (_value_label(res.spec.value), res.spec.mode)
        groups.setdefault(key, []).append(res)
    rows = []
    for (value, mode), group in groups.items():
        row: dict[str, Any] = {
            "axis": group[0].spec.axis,
            "value": value,
            "mode": mode,
            "seeds": len(group),
            "sensing_lifetime": _mean([r.sensing_lifetime for r in group]),
            "path_lifetime": _mean([r.path_lifetime for r in group]),
            "tau": _mean([r.tau for r in group]),
            "sigma": _mean([r.sigma for r in group]),
        }
        for key in SUMMARY_HEADER[8:]:
            row[key] = _mean([r.final.get(key) for r in group])
        rows.append(row)
    return rows


def _execute_all(specs: Sequence[RunSpec], out: Path, workers: int) -> list[RunResult]:
    if workers <= 1 or len(specs) <= 1:
        return [execute(s, out) for s in specs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(execute, specs, [out] * len(specs)))


def _write_outputs(name: str, specs: Sequence[RunSpec], results: Sequence[RunResult], out: Path) -> None:
    manifest = {
        "preset": name,
        "seeds": sorted({s.seed for s in specs}),
        "runs": [
            {
                "directory": s.directory,
                "axis": s.axis,
                "value": s.value,
                "mode": s.mode,
                "seed": s.seed,
                "snapshot_rounds": list(s.snapshot_rounds),
                "config": s.config_text,
            }
            for s in specs
        ],
    }
    write_text(out / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    write_text(out / "summary.csv", summary_csv(aggregate(results), SUMMARY_HEADER))


def run_preset(
    name: str,
    seeds: int | Sequence[int] | None = None,
    out: str | Path = "results",
    base: SimConfig | None = None,
    workers: int = 1,
) -> list[RunResult]:
    preset = get_preset(name)
    if seeds is None:
        seeds = preset.seeds
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    specs = plan(preset, seed_list, base)
    results = _execute_all(specs, out, workers)
    _write_outputs(name, specs, results, out)
    return results


def replay(manifest_path: str | Path, out: str | Path | None = None, workers: int = 1) -> list[RunResult]:
    manifest_path = Path(manifest_path)
    data = json.loads(manifest_path.read_text())
    out = Path(out) if out is not None else manifest_path.parent
    specs = [
        RunSpec(
            r["directory"],
            r["config"],
            tuple(r["snapshot_rounds"]),
            r["axis"],
            r["value"],
            r["mode"],
            r["seed"],
        )
        for r in data["runs"]
    ]
    results = _execute_all(specs, out, workers)
    _write_outputs(data["preset"], specs, results, out)
    return results


def snapshot_run(run_dir: str | Path, round_: int, out: str | Path | None = None) -> Path:
    """Re-simulate a finished run up to ``round_`` rounds and export the topology."""
    run_dir = Path(run_dir)
    cfg = cfgmod.load(run_dir / "config.txt")
    if not 0 <= round_ <= cfg.rounds:
        raise ValueError(f"round {round_} outside 0..{cfg.rounds}")
    sim = Simulation(cfg)
    sim.run(round_)
    target = Path(out) if out is not None else run_dir / f"snapshot_r{round_}.txt"
    write_text(target, export_snapshot(sim.deployment, sim.round))
    return target
