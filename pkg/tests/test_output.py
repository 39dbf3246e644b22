import json

import networkx as nx
import pytest

from sandsim import cli
from sandsim.config import Mode, SimConfig
from sandsim.experiments import FIG2_RANGE, PRESETS
from sandsim.output import (
    export_snapshot,
    metrics_csv,
    parse_snapshot,
    read_metrics_csv,
    read_stimuli_csv,
    stimuli_csv,
)
from sandsim.sim import Simulation, build_deployment

SMALL = SimConfig(area_side=150, node_count=120, tx_range=30, rounds=30, stimuli_count=40, seed=1)


def test_metrics_and_stimuli_round_trip(tmp_path):
    sim = Simulation(SMALL)
    sim.run()
    (tmp_path / "m.csv").write_text(metrics_csv(sim.metrics))
    (tmp_path / "s.csv").write_text(stimuli_csv(sim.outcomes))
    assert read_metrics_csv(tmp_path / "m.csv") == sim.metrics
    assert read_stimuli_csv(tmp_path / "s.csv") == sim.outcomes
    header = (tmp_path / "s.csv").read_text().splitlines()[0]
    assert header == "round,x,y,sensing_count,sensed,source_id,connected,hops"


def test_empty_snapshot_is_header_only():
    cfg = SimConfig(node_count=2, sink_fraction=0.5)
    dep = build_deployment(cfg, [])
    assert export_snapshot(dep, 0) == "# sandsim snapshot round=0 vertices=0 edges=0\n"


def test_baseline_snapshot_has_every_edge():
    sim = Simulation(SMALL.with_(mode=Mode.WITHOUT_SAND))
    sim.run(3)
    vertices, edges = parse_snapshot(export_snapshot(sim.deployment, 3))
    assert {v[2] for i, v in vertices.items() if i not in sim.deployment.sinks} == {"ROUTER_SENSOR"}
    expected = {(u, v) for u in range(SMALL.node_count) for v in sim.deployment.neighbors[u] if u < v}
    assert set(edges) == expected


def test_fig2_snapshot_backbone():
    cfg = PRESETS["fig2"].base.with_(rounds=50)
    sim = Simulation(cfg)
    sim.run()
    text = export_snapshot(sim.deployment, 50)
    assert text.startswith("# sandsim snapshot round=50 vertices=500 ")
    vertices, edges = parse_snapshot(text)
    states = [v[2] for v in vertices.values()]
    for s in ("ROUTER_SENSOR", "GATEWAY", "SINK"):
        assert s in states
    g = nx.Graph(edges)
    largest = max(nx.connected_components(g), key=len)
    assert len(largest) >= 0.9 * g.number_of_nodes()
    assert abs(cfg.tx_range - FIG2_RANGE) < 1e-12


def test_snapshot_rejects_garbage():
    with pytest.raises(ValueError):
        parse_snapshot("node 1 2 3\n")


# -- cli -------------------------------------------------------------------------


def tiny(tmp_path):
    path = tmp_path / "tiny.txt"
    path.write_text("rounds = 12\nstimuli_count = 30\n")
    return path


def run_cli(args, capsys):
    code = cli.main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_list_presets(capsys):
    code, out, _ = run_cli(["list-presets"], capsys)
    assert code == 0
    for name in PRESETS:
        assert name in out


def test_run_replay_and_snapshot(tmp_path, capsys):
    out = tmp_path / "fig2"
    code, _, _ = run_cli(["run", "fig2", "--seeds", 2, "--out", out, "--config", tiny(tmp_path)], capsys)
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seeds"] == [0, 1] and len(manifest["runs"]) == 2
    run_dir = out / manifest["runs"][0]["directory"]
    for name in ("config.txt", "metrics.csv", "stimuli.csv", "snapshot_r3.txt"):
        assert (run_dir / name).exists()
    assert "seeds" in (out / "summary.csv").read_text().splitlines()[0]
    before = {p.relative_to(out): p.read_bytes() for p in out.rglob("*") if p.is_file()}

    code, _, _ = run_cli(["replay", out / "manifest.json", "--out", tmp_path / "again"], capsys)
    assert code == 0
    again = {p.relative_to(tmp_path / "again"): p.read_bytes() for p in (tmp_path / "again").rglob("*") if p.is_file()}
    assert again == before

    code, printed, _ = run_cli(["snapshot", run_dir, "--round", 3, "--out", tmp_path / "s.txt"], capsys)
    assert code == 0
    assert (tmp_path / "s.txt").read_bytes() == (run_dir / "snapshot_r3.txt").read_bytes()


@pytest.mark.parametrize(
    "args, kind",
    [
        (["run", "nope"], "unknown_preset"),
        (["replay", "/nonexistent/manifest.json"], "not_found"),
        (["run", "fig2", "--config", "/nonexistent.txt"], "not_found"),
    ],
)
def test_cli_errors_are_json(args, kind, capsys):
    code, _, err = run_cli(args, capsys)
    assert code != 0
    assert json.loads(err.strip().splitlines()[-1])["error"] == kind


def test_bad_config_and_round(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("colour = blue\n")
    code, _, err = run_cli(["run", "fig2", "--config", bad], capsys)
    assert code != 0 and json.loads(err)["error"] == "config"
    out = tmp_path / "f"
    run_cli(["run", "fig2", "--seeds", 1, "--out", out, "--config", tiny(tmp_path)], capsys)
    run_dir = next(out.glob("runs/*/*/seed0"))
    code, _, err = run_cli(["snapshot", run_dir, "--round", 99], capsys)
    assert code != 0 and json.loads(err)["error"] == "invalid"


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run_cli(["run", "fig2", "--seeds", 1, "--out", blocker / "sub", "--config", tiny(tmp_path)], capsys)
    assert code != 0
    assert json.loads(err)["error"] in ("unwritable", "not_found")
