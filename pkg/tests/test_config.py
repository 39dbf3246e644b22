import pytest

from sandsim import config as cfgmod
from sandsim.config import FailureAction, FailureEvent, Mode, SimConfig
from sandsim.experiments import PRESETS
from sandsim.protocol import ConfigError, ThresholdMode, TimingConstants


def test_defaults():
    c = SimConfig()
    assert (c.area_side, c.node_count, c.tx_range, c.rounds) == (700, 4700, 37, 800)
    assert (c.reliability_k, c.stimuli_count, c.sink_count) == (5, 1000, 47)
    assert c.timing == TimingConstants(1, 0.25, 1, 2, 1)
    assert c.initial_energy == 100_000


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(node_count=0),
        dict(node_count=1, sink_fraction=1.0),
        dict(node_count=10, sink_fraction=0.01),
        dict(tx_range=0),
        dict(reliability_k=0),
        dict(drop_probability=1.5),
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ConfigError):
        SimConfig(**kwargs)


def test_text_round_trip():
    c = SimConfig(
        node_count=321,
        tx_range=12.5,
        seed=99,
        mode=Mode.WITHOUT_SAND,
        threshold_mode=ThresholdMode.RAW_STD,
        energy_jitter=True,
        timing=TimingConstants(gateway_grace=2),
        failure_schedule=(
            FailureEvent(3, 7, FailureAction.CRASH),
            FailureEvent(9, 7, FailureAction.RECOVER),
        ),
    )
    assert cfgmod.parse_text(cfgmod.to_text(c)) == c


@pytest.mark.parametrize("name", sorted(PRESETS))
def test_every_preset_round_trips(name):
    p = PRESETS[name]
    for value, mode in p.points():
        c = p.resolve(value, mode, seed=4)
        assert cfgmod.parse_text(cfgmod.to_text(c)) == c


def test_partial_file_keeps_base(tmp_path):
    path = tmp_path / "c.txt"
    path.write_text("# comment\nnode_count = 200\ntiming.t_off = 4\n\ncost_table.sleep_off = 11\n")
    c = cfgmod.load(path, SimConfig(rounds=12))
    assert (c.node_count, c.rounds, c.timing.t_off, c.cost_table.sleep_off) == (200, 12, 4, 11)


@pytest.mark.parametrize(
    "text",
    ["bogus = 1", "timing.nope = 2", "cost_table.x = 3", "node_count = many", "no equals sign", "energy_jitter = maybe"],
)
def test_bad_lines(text):
    with pytest.raises(ConfigError):
        cfgmod.parse_text(text)


def test_failure_csv(tmp_path):
    sched = (FailureEvent(1, 2, FailureAction.CRASH), FailureEvent(5, 2, FailureAction.RECOVER))
    path = tmp_path / "f.csv"
    cfgmod.write_failure_csv(sched, path)
    assert path.read_text().splitlines()[0] == "round,node_id,action"
    assert cfgmod.read_failure_csv(path) == sched
    conf = tmp_path / "c.txt"
    conf.write_text("node_count = 200\nfailure_schedule = @f.csv\n")
    assert cfgmod.load(conf).failure_schedule == sched


@pytest.mark.parametrize(
    "sched",
    [
        (FailureEvent(1, 2, FailureAction.RECOVER),),
        (FailureEvent(1, 2, FailureAction.CRASH), FailureEvent(2, 2, FailureAction.CRASH)),
        (FailureEvent(5, 2, FailureAction.CRASH), FailureEvent(1, 3, FailureAction.CRASH)),
        (FailureEvent(1, 999, FailureAction.CRASH),),
    ],
)
def test_schedule_validation(sched):
    with pytest.raises(ConfigError):
        SimConfig(node_count=200, failure_schedule=sched)
