import pytest
import toml

from objslam.config import RunConfig, config_to_dict, load_config, parse_config
from objslam.errors import ConfigError


def test_defaults():
    cfg = parse_config({})
    assert cfg == RunConfig()
    assert load_config(None) == RunConfig()


def test_tables_reach_their_dataclasses():
    cfg = parse_config(
        {
            "fit": {"regularizer_weight": 0.5, "kernel": "quadratic"},
            "assoc": {"loop_gate": 2.0},
            "graph": {"odometry_information": [4, 4, 4, 1, 1, 1]},
            "pipeline": {
                "mode": "inc",
                "olc": False,
                "incremental_every": 3,
                "fit_information": False,
                "keypoint_sigma": 2.0,
            },
            "sim": {"trajectory": "l-turn", "num_poses": 10},
        }
    )
    assert cfg.pipeline.fit.regularizer_weight == 0.5
    assert cfg.pipeline.fit.kernel == "quadratic"
    assert cfg.pipeline.assoc.loop_gate == 2.0
    assert cfg.pipeline.graph.odometry_information == (4.0, 4.0, 4.0, 1.0, 1.0, 1.0)
    assert cfg.pipeline.mode == "inc"
    assert not cfg.pipeline.olc
    assert cfg.pipeline.incremental_every == 3
    assert not cfg.pipeline.fit_information
    assert cfg.pipeline.keypoint_sigma == 2.0
    assert cfg.sim.trajectory == "l-turn"
    assert cfg.sim.num_poses == 10


@pytest.mark.parametrize(
    "doc",
    [
        {"solver": {}},
        {"fit": {"learning_rate": 0.1}},
        {"pipeline": {"fit": {}}},
        {"pipeline": {"mode": "fast"}},
        {"fit": {"max_iterations": "many"}},
        {"graph": {"prior_information": [1, 1, 1]}},
        {"sim": {"dropout": 2.0}},
        {"pipeline": {"keypoint_sigma": 0.0}},
        {"assoc": {"loop_ratio": 2.0}},
        {"fit": 3},
    ],
)
def test_invalid(doc):
    with pytest.raises(ConfigError):
        parse_config(doc)


def test_written_config_reads_back(tmp_path):
    cfg = parse_config({"pipeline": {"mode": "odo"}, "sim": {"seed": 7, "keypoint_sigma": 1.5}})
    path = tmp_path / "run.toml"
    path.write_text(toml.dumps(config_to_dict(cfg)))
    assert load_config(path) == cfg


def test_default_regularizer_is_left_out():
    tables = config_to_dict(RunConfig())
    assert "regularizer_weight" not in tables["fit"]
    assert isinstance(tables["graph"]["object_information"], list)
    assert set(tables) == {"fit", "assoc", "graph", "pipeline", "sim"}


def test_bad_toml(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text("[fit\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_command_line_overrides():
    cfg = parse_config({"pipeline": {"mode": "inc", "olc": True}, "sim": {"seed": 1}})
    assert cfg.with_overrides() == cfg
    over = cfg.with_overrides(mode="odo", olc=False, seed=9)
    assert over.pipeline.mode == "odo"
    assert not over.pipeline.olc
    assert over.sim.seed == 9
    assert over.pipeline.fit == cfg.pipeline.fit
    with pytest.raises(ConfigError):
        cfg.with_overrides(mode="warp")
