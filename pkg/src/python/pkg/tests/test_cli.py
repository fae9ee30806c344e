import pandas as pd
import pytest

from objslam import cli
from objslam.errors import Diverged
from objslam.evaluation.report import read_report
from objslam.models.category import load_category_model
from objslam.models.retrieval import read_index
from objslam.sim.io import read_scenario

RUN_ARTIFACTS = ("report.txt", "estimate.csv", "associations.csv", "top_down.svg")


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    model, index = root / "chair.toml", root / "chair_index.csv"
    args = ["build-model", "--count", "80", "--model", str(model), "--index", str(index)]
    assert cli.main(args) == 0

    config = root / "small.toml"
    config.write_text("[sim]\nnum_poses = 12\nnum_objects = 3\npath_length = 1.5\n")
    scenes = root / "scenes"
    args = ["gen-scenario", "--config", str(config), "--model", str(model), "--out", str(scenes)]
    assert cli.main(args) == 0
    return {"root": root, "model": model, "index": index, "scenes": scenes}


def _run(workspace, out, *extra):
    scenario = workspace["scenes"] / "loop_seed0.toml"
    return cli.main(
        ["run", "--scenario", str(scenario), "--model", str(workspace["model"])]
        + list(extra)
        + ["--out", str(out)]
    )


class TestBuildModel:
    def test_model_and_index(self, workspace):
        m = load_category_model(workspace["model"])
        index = read_index(workspace["index"])
        assert len(index.instance_ids) == 80
        assert index.params.shape[1] == m.basis_size

    def test_missing_collection(self, tmp_path):
        args = ["build-model", "--collection", str(tmp_path / "absent.csv")]
        args += ["--model", str(tmp_path / "m.toml"), "--index", str(tmp_path / "i.csv")]
        assert cli.main(args) == cli.EXIT_BAD_INPUT


class TestGenScenario:
    def test_full_and_measurement_files(self, workspace):
        names = sorted(p.name for p in workspace["scenes"].iterdir())
        assert names == ["loop_seed0.measurements.toml", "loop_seed0.toml"]
        scenario = read_scenario(workspace["scenes"] / "loop_seed0.toml")
        assert scenario.num_frames == 12

    def test_bad_config(self, workspace, tmp_path):
        config = tmp_path / "bad.toml"
        config.write_text("[sim]\ntrajectory = 'spiral'\n")
        args = ["gen-scenario", "--config", str(config), "--model", str(workspace["model"])]
        assert cli.main(args + ["--out", str(tmp_path)]) == cli.EXIT_CONFIG


class TestRun:
    def test_artifacts_and_report(self, workspace, tmp_path):
        assert _run(workspace, tmp_path / "a", "--mode", "batch") == 0
        for name in RUN_ARTIFACTS + ("run.log",):
            assert (tmp_path / "a" / name).exists(), name
        machine = read_report(tmp_path / "a" / "report.txt")
        assert machine["report"]["mode"] == "batch"
        assert machine["config"]["pipeline"]["mode"] == "batch"
        assert machine["config"]["sim"]["num_poses"] == 12

    def test_reruns_are_byte_identical(self, workspace, tmp_path):
        assert _run(workspace, tmp_path / "a", "--mode", "inc", "--olc", "off") == 0
        assert _run(workspace, tmp_path / "b", "--mode", "inc", "--olc", "off") == 0
        for name in RUN_ARTIFACTS:
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_measurements_only(self, workspace, tmp_path):
        scenario = workspace["scenes"] / "loop_seed0.measurements.toml"
        args = ["run", "--scenario", str(scenario), "--model", str(workspace["model"])]
        assert cli.main(args + ["--out", str(tmp_path)]) == 0
        assert (tmp_path / "estimate.csv").exists()
        assert not (tmp_path / "report.txt").exists()

    def test_missing_scenario(self, workspace, tmp_path):
        args = ["run", "--scenario", str(tmp_path / "nowhere.toml")]
        args += ["--model", str(workspace["model"]), "--out", str(tmp_path / "out")]
        assert cli.main(args) == cli.EXIT_BAD_INPUT

    def test_malformed_scenario(self, workspace, tmp_path):
        scenario = tmp_path / "broken.toml"
        scenario.write_text("format = 'objslam-scenario'\nversion = [\n")
        args = ["run", "--scenario", str(scenario), "--model", str(workspace["model"])]
        assert cli.main(args + ["--out", str(tmp_path / "out")]) == cli.EXIT_BAD_INPUT

    def test_unknown_config_table(self, workspace, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text("[optimizer]\nsteps = 3\n")
        assert _run(workspace, tmp_path / "out", "--config", str(config)) == cli.EXIT_CONFIG

    def test_optimizer_failure(self, workspace, tmp_path, monkeypatch):
        def diverge(*args, **kwargs):
            raise Diverged("error became non-finite")

        monkeypatch.setattr(cli, "run_pipeline", diverge)
        assert _run(workspace, tmp_path / "out") == cli.EXIT_OPTIMIZER


class TestRetrieveAndEval:
    @pytest.fixture(scope="class")
    def run_dir(self, workspace):
        out = workspace["root"] / "run"
        assert _run(workspace, out, "--mode", "batch", "--olc", "on") == 0
        return out

    def test_retrieve(self, workspace, run_dir):
        args = ["retrieve", "--estimate", str(run_dir / "estimate.csv")]
        args += ["--index", str(workspace["index"]), "-k", "3", "--out", str(run_dir)]
        assert cli.main(args) == 0
        df = pd.read_csv(run_dir / "retrieval.csv")
        assert list(df.columns) == ["global_id", "rank", "instance_id", "distance"]
        for _, group in df.groupby("global_id"):
            assert group["rank"].tolist() == [1, 2, 3]
            assert group["distance"].is_monotonic_increasing

    def test_eval_matches_the_run_report(self, workspace, run_dir):
        scenario = workspace["scenes"] / "loop_seed0.toml"
        args = ["eval", "--scenario", str(scenario), "--run", str(run_dir)]
        assert cli.main(args + ["--mode", "batch", "--olc", "on"]) == 0
        evaluated = read_report(run_dir / "eval_report.txt")["report"]
        original = read_report(run_dir / "report.txt")["report"]
        for key in ("localization_best", "localization_worst", "drift_x", "trajectory_rmse"):
            assert evaluated[key] == pytest.approx(original[key], abs=1e-12)

    def test_eval_without_a_run(self, workspace, tmp_path):
        scenario = workspace["scenes"] / "loop_seed0.toml"
        args = ["eval", "--scenario", str(scenario), "--run", str(tmp_path)]
        assert cli.main(args) == cli.EXIT_BAD_INPUT


def test_subcommand_required():
    with pytest.raises(SystemExit):
        cli.main([])
