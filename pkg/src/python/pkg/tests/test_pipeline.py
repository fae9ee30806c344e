from dataclasses import replace

import numpy as np
import pytest

from objslam.assoc.tracker import Decision
from objslam.errors import ConfigError
from objslam.evaluation.metrics import trajectory_rmse
from objslam.evaluation.pipeline import (
    MAX_OBJECT_INFORMATION,
    MIN_OBJECT_INFORMATION,
    PipelineConfig,
    dead_reckon,
    object_information,
    run_pipeline,
)
from objslam.evaluation.report import build_report
from objslam.fit.alternating import fit_observation
from objslam.fit.observation import FitConfig
from objslam.fit.scale import recover_scale
from objslam.models.category import ground_contact_indices, shape_points
from objslam.sim import ScenarioConfig, generate, scenario_presets

EXACT_FIT = FitConfig(regularizer_weight=0.0, refine_seeds=2, min_visible=7)
QUIET = {
    "keypoint_sigma": 0.0,
    "dropout": 0.0,
    "odometry_sigma_rot": 0.0,
    "odometry_sigma_trans": 0.0,
}


@pytest.fixture(scope="module")
def small(model):
    return generate(ScenarioConfig(seed=0, num_poses=20, num_objects=4, path_length=1.5), model)


@pytest.fixture(scope="module")
def small_runs(small, model):
    ms = small.measurements()
    return {
        mode: run_pipeline(ms, model, PipelineConfig(mode=mode, fit=EXACT_FIT))
        for mode in ("odo", "batch", "inc")
    }


def _label_of(scenario, result):
    """global id -> ground-truth labels of the detections it received"""
    seen = {}
    for frame_ids, frame_labels in zip(result.ids, scenario.labels):
        for gid, label in zip(frame_ids, frame_labels):
            if gid >= 0:
                seen.setdefault(gid, set()).add(label)
    return seen


def _max_object_error(scenario, result):
    truth = {o.label: o.position for o in scenario.objects}
    labels = _label_of(scenario, result)
    return max(
        float(np.linalg.norm(pos - truth[next(iter(labels[gid]))]))
        for gid, pos in result.object_positions().items()
    )


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.mode == "batch"
        assert cfg.fit.min_visible == 7

    @pytest.mark.parametrize(
        "kwargs", [{"mode": "smooth"}, {"incremental_every": 0}, {"keypoint_sigma": 0.0}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            PipelineConfig(**kwargs)


def test_dead_reckoning_of_exact_odometry(small):
    poses = dead_reckon(small.robot_poses[0], small.odometry)
    assert len(poses) == small.num_frames
    for est, true in zip(poses, small.robot_poses):
        assert est.allclose(true, atol=1e-9)


class TestNoiseless:
    @pytest.mark.parametrize("mode", ["odo", "batch", "inc"])
    def test_association_matches_ground_truth(self, small, small_runs, mode):
        labels = _label_of(small, small_runs[mode])
        assert all(len(v) == 1 for v in labels.values())
        # one global id per true object
        assert len({next(iter(v)) for v in labels.values()}) == len(labels)

    @pytest.mark.parametrize("mode", ["odo", "batch", "inc"])
    def test_map_and_trajectory_are_exact(self, small, small_runs, mode):
        result = small_runs[mode]
        assert _max_object_error(small, result) < 1e-6
        assert trajectory_rmse(result.trajectory, small.robot_poses) < 1e-6

    def test_modes_share_the_association(self, small_runs):
        assert small_runs["batch"].ids == small_runs["inc"].ids == small_runs["odo"].ids

    def test_records_cover_associated_detections(self, small_runs):
        result = small_runs["batch"]
        associated = sum(gid >= 0 for frame in result.ids for gid in frame)
        assert len(result.records) == associated
        first = {}
        for rec in result.records:
            first.setdefault(rec.global_id, rec.decision)
        assert set(first.values()) == {Decision.NEW}

    def test_graph_solution(self, small_runs):
        batch = small_runs["batch"]
        assert batch.solution is not None
        assert batch.solution.error < 1e-9
        assert small_runs["odo"].solution is None
        assert set(batch.shapes) == set(batch.objects)

    def test_temporal_shape_keeps_the_exact_map(self, small, model, small_runs):
        cfg = PipelineConfig(mode="batch", fit=EXACT_FIT, temporal_shape=True)
        result = run_pipeline(small.measurements(), model, cfg)
        assert result.ids == small_runs["batch"].ids
        assert _max_object_error(small, result) < 1e-5
        for gid, shape in result.shapes.items():
            np.testing.assert_allclose(
                shape.coeffs, small_runs["batch"].shapes[gid].coeffs, atol=1e-5
            )


class TestObjectInformation:
    @pytest.fixture(scope="class")
    def detection(self, small, model):
        obs = next(o for frame in small.observations for o in frame if o.num_visible >= 8)
        est = fit_observation(obs, model, small.intrinsics, EXACT_FIT, small.height, small.pitch)
        return obs, est

    def test_bounded_symmetric_positive_definite(self, small, model, detection):
        info = object_information(*detection, model, small.intrinsics, PipelineConfig())
        np.testing.assert_array_equal(info, info.T)
        values = np.linalg.eigvalsh(info)
        assert values.min() >= MIN_OBJECT_INFORMATION * (1 - 1e-9)
        assert values.max() <= MAX_OBJECT_INFORMATION * (1 + 1e-9)

    def test_noisier_keypoints_carry_less_information(self, small, model, detection):
        sharp = object_information(*detection, model, small.intrinsics, PipelineConfig())
        cfg = PipelineConfig(keypoint_sigma=2.0)
        blurred = object_information(*detection, model, small.intrinsics, cfg)
        assert np.linalg.eigvalsh(sharp - blurred).min() >= -1e-6 * np.abs(sharp).max()
        assert np.trace(blurred) < np.trace(sharp)

    def test_fixed_object_weights_keep_the_exact_map(self, small, model, small_runs):
        cfg = PipelineConfig(mode="batch", fit=EXACT_FIT, fit_information=False)
        result = run_pipeline(small.measurements(), model, cfg)
        assert result.ids == small_runs["batch"].ids
        assert _max_object_error(small, result) < 1e-6


def test_front_end_fits_are_already_metric(small, model):
    contact = ground_contact_indices(model)
    obs = next(
        o for frame in small.observations for o in frame if o.visibility[contact].all()
    )
    est = fit_observation(obs, model, small.intrinsics, EXACT_FIT, small.height, small.pitch)
    points = est.pose.transform(shape_points(model, est.shape.coeffs))[contact]
    scale = recover_scale(
        obs.keypoints[contact],
        small.intrinsics,
        small.height,
        small.pitch,
        np.linalg.norm(points, axis=1),
    )
    assert scale == pytest.approx(1.0, abs=1e-5)


def test_incremental_matches_batch_with_noise(model):
    cfg = ScenarioConfig(
        seed=1,
        num_poses=20,
        num_objects=4,
        path_length=1.5,
        keypoint_sigma=1.0,
        odometry_sigma_rot=0.004,
        odometry_sigma_trans=0.01,
    )
    ms = generate(cfg, model).measurements()
    batch = run_pipeline(ms, model, PipelineConfig(mode="batch"))
    inc = run_pipeline(ms, model, PipelineConfig(mode="inc", incremental_every=5))
    assert inc.ids == batch.ids
    for a, b in zip(inc.trajectory, batch.trajectory):
        assert a.allclose(b, atol=1e-4)
    for gid in batch.objects:
        assert inc.objects[gid].allclose(batch.objects[gid], atol=1e-4)


def test_odometry_only_without_parallax_is_not_scored(model):
    cfg = replace(scenario_presets(noise=QUIET)["seq3"], num_poses=24)
    scenario = generate(cfg, model)
    result = run_pipeline(scenario.measurements(), model, PipelineConfig(mode="odo"))
    report = build_report(scenario, result, "seq3")
    assert report.localization is None
    assert report.drift is None
    assert report.notes


@pytest.mark.slow
@pytest.mark.parametrize("mode", ["odo", "batch", "inc"])
def test_noiseless_seq2_is_exact(model, mode):
    scenario = generate(scenario_presets(noise=QUIET)["seq2"], model)
    result = run_pipeline(scenario.measurements(), model, PipelineConfig(mode=mode, fit=EXACT_FIT))
    report = build_report(scenario, result, "seq2")
    assert report.localization.worst < 1e-6
    assert max(report.drift) < 1e-6
    assert report.trajectory_rmse < 1e-6


@pytest.mark.slow
def test_graph_beats_dead_reckoning_on_the_long_loop(model):
    scenario = generate(scenario_presets()["seq1"], model)
    ms = scenario.measurements()
    odo = run_pipeline(ms, model, PipelineConfig(mode="odo"))
    batch = run_pipeline(ms, model, PipelineConfig(mode="batch"))
    assert trajectory_rmse(batch.trajectory, scenario.robot_poses) <= trajectory_rmse(
        odo.trajectory, scenario.robot_poses
    )


# Acceptance on the presets --------------------------------------------------

ACCEPTANCE_SEEDS = range(20)

# median single-object error at 2 px over the fit acceptance run (m)
NOISE_FLOOR = 0.05


@pytest.fixture(scope="module")
def preset_reports(model):
    """(preset, seed) -> reports for odometry only, batch, and batch without closures"""
    cache = {}

    def reports(name, seed):
        if (name, seed) not in cache:
            scenario = generate(scenario_presets(seed)[name], model)
            ms = scenario.measurements()
            runs = {
                "odo": PipelineConfig(mode="odo"),
                "batch": PipelineConfig(mode="batch"),
                "no-olc": PipelineConfig(mode="batch", olc=False),
            }
            cache[(name, seed)] = {
                key: build_report(scenario, run_pipeline(ms, model, cfg), name)
                for key, cfg in runs.items()
            }
        return cache[(name, seed)]

    return reports


@pytest.mark.slow
@pytest.mark.parametrize("name", ["seq1", "seq2", "seq4"])
def test_object_slam_beats_dead_reckoning(preset_reports, name):
    odo, batch = [], []
    for seed in ACCEPTANCE_SEEDS:
        reports = preset_reports(name, seed)
        odo.append(reports["odo"].localization.avg)
        batch.append(reports["batch"].localization.avg)
    assert np.mean(batch) < np.mean(odo)


@pytest.mark.slow
@pytest.mark.parametrize("name", ["seq1", "seq2"])
def test_loop_closure_never_makes_the_map_worse(preset_reports, name):
    on_error, off_error, on_drift, off_drift = [], [], [], []
    for seed in ACCEPTANCE_SEEDS:
        reports = preset_reports(name, seed)
        on_error.append(reports["batch"].localization.avg)
        off_error.append(reports["no-olc"].localization.avg)
        on_drift.append(np.hypot(*reports["batch"].drift))
        off_drift.append(np.hypot(*reports["no-olc"].drift))
    assert np.mean(on_error) <= np.mean(off_error)
    assert np.mean(on_drift) <= np.mean(off_drift)


@pytest.mark.slow
def test_rotation_in_place_localizes_every_object(preset_reports):
    for seed in ACCEPTANCE_SEEDS:
        reports = preset_reports("seq3", seed)
        assert reports["batch"].localization.worst < 3 * NOISE_FLOOR, seed
        assert reports["odo"].localization is None
        assert reports["odo"].notes


@pytest.mark.slow
@pytest.mark.parametrize("seed", range(4))
def test_loop_closures_join_only_the_same_object(model, seed):
    scenario = generate(scenario_presets(seed)["seq1"], model)
    result = run_pipeline(scenario.measurements(), model, PipelineConfig(mode="odo"))
    started = {
        rec.global_id: scenario.labels[rec.frame][rec.detection]
        for rec in result.records
        if rec.decision == Decision.NEW
    }
    closures = [rec for rec in result.records if rec.decision == Decision.OLC]
    for rec in closures:
        assert scenario.labels[rec.frame][rec.detection] == started[rec.global_id], rec
