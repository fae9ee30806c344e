import math

import numpy as np
import pytest

from objslam.errors import (
    ConfigError,
    DimensionMismatch,
    GroundPlaneDegenerate,
    Underconstrained,
)
from objslam.fit.alternating import (
    fit_alternating,
    fit_multiframe,
    fit_observation,
    initial_hypotheses,
    initialize_estimate,
)
from objslam.fit.observation import FitConfig, KeypointObservation, ObjectEstimate
from objslam.fit.solver import (
    fit_pose,
    fit_shape,
    keypoint_residuals,
    regularizer_weight,
    reprojection_cost,
    robust_cost,
)
from objslam.geometry.lie import Pose3, relative_pose, rot_y, rot_z, so3_log, twist_exp
from objslam.models.category import ShapeParams
from objslam.sim.trajectory import camera_pose

from conftest import object_in_camera, render

HEIGHT = 1.0
PITCH = 0.3
EXACT = FitConfig(regularizer_weight=0.0, refine_seeds=2)


def _instance(model, seed):
    rng = np.random.default_rng(seed)
    shape = ShapeParams(rng.standard_normal(model.basis_size) * np.sqrt(model.eigenvalues))
    pose = object_in_camera(
        yaw=rng.uniform(0.0, 2.0 * math.pi),
        x=rng.uniform(-0.5, 0.5),
        depth=rng.uniform(2.2, 3.0),
        height=HEIGHT,
        pitch=PITCH,
    )
    return shape, pose


def _angle(a: Pose3, b: Pose3) -> float:
    return float(np.linalg.norm(so3_log(a.rotation.T @ b.rotation, strict=False)))


def _noisy(obs: KeypointObservation, sigma: float, seed: int) -> KeypointObservation:
    rng = np.random.default_rng(seed)
    return KeypointObservation(
        frame=obs.frame,
        keypoints=obs.keypoints + sigma * rng.standard_normal(obs.keypoints.shape),
        visibility=obs.visibility,
    )


class TestFitConfig:
    def test_defaults(self):
        cfg = FitConfig()
        assert cfg.azimuth_seeds == 8
        assert cfg.kernel == "huber"

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"regularizer_weight": -1.0},
            {"min_visible": 3},
            {"kernel": "cauchy"},
            {"huber_width": 0.0},
            {"azimuth_seeds": 0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            FitConfig(**kwargs)


class TestCost:
    def test_huber_kernel(self):
        cfg = FitConfig(huber_width=2.0)
        # |r|^2 = 1 is quadratic; |r|^2 = 9 gives 2 * 2 * 3 - 4
        np.testing.assert_allclose(robust_cost(np.array([[1.0, 0.0], [0.0, 3.0]]), cfg), [1.0, 8.0])

    def test_quadratic_kernel(self):
        cfg = FitConfig(kernel="quadratic")
        np.testing.assert_allclose(robust_cost(np.array([[3.0, 4.0]]), cfg), [25.0])

    def test_default_regularizer(self, model):
        assert regularizer_weight(FitConfig(), model) == pytest.approx(
            1.0 / np.mean(model.eigenvalues)
        )
        assert regularizer_weight(EXACT, model) == 0.0

    def test_zero_at_truth(self, model, intrinsics):
        shape, pose = _instance(model, 0)
        obs = render(model, shape, pose, intrinsics)
        assert reprojection_cost(obs, ObjectEstimate(pose, shape), model, intrinsics, EXACT) < 1e-18

    def test_behind_camera_costs_infinity(self, model, intrinsics):
        shape, pose = _instance(model, 0)
        obs = render(model, shape, pose, intrinsics)
        flipped = Pose3(pose.rotation, -pose.translation)
        est = ObjectEstimate(flipped, shape)
        assert reprojection_cost(obs, est, model, intrinsics, EXACT) == math.inf

    def test_keypoint_count_mismatch(self, model, intrinsics):
        obs = KeypointObservation(0, np.zeros((3, 2)), np.ones(3, bool))
        zero = ShapeParams.zeros(model.basis_size)
        with pytest.raises(DimensionMismatch):
            keypoint_residuals(obs, Pose3.identity(), zero, model, intrinsics)


class TestJacobians:
    @pytest.mark.parametrize("seed", range(5))
    def test_pose_and_shape_match_finite_differences(self, model, intrinsics, seed):
        shape, pose = _instance(model, seed)
        obs = _noisy(render(model, shape, pose, intrinsics), 3.0, seed)
        rng = np.random.default_rng(100 + seed)
        pose = pose.compose(twist_exp(0.05 * rng.standard_normal(6)))
        r0, jp, js = keypoint_residuals(obs, pose, shape, model, intrinsics)

        def res(p, coeffs):
            return keypoint_residuals(obs, p, ShapeParams(coeffs), model, intrinsics)[0]

        eps = 1e-6
        for j in range(6):
            d = np.zeros(6)
            d[j] = eps
            plus = res(pose.compose(twist_exp(d)), shape.coeffs)
            minus = res(pose.compose(twist_exp(-d)), shape.coeffs)
            np.testing.assert_allclose(jp[:, j], (plus - minus) / (2 * eps), rtol=1e-5, atol=1e-4)
        for j in range(model.basis_size):
            d = np.zeros(model.basis_size)
            d[j] = eps
            numeric = (res(pose, shape.coeffs + d) - res(pose, shape.coeffs - d)) / (2 * eps)
            np.testing.assert_allclose(js[:, j], numeric, rtol=1e-5, atol=1e-4)
        assert r0.shape == (2 * obs.num_visible,)


class TestInitialization:
    def test_hypotheses_sorted_by_cost(self, model, intrinsics):
        shape, pose = _instance(model, 1)
        obs = render(model, shape, pose, intrinsics)
        hyps = initial_hypotheses(obs, model, intrinsics, HEIGHT, PITCH)
        assert len(hyps) == 8
        costs = [h.cost for h in hyps]
        assert costs == sorted(costs)

    @pytest.mark.parametrize("seed", range(10))
    def test_best_seed_near_true_yaw(self, model, intrinsics, seed):
        shape, pose = _instance(model, seed)
        obs = render(model, shape, pose, intrinsics)
        init = initialize_estimate(obs, model, intrinsics, HEIGHT, PITCH)
        assert _angle(init.pose, pose) <= math.radians(45.0) + 1e-9

    def test_too_few_visible(self, model, intrinsics):
        shape, pose = _instance(model, 2)
        obs = render(model, shape, pose, intrinsics)
        vis = np.zeros(model.num_keypoints, bool)
        vis[:3] = True
        sparse = KeypointObservation(0, obs.keypoints, vis)
        with pytest.raises(Underconstrained):
            initial_hypotheses(sparse, model, intrinsics, HEIGHT, PITCH)

    def test_non_positive_height(self, model, intrinsics):
        shape, pose = _instance(model, 2)
        obs = render(model, shape, pose, intrinsics)
        with pytest.raises(GroundPlaneDegenerate):
            initial_hypotheses(obs, model, intrinsics, 0.0, PITCH)


class TestRecovery:
    @pytest.mark.parametrize("seed", range(10))
    def test_noiseless_single_frame(self, model, intrinsics, seed):
        shape, pose = _instance(model, seed)
        obs = render(model, shape, pose, intrinsics)
        est = fit_observation(obs, model, intrinsics, EXACT, HEIGHT, PITCH)
        np.testing.assert_allclose(est.pose.translation, pose.translation, atol=1e-3)
        assert _angle(est.pose, pose) < 1e-3
        np.testing.assert_allclose(est.shape.coeffs, shape.coeffs, atol=1e-3)

    @pytest.mark.parametrize("seed", range(5))
    def test_alternation_is_monotone(self, model, intrinsics, seed):
        shape, pose = _instance(model, seed)
        obs = _noisy(render(model, shape, pose, intrinsics), 2.0, seed)
        init = initialize_estimate(obs, model, intrinsics, HEIGHT, PITCH)
        est = fit_alternating(obs, model, intrinsics, FitConfig(), init)
        assert all(b <= a for a, b in zip(est.history, est.history[1:]))
        assert est.cost == est.history[-1]
        assert est.cost <= init.cost

    @pytest.mark.parametrize("seed", range(3))
    def test_joint_polish_only_lowers_the_cost(self, model, intrinsics, seed):
        shape, pose = _instance(model, seed)
        obs = _noisy(render(model, shape, pose, intrinsics), 2.0, 100 + seed)
        init = initialize_estimate(obs, model, intrinsics, HEIGHT, PITCH)
        plain = fit_alternating(obs, model, intrinsics, FitConfig(joint_refine=False), init)
        joint = fit_alternating(obs, model, intrinsics, FitConfig(joint_refine=True), init)
        assert joint.history[: len(plain.history)] == plain.history
        assert len(joint.history) - len(plain.history) in (0, 1)
        assert joint.cost <= plain.cost

    def test_pose_only_and_shape_only(self, model, intrinsics):
        shape, pose = _instance(model, 3)
        obs = render(model, shape, pose, intrinsics)
        start = pose.compose(twist_exp([0.02, -0.03, 0.01, 0.05, 0.0, -0.05]))
        fitted = fit_pose(obs, shape, model, intrinsics, start, EXACT)
        assert fitted.allclose(pose, atol=1e-6)
        coeffs = fit_shape(obs, pose, model, intrinsics, ShapeParams.zeros(model.basis_size), EXACT)
        np.testing.assert_allclose(coeffs.coeffs, shape.coeffs, atol=1e-6)

    def test_multiframe_shares_one_shape(self, model, intrinsics):
        shape, _ = _instance(model, 4)
        world = Pose3(np.eye(3), np.array([0.3, 0.0, 3.0]))
        cams = [camera_pose(x, 0.0, 0.0, HEIGHT, PITCH) for x in (0.0, 0.3, 0.6)]
        obs = [
            render(model, shape, c.compose(world), intrinsics, frame=f)
            for f, c in enumerate(cams)
        ]
        rel = [relative_pose(cams[0], c) for c in cams]
        init = initialize_estimate(obs[0], model, intrinsics, HEIGHT, PITCH)
        multi = fit_multiframe(obs, rel, model, intrinsics, EXACT, init)
        np.testing.assert_allclose(multi.shape.coeffs, shape.coeffs, atol=1e-4)
        for est_pose, c in zip(multi.poses, cams):
            assert est_pose.allclose(c.compose(world), atol=1e-4)
        assert all(b <= a for a, b in zip(multi.history, multi.history[1:]))

    def test_multiframe_needs_matching_poses(self, model, intrinsics):
        shape, pose = _instance(model, 5)
        obs = render(model, shape, pose, intrinsics)
        init = ObjectEstimate(pose, shape)
        with pytest.raises(DimensionMismatch):
            fit_multiframe([obs, obs], [Pose3.identity()], model, intrinsics, EXACT, init)


class TestInvariance:
    @pytest.mark.parametrize("seed", range(3))
    def test_rolling_the_camera_rolls_the_fit(self, model, intrinsics, seed):
        shape, pose = _instance(model, seed)
        obs = _noisy(render(model, shape, pose, intrinsics), 2.0, 200 + seed)
        init = initialize_estimate(obs, model, intrinsics, HEIGHT, PITCH)
        est = fit_alternating(obs, model, intrinsics, FitConfig(), init)

        # a roll about the optical axis turns the image rigidly about the principal point
        roll = Pose3(rot_z(0.4), np.zeros(3))
        centre = np.array([intrinsics.cx, intrinsics.cy])
        turned = (obs.keypoints - centre) @ roll.rotation[:2, :2].T + centre
        rolled_obs = KeypointObservation(obs.frame, turned, obs.visibility)
        rolled_init = ObjectEstimate(roll.compose(init.pose), init.shape)
        rolled = fit_alternating(rolled_obs, model, intrinsics, FitConfig(), rolled_init)

        assert rolled.pose.allclose(roll.compose(est.pose), atol=1e-6)
        np.testing.assert_allclose(rolled.shape.coeffs, est.shape.coeffs, atol=1e-6)
        assert rolled.cost == pytest.approx(est.cost, rel=1e-6)

    def test_invisible_keypoint_values_are_never_read(self, model, intrinsics):
        shape, pose = _instance(model, 6)
        obs = _noisy(render(model, shape, pose, intrinsics), 1.0, 6)
        hidden = np.zeros(model.num_keypoints, bool)
        hidden[[1, 4, 7]] = True
        blank = obs.keypoints.copy()
        blank[hidden] = np.nan
        shuffled = obs.keypoints.copy()
        shuffled[hidden] = obs.keypoints[hidden][::-1] + 50.0
        a = KeypointObservation(0, blank, ~hidden)
        b = KeypointObservation(0, shuffled, ~hidden)

        cfg = FitConfig(min_visible=4)
        est = ObjectEstimate(pose, shape)
        assert reprojection_cost(a, est, model, intrinsics, cfg) == reprojection_cost(
            b, est, model, intrinsics, cfg
        )
        fit_a = fit_observation(a, model, intrinsics, cfg, HEIGHT, PITCH)
        fit_b = fit_observation(b, model, intrinsics, cfg, HEIGHT, PITCH)
        np.testing.assert_array_equal(fit_a.pose.matrix(), fit_b.pose.matrix())
        np.testing.assert_array_equal(fit_a.shape.coeffs, fit_b.shape.coeffs)
        assert fit_a.history == fit_b.history


@pytest.mark.slow
def test_noiseless_recovery_over_many_objects(model, intrinsics):
    for seed in range(100):
        shape, pose = _instance(model, 1000 + seed)
        obs = render(model, shape, pose, intrinsics)
        est = fit_observation(obs, model, intrinsics, EXACT, HEIGHT, PITCH)
        assert np.linalg.norm(est.pose.translation - pose.translation) < 1e-3
        assert _angle(est.pose, pose) < 1e-3
        assert np.max(np.abs(est.shape.coeffs - shape.coeffs)) < 1e-3


@pytest.mark.slow
def test_two_pixel_noise_median_error(model, intrinsics):
    cfg = FitConfig(refine_seeds=2)
    errors = []
    for seed in range(100):
        shape, pose = _instance(model, 2000 + seed)
        obs = _noisy(render(model, shape, pose, intrinsics), 2.0, seed)
        est = fit_observation(obs, model, intrinsics, cfg, HEIGHT, PITCH)
        errors.append(np.linalg.norm(est.pose.translation - pose.translation))
    assert np.median(errors) < 0.05


@pytest.mark.slow
def test_five_frames_pin_the_shape_better_than_one(model, intrinsics):
    cfg = FitConfig(refine_seeds=2)
    cams = [camera_pose(x, 0.0, 0.0, HEIGHT, PITCH) for x in np.linspace(0.0, 0.6, 5)]
    rel = [relative_pose(cams[0], c) for c in cams]
    single, multi = [], []
    for seed in range(100):
        rng = np.random.default_rng(3000 + seed)
        shape = ShapeParams(rng.standard_normal(model.basis_size) * np.sqrt(model.eigenvalues))
        world = Pose3(rot_y(rng.uniform(0.0, 2.0 * math.pi)), np.array([0.3, 0.0, 3.0]))
        obs = [
            _noisy(render(model, shape, c.compose(world), intrinsics, frame=f), 2.0, 10 * seed + f)
            for f, c in enumerate(cams)
        ]
        first = fit_observation(obs[0], model, intrinsics, cfg, HEIGHT, PITCH)
        joint = fit_multiframe(obs, rel, model, intrinsics, cfg, first)
        single.append(np.linalg.norm(first.shape.coeffs - shape.coeffs))
        multi.append(np.linalg.norm(joint.shape.coeffs - shape.coeffs))
    assert np.median(multi) <= np.median(single)
