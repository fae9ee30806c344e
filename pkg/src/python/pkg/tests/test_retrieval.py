import numpy as np
import pytest

from objslam.errors import DimensionMismatch, EmptyIndex, FileFormatError
from objslam.fit.alternating import fit_observation
from objslam.fit.observation import FitConfig
from objslam.models.category import ShapeParams, fit_params
from objslam.models.retrieval import (
    InstanceIndex,
    build_index,
    knn_retrieve,
    read_index,
    write_index,
)

from conftest import object_in_camera, render


@pytest.fixture(scope="module")
def index(model, chairs):
    return build_index(model, chairs)


def _exhaustive(index, query, k):
    dists = [
        (float(np.linalg.norm(row - query.coeffs)), iid)
        for row, iid in zip(index.params, index.instance_ids)
    ]
    return [(iid, d) for d, iid in sorted(dists)[:k]]


def test_self_retrieval(index, model, chairs):
    for c in chairs[:25]:
        top = knn_retrieve(index, fit_params(model, c), k=1)
        assert top[0][0] == c.instance_id
        assert top[0][1] == pytest.approx(0.0, abs=1e-12)


def test_matches_exhaustive_scan(index, model):
    rng = np.random.default_rng(0)
    for _ in range(50):
        query = ShapeParams(rng.standard_normal(model.basis_size) * np.sqrt(model.eigenvalues))
        got = knn_retrieve(index, query, k=5)
        expected = _exhaustive(index, query, 5)
        assert [i for i, _ in got] == [i for i, _ in expected]
        np.testing.assert_allclose([d for _, d in got], [d for _, d in expected], rtol=1e-12)


def test_ascending_and_clipped(model, chairs):
    small = build_index(model, chairs[:3])
    top = knn_retrieve(small, ShapeParams.zeros(model.basis_size), k=10)
    assert len(top) == 3
    assert [d for _, d in top] == sorted(d for _, d in top)


def test_insertion_order_does_not_matter(model, chairs):
    forward = build_index(model, chairs[:40])
    backward = build_index(model, chairs[:40][::-1])
    query = fit_params(model, chairs[50])
    a, b = knn_retrieve(forward, query, 5), knn_retrieve(backward, query, 5)
    assert [i for i, _ in a] == [i for i, _ in b]
    np.testing.assert_allclose([d for _, d in a], [d for _, d in b], rtol=1e-12)


def test_whitened_distances(index, model, chairs):
    top = knn_retrieve(index, fit_params(model, chairs[0]), k=1, whitened=True)
    assert top[0][0] == chairs[0].instance_id


def test_errors(model):
    empty = InstanceIndex((), np.zeros((0, model.basis_size)), (), model.eigenvalues)
    with pytest.raises(EmptyIndex):
        knn_retrieve(empty, ShapeParams.zeros(model.basis_size))


def test_query_size_mismatch(index, model):
    with pytest.raises(DimensionMismatch):
        knn_retrieve(index, ShapeParams.zeros(model.basis_size + 1))


def test_index_file(tmp_path, index):
    path = tmp_path / "index.csv"
    write_index(index, path)
    loaded = read_index(path)
    assert loaded.instance_ids == index.instance_ids
    assert loaded.sources == index.sources
    np.testing.assert_array_equal(loaded.params, index.params)
    np.testing.assert_array_equal(loaded.eigenvalues, index.eigenvalues)


def test_index_file_without_header(tmp_path):
    path = tmp_path / "index.csv"
    path.write_text("instance_id,source,lambda_0\na,,0.0\n")
    with pytest.raises(FileFormatError):
        read_index(path)


@pytest.mark.slow
def test_fit_then_retrieve(index, model, chairs, intrinsics):
    """Zero-noise keypoints of a training chair retrieve that chair first."""
    cfg = FitConfig(regularizer_weight=0.0, refine_seeds=2)
    hits = 0
    sample = chairs[::5]
    for n, c in enumerate(sample):
        truth = fit_params(model, c)
        pose = object_in_camera(yaw=0.4 + 0.1 * n, x=0.2, depth=3.0, height=1.0, pitch=0.3)
        obs = render(model, truth, pose, intrinsics)
        est = fit_observation(obs, model, intrinsics, cfg, height=1.0, pitch=0.3)
        hits += knn_retrieve(index, est.shape, k=1)[0][0] == c.instance_id
    assert hits >= 0.9 * len(sample)
