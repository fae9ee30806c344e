import numpy as np
import pytest

from objslam.data.chairs import (
    CHAIR_KEYPOINTS,
    SEAT_HEIGHT,
    chair_points,
    generate_chairs,
    read_keypoint_collection,
    write_keypoint_collection,
)
from objslam.errors import FileFormatError


def test_generation_is_deterministic():
    a, b = generate_chairs(20, seed=7), generate_chairs(20, seed=7)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.points, y.points)
        assert x.instance_id == y.instance_id


def test_different_seeds_differ():
    a, b = generate_chairs(5, seed=1), generate_chairs(5, seed=2)
    assert not np.allclose(a[0].points, b[0].points)


def test_chairs_stand_on_the_floor(chairs):
    for c in chairs:
        np.testing.assert_array_equal(c.points[:4, 1], np.zeros(4))
        np.testing.assert_allclose(c.points[4:8, 1], -SEAT_HEIGHT)
        assert np.all(c.points[8:, 1] < -SEAT_HEIGHT)


def test_chair_points_layout():
    pts = chair_points(0.2, 0.25, 0.0, 0.4, 0.0, 0.0)
    assert pts.shape == (len(CHAIR_KEYPOINTS), 3)
    np.testing.assert_allclose(pts[0], [-0.2, 0.0, 0.25])
    np.testing.assert_allclose(pts[9], [0.2, -0.85, -0.25])


def test_collection_file(tmp_path, chairs):
    path = tmp_path / "chairs.csv"
    write_keypoint_collection(chairs[:10], path)
    instances, names = read_keypoint_collection(path)
    assert names == list(CHAIR_KEYPOINTS)
    assert [s.instance_id for s in instances] == [s.instance_id for s in chairs[:10]]
    for read, written in zip(instances, chairs[:10]):
        np.testing.assert_array_equal(read.points, written.points)


def test_collection_without_coordinates(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("instance_id,category\nc1,chair\n")
    with pytest.raises(FileFormatError):
        read_keypoint_collection(path)
