import numpy as np
import pytest
import seaborn as sns

from objslam.evaluation import plots
from objslam.evaluation.plots import plot_top_down
from objslam.geometry.lie import Pose3


@pytest.fixture
def scatter_kwargs(monkeypatch):
    seen = {}

    def scatterplot(**kwargs):
        seen.update(kwargs)

    monkeypatch.setattr(plots.sns, "scatterplot", scatterplot)
    return seen


def test_true_objects_alone_keep_their_colour(tmp_path, scatter_kwargs):
    path = tmp_path / "top.svg"
    plot_top_down(path, [Pose3.identity()], {}, true_objects={0: np.array([1.0, 0.0, 2.0])})
    assert scatter_kwargs["palette"] == {"true objects": sns.color_palette("deep")[2]}
    assert path.exists()


def test_each_source_has_one_colour(tmp_path, scatter_kwargs):
    deep = sns.color_palette("deep")
    objects = {3: np.array([0.5, 0.0, 1.0])}
    truth = {0: np.array([1.0, 0.0, 2.0])}
    plot_top_down(tmp_path / "top.svg", [Pose3.identity()], objects, true_objects=truth)
    assert scatter_kwargs["palette"] == {"estimated objects": deep[3], "true objects": deep[2]}
