"""Top-down (X-Z) plots of a run as SVG.

SVG output is made reproducible by fixing the id hash salt and dropping the date
from the metadata, so identical runs give identical files.
"""

import logging
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402
import seaborn as sns  # noqa: E402

from objslam.geometry.lie import Pose3  # noqa: E402

__all__ = ["plot_top_down"]

# Palette index of each object marker source
OBJECT_COLOURS = {"estimated objects": 3, "true objects": 2}

logger = logging.getLogger(__name__)


def _centres(poses: Sequence[Pose3]) -> np.ndarray:
    return np.array([p.center() for p in poses]).reshape(-1, 3)


def _objects_frame(positions: Mapping[int, np.ndarray], source: str) -> pd.DataFrame:
    rows = [(source, float(p[0]), float(p[2])) for _, p in sorted(positions.items())]
    return pd.DataFrame(rows, columns=["source", "x", "z"])


def plot_top_down(
    path: Union[str, Path],
    estimate: Sequence[Pose3],
    objects: Mapping[int, np.ndarray],
    ground_truth: Optional[Sequence[Pose3]] = None,
    true_objects: Optional[Mapping[int, np.ndarray]] = None,
    dead_reckoning: Optional[Sequence[Pose3]] = None,
    title: str = "",
) -> None:
    """Trajectories as lines and objects as markers, seen from above.

    Args:
        path (str | Path): SVG file to write
        estimate (list of Pose3): estimated world->camera poses
        objects (dict): global id -> estimated world position
        ground_truth (list of Pose3): true poses, drawn when given
        true_objects (dict): label -> true world position, drawn when given
        dead_reckoning (list of Pose3): chained odometry, drawn when given
        title (str): figure title
    """
    sns.set(style="whitegrid")
    palette = sns.color_palette("deep")
    plt.rcParams["svg.hashsalt"] = "objslam"

    fig, ax = plt.subplots(figsize=(7, 7))
    lines = [("estimate", estimate, palette[0], "-")]
    if dead_reckoning is not None:
        lines.append(("odometry", dead_reckoning, palette[1], "--"))
    if ground_truth is not None:
        lines.append(("ground truth", ground_truth, palette[2], ":"))
    for label, poses, colour, style in lines:
        c = _centres(poses)
        ax.plot(c[:, 0], c[:, 2], style, color=colour, label=label, linewidth=1.5)

    frames = [_objects_frame(objects, "estimated objects")]
    if true_objects is not None:
        frames.append(_objects_frame(true_objects, "true objects"))
    points = pd.concat(frames, ignore_index=True)
    if not points.empty:
        sns.scatterplot(
            data=points,
            x="x",
            y="z",
            hue="source",
            style="source",
            palette={s: palette[OBJECT_COLOURS[s]] for s in points["source"].unique()},
            s=60,
            ax=ax,
        )

    ax.set_xlabel("x (m)")
    ax.set_ylabel("z (m)")
    ax.set_aspect("equal", adjustable="datalim")
    ax.legend(loc="best")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    logger.info(f"Wrote top-down plot to {path}")
