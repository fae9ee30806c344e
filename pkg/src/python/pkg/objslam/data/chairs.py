"""Synthetic keypoint-annotated chair collection.

Stands in for a CAD collection of roughly 250 chairs with 10 labelled keypoints each.
Instances come out already aligned: origin at the centre of the footprint on the
floor, y down, z towards the front of the seat.

Keypoint order:

| idx | name              | position                      |
| --- | ---               | ---                           |
| 0-3 | leg_{fl,fr,bl,br} | (+-(a + e), 0, +-(b + e))     |
| 4-7 | seat_{fl,fr,bl,br}| (+-a, -h_seat, +-b)           |
| 8-9 | back_{l,r}        | (+-(a + f), -(h_seat + h_back), -b - g) |

Seat height is held fixed so that instance size stays tied to metric scale; the six
free dimensions (a, b, e, h_back, f, g) give a collection of exact rank 6.

Collection file (CSV), one row per instance:

 | instance_id | category | source | <kp>_x | <kp>_y | <kp>_z | ... |

Usage:

    chairs = objslam.data.chairs.generate_chairs(250, seed=0)
"""

import logging
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from objslam.errors import FileFormatError, InconsistentK
from objslam.models.category import KeypointSet3D

__all__ = [
    "CHAIR_KEYPOINTS",
    "SEAT_HEIGHT",
    "chair_points",
    "generate_chairs",
    "read_keypoint_collection",
    "write_keypoint_collection",
]


CHAIR_KEYPOINTS: Tuple[str, ...] = (
    "leg_fl",
    "leg_fr",
    "leg_bl",
    "leg_br",
    "seat_fl",
    "seat_fr",
    "seat_bl",
    "seat_br",
    "back_l",
    "back_r",
)

SEAT_HEIGHT: float = 0.45

# (mean, std) of each free dimension, metres
_DIMENSIONS = {
    "half_width": (0.22, 0.03),
    "half_depth": (0.22, 0.03),
    "leg_splay": (0.03, 0.015),
    "back_height": (0.40, 0.06),
    "back_flare": (0.0, 0.02),
    "back_rake": (0.05, 0.03),
}

logger = logging.getLogger(__name__)


def chair_points(
    half_width: float,
    half_depth: float,
    leg_splay: float,
    back_height: float,
    back_flare: float,
    back_rake: float,
) -> np.ndarray:
    """The 10 chair keypoints for one set of dimensions, shape (10, 3)."""
    a, b, e, f = half_width, half_depth, leg_splay, back_flare
    top = -(SEAT_HEIGHT + back_height)
    return np.array(
        [
            [-(a + e), 0.0, b + e],
            [a + e, 0.0, b + e],
            [-(a + e), 0.0, -(b + e)],
            [a + e, 0.0, -(b + e)],
            [-a, -SEAT_HEIGHT, b],
            [a, -SEAT_HEIGHT, b],
            [-a, -SEAT_HEIGHT, -b],
            [a, -SEAT_HEIGHT, -b],
            [-(a + f), top, -b - back_rake],
            [a + f, top, -b - back_rake],
        ]
    )


def generate_chairs(count: int = 250, seed: int = 0) -> List[KeypointSet3D]:
    """Sample `count` aligned chair instances deterministically from `seed`."""
    rng = np.random.default_rng(seed)
    means = np.array([m for m, _ in _DIMENSIONS.values()])
    stds = np.array([s for _, s in _DIMENSIONS.values()])
    draws = means + stds * rng.standard_normal((count, len(_DIMENSIONS)))

    # keep the geometry physical: positive half extents and back height
    draws[:, :2] = np.maximum(draws[:, :2], 0.05)
    draws[:, 3] = np.maximum(draws[:, 3], 0.1)

    chairs = [
        KeypointSet3D(
            chair_points(*row),
            category="chair",
            instance_id=f"chair_{i:04d}",
            source=f"synthetic:seed={seed}:index={i}",
        )
        for i, row in enumerate(draws)
    ]
    logger.info(f"Generated {count} synthetic chairs (seed {seed})")
    return chairs


def write_keypoint_collection(
    instances: Sequence[KeypointSet3D],
    path: Union[str, Path],
    names: Sequence[str] = CHAIR_KEYPOINTS,
) -> None:
    if any(s.num_keypoints != len(names) for s in instances):
        raise InconsistentK(f"every instance must have {len(names)} keypoints")
    coords = [f"{n}_{axis}" for n in names for axis in "xyz"]
    df = pd.DataFrame(np.stack([s.as_vector() for s in instances]), columns=coords)
    df.insert(0, "source", [s.source for s in instances])
    df.insert(0, "category", [s.category for s in instances])
    df.insert(0, "instance_id", [s.instance_id for s in instances])
    df.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"Wrote {len(instances)} instances to {path}")


def read_keypoint_collection(path: Union[str, Path]) -> Tuple[List[KeypointSet3D], List[str]]:
    """Read a collection CSV.

    Returns:
        (instances, keypoint names in canonical order)
    """
    try:
        df = pd.read_csv(path, dtype={"instance_id": str, "category": str, "source": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc

    coord_cols = [c for c in df.columns if c[-2:] in ("_x", "_y", "_z")]
    if not coord_cols or len(coord_cols) % 3 or "instance_id" not in df.columns:
        raise FileFormatError(f"{path}: expected instance_id and <kp>_x/_y/_z columns")
    names = [c[:-2] for c in coord_cols[::3]]
    expected = [f"{n}_{axis}" for n in names for axis in "xyz"]
    if coord_cols != expected:
        raise FileFormatError(f"{path}: keypoint columns out of x/y/z order")

    for col, default in (("category", "chair"), ("source", "")):
        if col not in df.columns:
            df[col] = default
    df = df.fillna({"category": "chair", "source": ""})
    values = df[coord_cols].to_numpy(dtype=float)
    if not np.all(np.isfinite(values)):
        raise FileFormatError(f"{path}: non-finite keypoint coordinates")

    instances = [
        KeypointSet3D(
            row.reshape(-1, 3),
            category=str(cat),
            instance_id=str(iid),
            source=str(src),
        )
        for row, iid, cat, src in zip(
            values, df["instance_id"], df["category"], df["source"]
        )
    ]
    logger.info(f"Read {len(instances)} instances of {len(names)} keypoints from {path}")
    return instances, names
