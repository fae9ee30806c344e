"""Linear-subspace category shape model.

An instance of the category is a fixed-order set of K keypoints. Stacked as a
3K-vector (x0, y0, z0, x1, ...), every instance is approximated by

    S = mean + basis @ coeffs

where the basis columns are the top principal directions of the aligned training
collection. Training sets are assumed to be aligned already; nothing here tries to
register them.

Model file layout (TOML):

    format = "objslam-category-model"
    version = 1
    category = "chair"
    num_keypoints = K
    basis_size = B
    total_variance = ...
    keypoint_names = [...]
    mean = [3K floats]
    basis = [3K * B floats, column-major]
    eigenvalues = [B floats]

Usage:

    model = build_category_model(instances)
    shape = instantiate_shape(model, fit_params(model, instances[0]))
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import toml

from objslam.errors import (
    DimensionMismatch,
    FileFormatError,
    InconsistentK,
    InsufficientInstances,
)

__all__ = [
    "DEFAULT_EXPLAINED_VARIANCE",
    "CategoryModel",
    "KeypointSet3D",
    "ShapeParams",
    "build_category_model",
    "explained_variance_ratio",
    "fit_params",
    "ground_contact_indices",
    "instantiate_shape",
    "load_category_model",
    "reconstruction_error",
    "save_category_model",
    "shape_points",
]


# ------- Constants ------- #
DEFAULT_EXPLAINED_VARIANCE: float = 0.95

MODEL_FORMAT = "objslam-category-model"
MODEL_VERSION = 1

# Basis orthonormality tolerance checked on construction
_BASIS_TOL = 1e-9

# Keypoints within this height (m) of the lowest mean keypoint touch the ground
GROUND_CONTACT_TOL: float = 0.05


logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class KeypointSet3D:
    """K ordered keypoints of one instance, object frame, metres."""

    points: np.ndarray
    category: str = "chair"
    instance_id: str = ""
    source: str = ""

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DimensionMismatch(f"keypoints must be (K, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"instance {self.instance_id!r} has non-finite keypoints")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def num_keypoints(self) -> int:
        return self.points.shape[0]

    def as_vector(self) -> np.ndarray:
        return self.points.reshape(-1)


@dataclass(frozen=True, eq=False)
class ShapeParams:
    """Deformation coefficients, one per basis column."""

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if not np.all(np.isfinite(c)):
            raise ValueError("shape coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, size: int) -> "ShapeParams":
        return cls(np.zeros(size))

    def __len__(self) -> int:
        return len(self.coeffs)


@dataclass(frozen=True, eq=False)
class CategoryModel:
    """Mean shape, orthonormal deformation basis and PCA variances."""

    mean: np.ndarray
    basis: np.ndarray
    eigenvalues: np.ndarray
    category: str = "chair"
    total_variance: float = 0.0
    keypoint_names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        mean = np.array(self.mean, dtype=float).reshape(-1)
        basis = np.array(self.basis, dtype=float)
        eig = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if mean.size % 3:
            raise DimensionMismatch(f"mean length {mean.size} is not a multiple of 3")
        if basis.ndim != 2 or basis.shape[0] != mean.size or basis.shape[1] != eig.size:
            raise DimensionMismatch(
                f"basis {basis.shape} inconsistent with mean {mean.size} / eigenvalues {eig.size}"
            )
        gram = basis.T @ basis
        if np.abs(gram - np.eye(basis.shape[1])).max(initial=0.0) > _BASIS_TOL:
            raise ValueError("basis columns are not orthonormal")
        if np.any(eig < 0.0) or np.any(np.diff(eig) > 0.0):
            raise ValueError("eigenvalues must be non-negative and sorted descending")
        names = tuple(self.keypoint_names) or tuple(f"kp{i}" for i in range(mean.size // 3))
        if len(names) != mean.size // 3:
            raise DimensionMismatch(f"{len(names)} keypoint names for {mean.size // 3} keypoints")
        for arr in (mean, basis, eig):
            arr.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "eigenvalues", eig)
        object.__setattr__(self, "keypoint_names", names)

    @property
    def num_keypoints(self) -> int:
        return self.mean.size // 3

    @property
    def basis_size(self) -> int:
        return self.basis.shape[1]

    def mean_points(self) -> np.ndarray:
        return self.mean.reshape(-1, 3)

    def basis_rows(self) -> np.ndarray:
        """Basis regrouped per keypoint, shape (K, 3, B)."""
        return self.basis.reshape(self.num_keypoints, 3, self.basis_size)


# Private functions ------------------------------------------------------------


def _stack(instances: Sequence[KeypointSet3D]) -> np.ndarray:
    counts = {s.num_keypoints for s in instances}
    if len(counts) > 1:
        raise InconsistentK(f"instances disagree on keypoint count: {sorted(counts)}")
    return np.stack([s.as_vector() for s in instances])


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive."""
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _choose_basis_size(eig: np.ndarray, floor: float) -> int:
    total = float(eig.sum())
    if total <= 0.0:
        return 1
    ratio = np.cumsum(eig) / total
    # tiny slack so an exact 0.95 split is not lost to rounding
    return int(np.searchsorted(ratio, floor - 1e-12) + 1)


def _check_coeffs(m: CategoryModel, p: ShapeParams) -> None:
    if len(p) != m.basis_size:
        raise DimensionMismatch(f"expected {m.basis_size} shape coefficients, got {len(p)}")


# Public API ------------------------------------------------------------------


def build_category_model(
    instances: Sequence[KeypointSet3D],
    b: Optional[int] = None,
    explained_variance: float = DEFAULT_EXPLAINED_VARIANCE,
    keypoint_names: Optional[Sequence[str]] = None,
) -> CategoryModel:
    """PCA over mean-subtracted keypoint vectors.

    Args:
        instances (list): aligned training keypoint sets
        b (int): basis size; when None the smallest B reaching `explained_variance`
        explained_variance (float): floor used when `b` is None
        keypoint_names (list): optional labels in canonical keypoint order

    Returns:
        CategoryModel

    Raises:
        InsufficientInstances: fewer than two instances, or b above min(3K, N - 1)
        InconsistentK: instances with different keypoint counts
    """
    if len(instances) < 2:
        raise InsufficientInstances(f"PCA needs at least 2 instances, got {len(instances)}")

    data = _stack(instances)
    n, dim = data.shape
    max_b = min(dim, n - 1)

    mean = data.mean(axis=0)
    centered = data - mean
    cov = centered.T @ centered / (n - 1)

    eig, vec = np.linalg.eigh(cov)
    order = np.argsort(eig)[::-1]
    eig = np.clip(eig[order], 0.0, None)
    vec = vec[:, order]
    total = float(eig.sum())

    if b is None:
        b = min(_choose_basis_size(eig, explained_variance), max_b)
    elif not 1 <= b <= max_b:
        raise InsufficientInstances(
            f"basis size {b} outside [1, {max_b}] for {n} instances of {dim // 3} keypoints"
        )

    model = CategoryModel(
        mean=mean,
        basis=_fix_signs(vec[:, :b]),
        eigenvalues=eig[:b],
        category=instances[0].category,
        total_variance=total,
        keypoint_names=tuple(keypoint_names or ()),
    )
    logger.info(
        f"Built {model.category} model: K={model.num_keypoints}, B={b}, "
        f"explained variance {explained_variance_ratio(model):.4f}"
    )
    return model


def shape_points(m: CategoryModel, coeffs: np.ndarray) -> np.ndarray:
    """mean + basis @ coeffs as (K, 3) points."""
    return (m.mean + m.basis @ coeffs).reshape(-1, 3)


def instantiate_shape(m: CategoryModel, p: ShapeParams) -> KeypointSet3D:
    _check_coeffs(m, p)
    return KeypointSet3D(shape_points(m, p.coeffs), category=m.category)


def fit_params(m: CategoryModel, s: KeypointSet3D) -> ShapeParams:
    """Orthogonal projection of an instance onto the deformation basis."""
    if s.num_keypoints != m.num_keypoints:
        raise DimensionMismatch(
            f"model has {m.num_keypoints} keypoints, instance {s.num_keypoints}"
        )
    return ShapeParams(m.basis.T @ (s.as_vector() - m.mean))


def reconstruction_error(m: CategoryModel, s: KeypointSet3D) -> float:
    """|| instantiate(fit_params(s)) - s || over the stacked 3K-vector."""
    recon = shape_points(m, fit_params(m, s).coeffs).reshape(-1)
    return float(np.linalg.norm(recon - s.as_vector()))


def explained_variance_ratio(m: CategoryModel) -> float:
    if m.total_variance <= 0.0:
        return 1.0
    return float(m.eigenvalues.sum() / m.total_variance)


def ground_contact_indices(m: CategoryModel, tol: float = GROUND_CONTACT_TOL) -> List[int]:
    """Keypoints of the mean shape resting on the ground (largest y, since y points down)."""
    y = m.mean_points()[:, 1]
    return [int(i) for i in np.flatnonzero(y >= y.max() - tol)]


# File I/O ---------------------------------------------------------------------


def save_category_model(m: CategoryModel, path: Union[str, Path]) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "category": m.category,
        "num_keypoints": int(m.num_keypoints),
        "basis_size": int(m.basis_size),
        "total_variance": float(m.total_variance),
        "keypoint_names": list(m.keypoint_names),
        "mean": m.mean.tolist(),
        "basis": m.basis.T.reshape(-1).tolist(),
        "eigenvalues": m.eigenvalues.tolist(),
    }
    Path(path).write_text(toml.dumps(doc))
    logger.info(f"Wrote category model to {path}")


def load_category_model(path: Union[str, Path]) -> CategoryModel:
    try:
        doc = toml.loads(Path(path).read_text())
    except toml.TomlDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc

    if doc.get("format") != MODEL_FORMAT:
        raise FileFormatError(f"{path}: not an {MODEL_FORMAT} document")
    if doc.get("version") != MODEL_VERSION:
        raise FileFormatError(f"{path}: unsupported model version {doc.get('version')}")

    try:
        k = int(doc["num_keypoints"])
        b = int(doc["basis_size"])
        basis = np.asarray(doc["basis"], dtype=float).reshape(b, 3 * k).T
        return CategoryModel(
            mean=np.asarray(doc["mean"], dtype=float),
            basis=basis,
            eigenvalues=np.asarray(doc["eigenvalues"], dtype=float),
            category=str(doc["category"]),
            total_variance=float(doc.get("total_variance", 0.0)),
            keypoint_names=tuple(doc.get("keypoint_names", ())),
        )
    except (KeyError, ValueError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc

