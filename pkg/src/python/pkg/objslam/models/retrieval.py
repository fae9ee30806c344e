"""Nearest-neighbour instance retrieval in shape-coefficient space.

The index holds the projected shape coefficients of every training instance; a query
is an estimated ShapeParams. Search is an exhaustive scan, which is exact and fast at
the few-hundred-instance scale of a CAD collection.

Index file:

    # objslam-instance-index basis_size=B count=N eigenvalues=e1;e2;...
    instance_id,source,lambda_0,...,lambda_{B-1}
    ...
"""

import io
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from objslam.errors import DimensionMismatch, EmptyIndex, FileFormatError
from objslam.models.category import CategoryModel, KeypointSet3D, ShapeParams, fit_params

__all__ = [
    "InstanceIndex",
    "build_index",
    "knn_retrieve",
    "read_index",
    "write_index",
]

_HEADER = "# objslam-instance-index"
_HEADER_RE = re.compile(
    r"^# objslam-instance-index basis_size=(\d+) count=(\d+)(?: eigenvalues=(\S*))?$"
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class InstanceIndex:
    """One row of shape coefficients per training instance."""

    instance_ids: Tuple[str, ...]
    params: np.ndarray
    sources: Tuple[str, ...]
    eigenvalues: np.ndarray

    def __post_init__(self) -> None:
        params = np.atleast_2d(np.array(self.params, dtype=float))
        if params.shape[0] != len(self.instance_ids):
            raise DimensionMismatch(
                f"{params.shape[0]} coefficient rows for {len(self.instance_ids)} ids"
            )
        eig = np.array(self.eigenvalues, dtype=float).reshape(-1)
        if len(self.sources) != len(self.instance_ids):
            raise DimensionMismatch("one source reference per instance is required")
        if len(self.instance_ids) and eig.size != params.shape[1]:
            raise DimensionMismatch(f"{eig.size} eigenvalues for basis size {params.shape[1]}")
        params.setflags(write=False)
        eig.setflags(write=False)
        object.__setattr__(self, "instance_ids", tuple(self.instance_ids))
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "eigenvalues", eig)

    def __len__(self) -> int:
        return len(self.instance_ids)

    @property
    def basis_size(self) -> int:
        return self.eigenvalues.size


def build_index(m: CategoryModel, instances: Sequence[KeypointSet3D]) -> InstanceIndex:
    params = np.zeros((0, m.basis_size))
    if instances:
        params = np.stack([fit_params(m, s).coeffs for s in instances])
    index = InstanceIndex(
        instance_ids=tuple(s.instance_id for s in instances),
        params=params,
        sources=tuple(s.source for s in instances),
        eigenvalues=m.eigenvalues,
    )
    logger.info(f"Indexed {len(index)} instances with B={m.basis_size}")
    return index


def knn_retrieve(
    index: InstanceIndex, query: ShapeParams, k: int = 5, whitened: bool = False
) -> List[Tuple[str, float]]:
    """The k nearest training instances to `query`.

    Args:
        index (InstanceIndex): training coefficients
        query (ShapeParams): estimated shape
        k (int): number of neighbours; clipped to the index size
        whitened (bool): scale each coefficient by 1/sqrt(eigenvalue) before measuring

    Returns:
        list of (instance id, distance), ascending distance, ties by instance id

    Raises:
        EmptyIndex: no instances indexed
    """
    if len(index) == 0:
        raise EmptyIndex("cannot retrieve from an empty index")
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    if len(query) != index.basis_size:
        raise DimensionMismatch(f"query has {len(query)} coefficients, index {index.basis_size}")

    diff = index.params - query.coeffs
    if whitened:
        scale = np.sqrt(np.where(index.eigenvalues > 0.0, index.eigenvalues, np.inf))
        diff = diff / scale
    dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))

    order = np.lexsort((np.array(index.instance_ids), dist))[:k]
    return [(index.instance_ids[i], float(dist[i])) for i in order]


def write_index(index: InstanceIndex, path: Union[str, Path]) -> None:
    eig = ";".join(repr(float(e)) for e in index.eigenvalues)
    header = f"{_HEADER} basis_size={index.basis_size} count={len(index)} eigenvalues={eig}\n"
    df = pd.DataFrame(
        index.params.reshape(len(index), index.basis_size),
        columns=[f"lambda_{b}" for b in range(index.basis_size)],
    )
    df.insert(0, "source", list(index.sources))
    df.insert(0, "instance_id", list(index.instance_ids))
    with open(path, "w") as f:
        f.write(header)
        df.to_csv(f, index=False, float_format="%.17g")


def read_index(path: Union[str, Path]) -> InstanceIndex:
    text = Path(path).read_text()
    first, _, body = text.partition("\n")
    match = _HEADER_RE.match(first)
    if match is None:
        raise FileFormatError(f"{path}: missing '{_HEADER}' header")
    b, count = int(match.group(1)), int(match.group(2))
    eig_text = match.group(3) or ""
    eig = np.array([float(e) for e in eig_text.split(";") if e]) if eig_text else np.ones(b)

    try:
        df = pd.read_csv(io.StringIO(body), dtype={"instance_id": str, "source": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise FileFormatError(f"{path}: {exc}") from exc

    cols = [f"lambda_{i}" for i in range(b)]
    if len(df) != count or any(c not in df.columns for c in cols):
        raise FileFormatError(f"{path}: expected {count} rows with columns {cols}")

    return InstanceIndex(
        instance_ids=tuple(df["instance_id"].astype(str)),
        params=df[cols].to_numpy(dtype=float),
        sources=tuple(df["source"].fillna("").astype(str)),
        eigenvalues=eig,
    )
