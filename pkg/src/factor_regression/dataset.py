"""
Provides the regression dataset: paired inputs X (p×N) and responses Y (q×N)
with observations as columns, plus the .npz container they are stored in.
"""

import logging
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple

import numpy

from factor_regression.errors import CheckpointError, StructuralError

logger = logging.getLogger(__name__)

DATASET_FORMAT = "factor-regression-dataset"
DATASET_VERSION = 1


def _finite_matrix(name: str, value) -> numpy.ndarray:
    matrix = numpy.array(value, dtype=float)
    if matrix.ndim != 2:
        raise StructuralError(f"{name} must be a matrix, got {matrix.ndim} dimensions")
    if matrix.shape[0] < 1:
        raise StructuralError(f"{name} must have at least one row")
    if not numpy.all(numpy.isfinite(matrix)):
        bad = tuple(int(i) for i in numpy.argwhere(~numpy.isfinite(matrix))[0])
        raise StructuralError(f"{name} has a non-finite entry at {bad}")
    matrix.setflags(write=False)
    return matrix


class RegressionDataset:
    """
    Inputs X (p×N) and responses Y (q×N). Columns listed in missing are
    responses that are not observed; their Y values are placeholders (or
    imputed values while a sampler runs). Indices are zero-based. The arrays
    are read-only so a dataset can be shared between chains.
    """

    def __init__(self, X, Y, missing: Optional[Iterable[int]] = None):
        self.X = _finite_matrix("X", X)
        self.Y = _finite_matrix("Y", Y)
        if self.X.shape[1] != self.Y.shape[1]:
            raise StructuralError(
                f"X has {self.X.shape[1]} columns but Y has {self.Y.shape[1]}"
            )
        if self.X.shape[1] < 1:
            raise StructuralError("A dataset needs at least one observation")
        indices = sorted({int(index) for index in (missing or ())})
        if indices and (indices[0] < 0 or indices[-1] >= self.N):
            raise StructuralError(f"Missing indices must lie in [0, {self.N})")
        self.missing: Tuple[int, ...] = tuple(indices)

    @property
    def p(self) -> int:
        """Input dimensionality."""
        return self.X.shape[0]

    @property
    def q(self) -> int:
        """Response dimensionality."""
        return self.Y.shape[0]

    @property
    def N(self) -> int:  # pylint: disable=invalid-name
        """Number of observations."""
        return self.X.shape[1]

    @property
    def observed_columns(self) -> numpy.ndarray:
        """Indices of the columns whose responses are observed."""
        mask = numpy.ones(self.N, dtype=bool)
        mask[list(self.missing)] = False
        return numpy.flatnonzero(mask)

    def with_responses(self, Y) -> "RegressionDataset":  # pylint: disable=invalid-name
        """Same inputs and missing set with replaced responses."""
        return RegressionDataset(self.X, Y, self.missing)

    def subset(self, columns: Sequence[int]) -> "RegressionDataset":
        """The observations at columns, all treated as observed."""
        columns = numpy.asarray(columns, dtype=int)
        return RegressionDataset(self.X[:, columns], self.Y[:, columns])

    def __eq__(self, other) -> bool:
        if not isinstance(other, RegressionDataset):
            return NotImplemented
        return (
            numpy.array_equal(self.X, other.X)
            and numpy.array_equal(self.Y, other.Y)
            and self.missing == other.missing
        )

    def __repr__(self) -> str:
        return (
            f"RegressionDataset(p={self.p}, q={self.q}, N={self.N}, "
            f"missing={len(self.missing)})"
        )


def save_dataset(path: Path, data: RegressionDataset) -> None:
    """
    Write a dataset as an .npz container holding format, version, shape
    (p, q, N), X, Y and the missing column list.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as handle:
        numpy.savez(
            handle,
            format=numpy.array(DATASET_FORMAT),
            version=numpy.array(DATASET_VERSION),
            shape=numpy.array([data.p, data.q, data.N]),
            X=data.X,
            Y=data.Y,
            missing=numpy.array(data.missing, dtype=numpy.int64),
        )
    logger.debug("Wrote %r to %s", data, path)


def load_dataset(path: Path) -> RegressionDataset:
    """Read a dataset written by save_dataset."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"Dataset file {path} does not exist")
    with numpy.load(path, allow_pickle=False) as archive:
        if str(archive["format"]) != DATASET_FORMAT:
            raise CheckpointError(f"{path} is not a dataset file")
        if int(archive["version"]) != DATASET_VERSION:
            raise CheckpointError(
                f"{path} has dataset version {int(archive['version'])}, "
                f"expected {DATASET_VERSION}"
            )
        data = RegressionDataset(
            archive["X"], archive["Y"], archive["missing"].tolist()
        )
        if tuple(archive["shape"].tolist()) != (data.p, data.q, data.N):
            raise StructuralError(f"{path} header does not match its matrices")
    return data
