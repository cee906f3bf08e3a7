"""Observed data containers, CSV ingestion and design matrices."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    IndexOutOfRange,
    MissingColumn,
    NonBinaryTreatment,
    NonNumericCell,
)


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed triples (Z, X, Y).

    ``z`` is stored as a float array of 0/1 so it can enter arithmetic
    directly. Arrays are read-only; resampling produces new instances.
    """

    z: np.ndarray
    y: np.ndarray
    covariates: np.ndarray
    covariate_names: tuple[str, ...]
    treatment_name: str = "treatment"
    outcome_name: str = "outcome"

    def __post_init__(self):
        z = _frozen(self.z).ravel()
        y = _frozen(self.y).ravel()
        x = _frozen(self.covariates)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(z), 0)
            x.flags.writeable = False
        n = z.shape[0]
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        if y.shape[0] != n or x.shape[0] != n:
            raise DataError("z, y and covariates must have the same number of rows")
        if not np.all((z == 0) | (z == 1)):
            raise NonBinaryTreatment("treatment entries must be 0 or 1")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise DataError("outcome and covariates must be finite")
        names = tuple(self.covariate_names)
        if len(names) != x.shape[1]:
            raise DataError(
                f"{len(names)} covariate names for {x.shape[1]} covariate columns"
            )
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_treated(self) -> int:
        return int(self.z.sum())

    def take(self, index) -> "Dataset":
        """Rows ``index`` (with repetition allowed) as a new dataset."""
        index = np.asarray(index)
        return Dataset(
            self.z[index],
            self.y[index],
            self.covariates[index],
            self.covariate_names,
            self.treatment_name,
            self.outcome_name,
        )

    def column_index(self, name: str) -> int:
        try:
            return self.covariate_names.index(name)
        except ValueError:
            raise MissingColumn(f"no covariate named {name!r}") from None


@dataclass(frozen=True)
class DesignSpec:
    """Ordered covariate positions for a propensity or outcome model.

    The intercept is always the first design column.
    """

    column_indices: tuple[int, ...] = field(default_factory=tuple)
    include_intercept: bool = True

    def __post_init__(self):
        idx = tuple(int(i) for i in self.column_indices)
        if len(set(idx)) != len(idx):
            raise IndexOutOfRange(f"duplicate column index in {idx}")
        if any(i < 0 for i in idx):
            raise IndexOutOfRange(f"negative column index in {idx}")
        if not self.include_intercept:
            raise DataError("designs always carry an intercept")
        object.__setattr__(self, "column_indices", idx)

    def __len__(self) -> int:
        return len(self.column_indices)

    @property
    def n_params(self) -> int:
        return len(self.column_indices) + 1

    @classmethod
    def all_columns(cls, ds: Dataset) -> "DesignSpec":
        return cls(tuple(range(ds.p)))

    @classmethod
    def from_names(cls, ds: Dataset, names: Sequence[str]) -> "DesignSpec":
        return cls(tuple(ds.column_index(n) for n in names))


def design_matrix(ds: Dataset, spec: DesignSpec) -> np.ndarray:
    """Intercept column followed by ``ds.covariates[:, spec.column_indices]``."""
    idx = spec.column_indices
    if any(i >= ds.p for i in idx):
        raise IndexOutOfRange(
            f"column index out of range for {ds.p} covariates: {idx}"
        )
    out = np.empty((ds.n, len(idx) + 1))
    out[:, 0] = 1.0
    if idx:
        out[:, 1:] = ds.covariates[:, list(idx)]
    return out


def _parse_float(text: str, row: int, col: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise NonNumericCell(
            f"row {row}, column {col!r}: cannot parse {text!r} as a number"
        ) from None
    if not math.isfinite(value):
        raise NonNumericCell(f"row {row}, column {col!r}: non-finite value {text!r}")
    return value


def load_csv(path, treatment_col: str, outcome_col: str) -> Dataset:
    """Read a header-first comma-separated file.

    Every column other than the treatment and outcome becomes a covariate, in
    header order. Row numbers in error messages count data rows from 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        for col in (treatment_col, outcome_col):
            if col not in header:
                raise MissingColumn(f"column {col!r} not found in {path}")
        t_pos = header.index(treatment_col)
        y_pos = header.index(outcome_col)
        cov_pos = [i for i in range(len(header)) if i not in (t_pos, y_pos)]

        z, y, x = [], [], []
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise NonNumericCell(
                    f"row {row_no}: expected {len(header)} fields, got {len(row)}"
                )
            t = row[t_pos].strip()
            if t not in ("0", "1"):
                raise NonBinaryTreatment(
                    f"row {row_no}, column {treatment_col!r}: {t!r} is not 0 or 1"
                )
            z.append(float(t))
            y.append(_parse_float(row[y_pos].strip(), row_no, outcome_col))
            x.append([_parse_float(row[i].strip(), row_no, header[i]) for i in cov_pos])

    covariates = np.array(x, dtype=float).reshape(len(z), len(cov_pos))
    return Dataset(
        np.array(z),
        np.array(y),
        covariates,
        tuple(header[i] for i in cov_pos),
        treatment_col,
        outcome_col,
    )


def save_csv(ds: Dataset, path) -> None:
    """Write ``ds`` so that :func:`load_csv` recovers it bit for bit."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([ds.treatment_name, ds.outcome_name, *ds.covariate_names])
        for zi, yi, xi in zip(ds.z, ds.y, ds.covariates):
            w.writerow([str(int(zi)), repr(float(yi)), *(repr(float(v)) for v in xi)])
