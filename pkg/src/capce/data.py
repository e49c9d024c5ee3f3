"""Two-sample IV datasets and CSV ingestion.

Estimation runs on two samples: sample 1 holds (x, w, z) triples and
sample 2 holds (y, z) pairs.  They may come from one joint observational
CSV (the same rows feed both samples, and bootstrap resampling then
keeps them paired) or from two separate files.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np


class MissingColumn(KeyError):
    """A schema column is absent from the CSV header."""


class EmptyAfterFiltering(ValueError):
    """No rows survive the missing-value filter."""


class ParseError(ValueError):
    """Structurally malformed CSV row."""

    def __init__(self, row, col, message):
        super().__init__(f"row {row}, column {col!r}: {message}")
        self.row = row
        self.col = col


class TooFewRecords(ValueError):
    """Dataset too small for the requested split."""


@dataclass(frozen=True)
class ColumnSchema:
    """Maps CSV columns onto the treatment/outcome/instrument/covariate roles."""

    treatment_col: str
    outcome_col: str
    instrument_col: str
    covariate_cols: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "covariate_cols", tuple(self.covariate_cols))
        names = [self.treatment_col, self.outcome_col, self.instrument_col,
                 *self.covariate_cols]
        if len(set(names)) != len(names):
            raise ValueError(f"schema roles must name distinct columns, got {names}")

    @property
    def d(self):
        return len(self.covariate_cols)


@dataclass(frozen=True)
class TwoSampleDataset:
    """The (x, w, z) sample and the (y, z) sample.

    Attributes
    ----------
    x, w, z1 : ndarray
        Sample 1: treatment (N1,), covariates (N1, d), instrument (N1,).
    y, z2 : ndarray
        Sample 2: outcome (N2,), instrument (N2,).
    joint : bool
        True when both samples come from the same rows (row i of sample 1
        and row i of sample 2 are the same observation).  Controls paired
        bootstrap resampling.
    """

    x: np.ndarray
    w: np.ndarray
    z1: np.ndarray
    y: np.ndarray
    z2: np.ndarray
    joint: bool = False
    schema: ColumnSchema | None = field(default=None, compare=False)

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.x, dtype=float))
        z1 = np.atleast_1d(np.asarray(self.z1, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        z2 = np.atleast_1d(np.asarray(self.z2, dtype=float))
        w = np.asarray(self.w, dtype=float)
        if w.ndim == 1:
            w = w[:, None] if w.size == x.size and x.size else w.reshape(x.size, -1)
        if w.ndim != 2 or w.shape[0] != x.shape[0]:
            raise ValueError(f"covariate block shape {w.shape} does not match N1={x.shape[0]}")
        if z1.shape != x.shape:
            raise ValueError("sample 1 columns have mismatched lengths")
        if z2.shape != y.shape:
            raise ValueError("sample 2 columns have mismatched lengths")
        if x.size < 1 or y.size < 1:
            raise ValueError("both samples need at least one record")
        for name, arr in (("x", x), ("w", w), ("z1", z1), ("y", y), ("z2", z2)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite values in {name}")
            arr.setflags(write=False)
        if self.joint and x.shape[0] != y.shape[0]:
            raise ValueError("joint datasets must have N1 == N2")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z2", z2)

    @property
    def n1(self):
        return self.x.shape[0]

    @property
    def n2(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.w.shape[1]

    def z_combined(self):
        """Instrument values of both samples concatenated, length N1 + N2."""
        return np.concatenate([self.z1, self.z2])

    def take(self, idx1, idx2=None):
        """Row subset: idx1 into sample 1 and idx2 into sample 2.

        When the dataset is joint and idx2 is omitted, the same rows are
        taken from both samples (paired resampling).
        """
        if idx2 is None:
            if not self.joint:
                raise ValueError("idx2 required for non-joint datasets")
            idx2 = idx1
        return replace(self, x=self.x[idx1], w=self.w[idx1], z1=self.z1[idx1],
                       y=self.y[idx2], z2=self.z2[idx2])


_MISSING = {"", "na", "nan", "n/a", "null", "."}


def _parse_cell(text):
    """Parse one CSV cell; returns a float or None for a missing value.

    Recognized missing markers: "NA", empty string, and anything that does
    not parse as a finite real.
    """
    s = text.strip()
    if s.lower() in _MISSING:
        return None
    try:
        v = float(s)
    except ValueError:
        return None
    return v if math.isfinite(v) else None


def _read_rows(path, columns):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(0, "", "empty file") from None
        header = [h.strip() for h in header]
        pos = {}
        for name in columns:
            if name not in header:
                raise MissingColumn(name)
            pos[name] = header.index(name)
        rows = []
        for i, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            if len(raw) != len(header):
                raise ParseError(i, "", f"expected {len(header)} fields, found {len(raw)}")
            vals = [_parse_cell(raw[pos[name]]) for name in columns]
            if any(v is None for v in vals):
                continue
            rows.append(vals)
    return rows


def load_joint_csv(path, schema):
    """Load joint observational data and split it by role into two samples.

    Rows with a missing or non-numeric value in any schema column are
    dropped; the surviving rows populate both sample 1 (x, w, z) and
    sample 2 (y, z), so N1 == N2 and the dataset is flagged joint.

    Raises
    ------
    MissingColumn
        If a schema column is absent from the header.
    EmptyAfterFiltering
        If no row survives the filter.
    ParseError
        If a row has the wrong number of fields.
    """
    columns = [schema.treatment_col, schema.outcome_col, schema.instrument_col,
               *schema.covariate_cols]
    rows = _read_rows(path, columns)
    if not rows:
        raise EmptyAfterFiltering(f"no usable rows in {path}")
    arr = np.asarray(rows, dtype=float)
    x = arr[:, 0]
    y = arr[:, 1]
    z = arr[:, 2]
    w = arr[:, 3:]
    return TwoSampleDataset(x=x, w=w, z1=z, y=y, z2=z.copy(), joint=True, schema=schema)


def load_two_sample_csvs(path1, path2, schema):
    """Load pre-split samples: path1 holds (x, w, z), path2 holds (y, z)."""
    cols1 = [schema.treatment_col, schema.instrument_col, *schema.covariate_cols]
    rows1 = _read_rows(path1, cols1)
    rows2 = _read_rows(path2, [schema.outcome_col, schema.instrument_col])
    if not rows1 or not rows2:
        raise EmptyAfterFiltering("a sample file has no usable rows")
    arr1 = np.asarray(rows1, dtype=float)
    arr2 = np.asarray(rows2, dtype=float)
    return TwoSampleDataset(x=arr1[:, 0], w=arr1[:, 2:], z1=arr1[:, 1],
                            y=arr2[:, 0], z2=arr2[:, 1], joint=False, schema=schema)


def write_joint_csv(path, ds, schema=None):
    """Write a joint dataset back to CSV with round-trip exact floats.

    Only valid for joint datasets (one row per paired observation).
    """
    if not ds.joint:
        raise ValueError("write_joint_csv needs a joint dataset")
    schema = schema or ds.schema
    if schema is None:
        cov = tuple(f"w{i + 1}" for i in range(ds.d))
        schema = ColumnSchema("x", "y", "z", cov)
    header = [schema.treatment_col, schema.outcome_col, schema.instrument_col,
              *schema.covariate_cols]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(ds.n1):
            row = [ds.x[i], ds.y[i], ds.z1[i], *ds.w[i]]
            writer.writerow([repr(float(v)) for v in row])


def _split_indices(n, test_fraction, rng):
    n_test = int(math.floor(n * test_fraction))
    if n_test < 1 or n - n_test < 1:
        raise TooFewRecords(
            f"fraction {test_fraction} leaves an empty side for n={n}")
    perm = rng.permutation(n)
    return np.sort(perm[n_test:]), np.sort(perm[:n_test])


def split_train_test(ds, test_fraction, seed):
    """Deterministic train/test split for regularizer selection.

    The test side gets floor(n * test_fraction) records, the remainder
    stays in training.  The two samples are split independently, so the
    results are not joint even when the input was.

    Returns
    -------
    (TwoSampleDataset, TwoSampleDataset)
        Train and test datasets.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    if ds.n1 < 2 or ds.n2 < 2:
        raise TooFewRecords("each sample needs at least 2 records to split")
    rng = np.random.default_rng(seed)
    tr1, te1 = _split_indices(ds.n1, test_fraction, rng)
    tr2, te2 = _split_indices(ds.n2, test_fraction, rng)
    train = replace(ds, x=ds.x[tr1], w=ds.w[tr1], z1=ds.z1[tr1],
                    y=ds.y[tr2], z2=ds.z2[tr2], joint=False)
    test = replace(ds, x=ds.x[te1], w=ds.w[te1], z1=ds.z1[te1],
                   y=ds.y[te2], z2=ds.z2[te2], joint=False)
    return train, test
