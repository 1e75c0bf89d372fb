"""Current status observations ``(v, delta, z, w)`` and CSV ingestion."""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Dataset", "DataError", "read_csv", "write_csv"]


class DataError(ValueError):
    """Malformed or inadmissible data."""


@dataclass(frozen=True)
class Dataset:
    """A sample of current status records.

    Attributes
    ----------
    v : ndarray, shape (n,)
        Monitoring (censoring) times.
    delta : ndarray of int, shape (n,)
        ``1`` if the event had occurred by ``v``.
    z : ndarray, shape (n, d)
        Linear covariates; ``d`` may be zero.
    w : ndarray, shape (n,)
        Covariate entering through the smooth effect.
    """

    v: np.ndarray
    delta: np.ndarray
    z: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=float).ravel()
        n = v.size
        delta = np.asarray(self.delta).ravel()
        z = np.asarray(self.z, dtype=float)
        if z.ndim == 1:
            z = z.reshape(n, -1) if n else z.reshape(0, 0)
        w = np.asarray(self.w, dtype=float).ravel()
        if delta.size != n or w.size != n or z.shape[0] != n:
            raise DataError("v, delta, z and w must describe the same number of records")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(z)) and np.all(np.isfinite(w))):
            raise DataError("data contain non-finite values")
        if not np.all((delta == 0) | (delta == 1)):
            raise DataError("delta must be 0 or 1")
        for name, arr in (("v", v), ("delta", delta.astype(np.int64)), ("z", z), ("w", w)):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.v.size

    @property
    def d(self) -> int:
        return self.z.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.v[idx], self.delta[idx], self.z[idx], self.w[idx])

    def sorted_by_v(self) -> "Dataset":
        return self.subset(np.argsort(self.v, kind="stable"))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.v, self.delta, self.z, self.w):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def read_csv(path) -> Dataset:
    """Read a CSV with header ``v,delta,z1,...,zd,w``.

    Raises
    ------
    DataError
        On a malformed header or row; the message names the 1-based data row.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        zcols = [h for h in header if h not in ("v", "delta", "w")]
        expected = ["v", "delta"] + [f"z{j}" for j in range(1, len(zcols) + 1)] + ["w"]
        if header != expected:
            raise DataError(f"{path}: header must be {','.join(expected)}, got {','.join(header)}")
        rows = []
        for lineno, row in enumerate(reader, start=1):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise DataError(f"row {lineno}: expected {len(header)} fields, found {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError:
                raise DataError(f"row {lineno}: non-numeric field") from None
            if not all(np.isfinite(vals)):
                raise DataError(f"row {lineno}: non-finite value")
            if vals[1] not in (0.0, 1.0):
                raise DataError(f"row {lineno}: delta must be 0 or 1, got {row[1].strip()}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no data rows")
    arr = np.array(rows)
    return Dataset(arr[:, 0], arr[:, 1].astype(np.int64), arr[:, 2:-1], arr[:, -1])


def write_csv(data: Dataset, path) -> None:
    header = ["v", "delta"] + [f"z{j}" for j in range(1, data.d + 1)] + ["w"]
    with Path(path).open("w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(header)
        for i in range(data.n):
            out.writerow(
                [f"{data.v[i]:.17g}", int(data.delta[i])]
                + [f"{x:.17g}" for x in data.z[i]]
                + [f"{data.w[i]:.17g}"]
            )
