"""The observed sample and its CSV format."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import HierarchyError, ParameterError

LEVEL_SEP = "/"


def prefix_key(label, k: int):
    """Key of the length-``k`` prefix of a hierarchical label.

    Scalar labels are single-level and returned unchanged; tuple labels are
    joined with ``'/'``.
    """
    if isinstance(label, tuple):
        if not 1 <= k <= len(label):
            raise HierarchyError(f"level {k} out of range for label {label!r}")
        return LEVEL_SEP.join(str(v) for v in label[:k])
    if k != 1:
        raise HierarchyError(f"scalar label {label!r} has a single level")
    return label


def parse_value(text: str):
    """Decimal literals become floats, anything else stays a string."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        return text


def parse_label(text: str):
    parts = text.split(LEVEL_SEP)
    if len(parts) == 1:
        return parse_value(parts[0])
    return tuple(parse_value(p) for p in parts)


def _as_2d(a, n=None) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2:
        raise ParameterError("columns must be 1-D or 2-D")
    if n is not None and a.shape[0] != n:
        raise ParameterError(f"expected {n} rows, got {a.shape[0]}")
    return a


@dataclass(frozen=True)
class Dataset:
    """``n`` rows of ``(x, y, z)``.

    ``x`` is ``(n, dx)``, ``z`` is ``(n, dz)`` (``dz`` may be 0) and ``y`` is
    ``(n, K)`` with one column per hierarchy level.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim == 1:
            y = y.reshape(-1, 1)
        n = y.shape[0]
        if n < 1:
            raise ParameterError("dataset needs at least one row")
        if y.shape[1] < 1:
            raise ParameterError("y needs at least one level")
        z = np.empty((n, 0)) if self.z is None else _as_2d(self.z, n)
        object.__setattr__(self, "x", _as_2d(self.x, n))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if y.shape[1] > 1:
            _check_prefix_consistency(y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def levels(self) -> int:
        return self.y.shape[1]

    def labels(self, k: int | None = None) -> np.ndarray:
        """1-D array of level-``k`` prefix keys (default: the full label)."""
        K = self.levels
        k = K if k is None else k
        if not 1 <= k <= K:
            raise HierarchyError(f"level {k} out of range 1..{K}")
        if K == 1:
            return self.y[:, 0]
        out = np.empty(self.n, dtype=object)
        out[:] = [LEVEL_SEP.join(str(v) for v in row[:k]) for row in self.y]
        return out

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.x[idx], self.y[idx], self.z[idx])

    def focus(self, j: int) -> "Dataset":
        """Move column ``j`` of a vector ``x`` into the role of X.

        The remaining x columns are prepended to z, which is how the
        simulation designs condition on ``X_{-j}`` (and any extra z columns).
        """
        p = self.x.shape[1]
        if not 0 <= j < p:
            raise ParameterError(f"feature index {j} out of range 0..{p - 1}")
        rest = np.delete(self.x, j, axis=1)
        return Dataset(self.x[:, [j]], self.y, np.hstack([rest, self.z]))


def _check_prefix_consistency(y: np.ndarray) -> None:
    # level-k value must determine the coarser prefix
    for k in range(1, y.shape[1]):
        parent = {}
        for row in y:
            key = row[k]
            pre = tuple(row[:k])
            if parent.setdefault(key, pre) != pre:
                raise HierarchyError(
                    f"level {k + 1} value {key!r} appears under prefixes "
                    f"{parent[key]!r} and {pre!r}"
                )


def _format(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def read_csv(path) -> Dataset:
    """Read a dataset with header ``y, x[_1..], z_1..z_d``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        rows = [r for r in reader if r]
    if "y" not in header:
        raise ParameterError("dataset header must contain a 'y' column")
    xcols = [i for i, h in enumerate(header) if h == "x" or h.startswith("x_")]
    zcols = [i for i, h in enumerate(header) if h.startswith("z_") or h == "z"]
    if not xcols:
        raise ParameterError("dataset header must contain an 'x' column")
    yi = header.index("y")
    labels = [parse_label(r[yi]) for r in rows]
    K = {len(l) if isinstance(l, tuple) else 1 for l in labels}
    if len(K) != 1:
        raise HierarchyError("all labels must have the same number of levels")
    K = K.pop()
    y = np.empty((len(rows), K), dtype=object)
    for i, l in enumerate(labels):
        y[i] = l if isinstance(l, tuple) else (l,)
    if all(isinstance(v, float) for v in y.ravel()):
        y = y.astype(float)

    def column_block(cols):
        vals = [[parse_value(r[c]) for c in cols] for r in rows]
        arr = np.array(vals, dtype=object).reshape(len(rows), len(cols))
        if all(isinstance(v, float) for v in arr.ravel()):
            return arr.astype(float)
        return arr

    return Dataset(column_block(xcols), y, column_block(zcols))


def write_csv(data: Dataset, path) -> None:
    dx, dz = data.x.shape[1], data.z.shape[1]
    xnames = ["x"] if dx == 1 else [f"x_{i + 1}" for i in range(dx)]
    znames = [f"z_{i + 1}" for i in range(dz)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["y"] + xnames + znames)
        for i in range(data.n):
            label = LEVEL_SEP.join(_format(v) for v in data.y[i])
            w.writerow([label] + [_format(v) for v in data.x[i]] + [_format(v) for v in data.z[i]])
