"""Exact TV, ETV and HETV on finite joint distributions.

These are brute-force ground truths: every quantity is obtained by
enumerating the full ``(x, y, z)`` table.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .data import LEVEL_SEP, parse_label, parse_value, prefix_key
from .errors import (
    DegenerateResponseError,
    HierarchyError,
    OutOfSupportError,
    ParameterError,
    SupportMismatchError,
)

MASS_TOL = 1e-12
TIE_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteDistribution:
    support: tuple
    probs: np.ndarray

    def __post_init__(self):
        support = tuple(self.support)
        probs = np.asarray(self.probs, dtype=float)
        if probs.shape != (len(support),):
            raise ParameterError("probs must have one entry per support value")
        if len(set(support)) != len(support):
            raise ParameterError("support values must be distinct")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > MASS_TOL:
            raise ParameterError("probs must be non-negative and sum to 1")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)


def total_variation(p: DiscreteDistribution, q: DiscreteDistribution) -> float:
    """Half the L1 distance between two distributions on the same support."""
    if set(p.support) != set(q.support) or len(p.support) != len(q.support):
        raise SupportMismatchError("distributions have different supports")
    order = {v: i for i, v in enumerate(q.support)}
    qp = q.probs[[order[v] for v in p.support]]
    return float(min(1.0, 0.5 * np.abs(p.probs - qp).sum()))


@dataclass(frozen=True)
class FiniteJoint:
    """Joint pmf over finite supports, stored as a dense ``(nx, ny, nz)`` table.

    Labels in ``y_support`` are scalars (one level) or equal-length tuples
    (hierarchical levels, coarsest first).
    """

    x_support: tuple
    y_support: tuple
    z_support: tuple
    mass: np.ndarray

    def __post_init__(self):
        supports = [tuple(s) for s in (self.x_support, self.y_support, self.z_support)]
        for name, s in zip("xyz", supports):
            if not s:
                raise ParameterError(f"{name} support is empty")
            if len(set(s)) != len(s):
                raise ParameterError(f"{name} support has duplicates")
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != tuple(len(s) for s in supports):
            raise ParameterError(f"mass shape {mass.shape} does not match supports")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > MASS_TOL:
            raise ParameterError("masses must be non-negative and sum to 1")
        levels = {len(y) if isinstance(y, tuple) else 1 for y in supports[1]}
        if len(levels) != 1 or (levels != {1} and not all(isinstance(y, tuple) for y in supports[1])):
            raise HierarchyError("y labels must all have the same number of levels")
        object.__setattr__(self, "x_support", supports[0])
        object.__setattr__(self, "y_support", supports[1])
        object.__setattr__(self, "z_support", supports[2])
        object.__setattr__(self, "mass", mass)
        if self.levels > 1:
            for k in range(2, self.levels + 1):
                _check_level(self.y_support, k)

    @classmethod
    def from_masses(cls, masses: dict) -> "FiniteJoint":
        """Build from ``{(x, y, z): mass}``; supports are taken in first-seen order."""
        xs, ys, zs = {}, {}, {}
        for x, y, z in masses:
            xs.setdefault(x, len(xs))
            ys.setdefault(y, len(ys))
            zs.setdefault(z, len(zs))
        table = np.zeros((len(xs), len(ys), len(zs)))
        for (x, y, z), m in masses.items():
            table[xs[x], ys[y], zs[z]] += m
        return cls(tuple(xs), tuple(ys), tuple(zs), table)

    @property
    def levels(self) -> int:
        y = self.y_support[0]
        return len(y) if isinstance(y, tuple) else 1

    @property
    def y_keys(self) -> tuple:
        return tuple(prefix_key(y, self.levels) for y in self.y_support)

    def marginals(self):
        """``(p_xz, r_y_given_xz, s_y_given_z)``; undefined conditionals are 0."""
        p_xz = self.mass.sum(axis=1)
        p_z = p_xz.sum(axis=0)
        p_yz = self.mass.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            r = np.where(p_xz[:, None, :] > 0, self.mass / p_xz[:, None, :], 0.0)
            s = np.where(p_z[None, :] > 0, p_yz / p_z[None, :], 0.0)
        return p_xz, r, s

    def coarsen(self, k: int) -> "FiniteJoint":
        """Marginalize labels to their length-``k`` prefixes."""
        if not 1 <= k <= self.levels:
            raise HierarchyError(f"level {k} out of range 1..{self.levels}")
        if self.levels == 1:
            return self
        keys = [prefix_key(y, k) for y in self.y_support]
        uniq = list(dict.fromkeys(keys))
        table = np.zeros((len(self.x_support), len(uniq), len(self.z_support)))
        for j, key in enumerate(keys):
            table[:, uniq.index(key), :] += self.mass[:, j, :]
        labels = [tuple(u.split(LEVEL_SEP)) if LEVEL_SEP in u else u for u in uniq]
        return FiniteJoint(self.x_support, tuple(labels), self.z_support, table)


def _check_level(y_support, k):
    parent = {}
    for y in y_support:
        if parent.setdefault(y[k - 1], y[: k - 1]) != y[: k - 1]:
            raise HierarchyError(
                f"level {k} value {y[k - 1]!r} appears under more than one prefix"
            )


def etv_exact(joint: FiniteJoint) -> float:
    """Normalized expected TV between L(Y|X,Z) and L(Y|Z), by enumeration."""
    ny = len(joint.y_support)
    if ny < 2:
        raise DegenerateResponseError("ETV needs at least two response values")
    p_xz, r, s = joint.marginals()
    gap = np.abs(r - s[None, :, :])
    # same tie band as the oracle classifier, so independence gives exactly 0
    gap[gap <= TIE_TOL] = 0.0
    tv = 0.5 * gap.sum(axis=1)
    tv = np.where(p_xz > 0, tv, 0.0)
    value = float((p_xz * tv).sum()) / (1.0 - 1.0 / ny)
    return min(max(value, 0.0), 1.0)


def hetv_exact(joint: FiniteJoint, weights: Sequence[float]) -> float:
    """Weighted sum of per-level ETV increments over a label hierarchy."""
    w = np.asarray(weights, dtype=float)
    K = joint.levels
    if w.shape != (K,):
        raise ParameterError(f"need {K} weights, got {w.size}")
    if np.any(w < 0):
        raise ParameterError("weights must be non-negative")
    return float(np.dot(w, hetv_levels(joint)))


def hetv_levels(joint: FiniteJoint) -> np.ndarray:
    """``[(1-1/|Y_1|)ETV_1, HETV_2, ..., HETV_K]`` for a K-level joint."""
    scaled = []
    for k in range(1, joint.levels + 1):
        level = joint.coarsen(k)
        ny = len(level.y_support)
        scaled.append(0.0 if ny < 2 else (1.0 - 1.0 / ny) * etv_exact(level))
    scaled = np.array(scaled)
    out = np.diff(scaled, prepend=0.0)
    out[(out < 0) & (out > -MASS_TOL)] = 0.0
    return out


class OracleClassifier:
    """``f(x, y, z) = 1{p(y|x,z) > p(y|z)}`` computed from a known joint.

    Differences within ``TIE_TOL`` count as ties and score 0.
    """

    def __init__(self, joint: FiniteJoint):
        self.joint = joint
        p_xz, r, s = joint.marginals()
        self.table = np.where(r - s[None, :, :] > TIE_TOL, 1.0, 0.0)
        self._ix = _Indexer(joint)

    def __call__(self, x, y, z) -> np.ndarray:
        i, j, k = self._ix(x, y, z)
        return self.table[i, j, k]


class _Indexer:
    # maps value arrays to table indices via pandas hash indexes
    def __init__(self, joint: FiniteJoint):
        self.x = pd.Index(list(joint.x_support), dtype=object)
        self.y = pd.Index(list(joint.y_keys), dtype=object)
        self.z = pd.Index(list(joint.z_support), dtype=object)

    @staticmethod
    def _lookup(index, values, name):
        values = np.asarray(values, dtype=object)
        if values.ndim == 2:
            if values.shape[1] != 1:
                raise OutOfSupportError(f"{name} must be a single column")
            values = values[:, 0]
        codes = index.get_indexer(values)
        if np.any(codes < 0):
            bad = values[np.argmax(codes < 0)]
            raise OutOfSupportError(f"{name} value {bad!r} is outside the joint's support")
        return codes

    def __call__(self, x, y, z):
        return self._lookup(self.x, x, "x"), self._lookup(self.y, y, "y"), self._lookup(self.z, z, "z")


def oracle_classifier(joint: FiniteJoint) -> OracleClassifier:
    return OracleClassifier(joint)


def exact_conditionals(joint: FiniteJoint):
    """Vectorized ``p(y|x,z)`` and ``p(y|z)`` lookups for use as working models."""
    _, r, s = joint.marginals()
    ix = _Indexer(joint)

    def full(y, x, z):
        i, j, k = ix(x, y, z)
        return r[i, j, k]

    def reduced(y, z):
        j = ix._lookup(ix.y, y, "y")
        k = ix._lookup(ix.z, z, "z")
        return s[j, k]

    return full, reduced


def read_joint(path) -> FiniteJoint:
    """Read a ``x, y, z, mass`` table (CSV with header; ``y`` levels '/'-joined)."""
    masses = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y", "z", "mass"} - set(h.strip() for h in (reader.fieldnames or []))
        if missing:
            raise ParameterError(f"joint table is missing columns {sorted(missing)}")
        for row in reader:
            row = {k.strip(): v for k, v in row.items()}
            key = (parse_value(row["x"]), parse_label(row["y"]), parse_value(row["z"]))
            masses[key] = masses.get(key, 0.0) + float(row["mass"])
    return FiniteJoint.from_masses(masses)


def write_joint(joint: FiniteJoint, path) -> None:
    def fmt(v):
        return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "z", "mass"])
        for i, x in enumerate(joint.x_support):
            for j, y in enumerate(joint.y_support):
                for k, z in enumerate(joint.z_support):
                    label = LEVEL_SEP.join(fmt(v) for v in y) if isinstance(y, tuple) else fmt(y)
                    w.writerow([fmt(x), label, fmt(z), repr(float(joint.mass[i, j, k]))])
