"""Shared fixtures and independent brute-force oracles.

The oracle helpers here work on plain ``{(x, y, z): mass}`` dicts with
explicit loops so they share no code with the package.
"""
from collections import defaultdict

import numpy as np
import pytest

from etvgate import FiniteJoint
from etvgate.oracle import exact_conditionals

# x in {0, 1}, y in {a, b}, z in {0, 1}; conditionals worked out by hand
HAND_MASSES = {
    (0, "a", 0): 0.10, (0, "b", 0): 0.10, (1, "a", 0): 0.20, (1, "b", 0): 0.05,
    (0, "a", 1): 0.20, (0, "b", 1): 0.05, (1, "a", 1): 0.05, (1, "b", 1): 0.25,
}
# sum over cells of P(x,z) * |r - s|, then doubled for binary normalization
HAND_ETV = 79 / 165
HAND_ORACLE = {
    (0, "a", 0): 0, (0, "b", 0): 1, (1, "a", 0): 1, (1, "b", 0): 0,
    (0, "a", 1): 1, (0, "b", 1): 0, (1, "a", 1): 0, (1, "b", 1): 1,
}


def brute_conditionals(masses):
    p_xz, p_z, p_yz = defaultdict(float), defaultdict(float), defaultdict(float)
    for (x, y, z), m in masses.items():
        p_xz[x, z] += m
        p_z[z] += m
        p_yz[y, z] += m
    return p_xz, p_z, p_yz


def brute_etv(masses):
    xs = {k[0] for k in masses}
    ys = {k[1] for k in masses}
    zs = {k[2] for k in masses}
    p_xz, p_z, p_yz = brute_conditionals(masses)
    total = 0.0
    for x in xs:
        for z in zs:
            if p_xz[x, z] <= 0:
                continue
            tv = 0.0
            for y in ys:
                r = masses.get((x, y, z), 0.0) / p_xz[x, z]
                s = p_yz[y, z] / p_z[z]
                tv += abs(r - s)
            total += p_xz[x, z] * 0.5 * tv
    return total / (1 - 1 / len(ys))


def random_masses(rng, nx, ny, nz, zero_frac=0.0):
    m = rng.random((nx, ny, nz))
    m[rng.random(m.shape) < zero_frac] = 0.0
    if m.sum() == 0:
        m[0, 0, 0] = 1.0
    m /= m.sum()
    return {(i, f"y{j}", k): float(m[i, j, k])
            for i in range(nx) for j in range(ny) for k in range(nz)}


def joint_from(masses):
    return FiniteJoint.from_masses(masses)


@pytest.fixture
def hand_joint():
    return joint_from(HAND_MASSES)


def independent_joint(px_z, py_z, pz):
    """X independent of Y given Z, built from conditional tables."""
    nx, nz = px_z.shape
    ny = py_z.shape[0]
    mass = np.einsum("xz,yz,z->xyz", px_z, py_z, pz)
    return FiniteJoint(tuple(range(nx)), tuple(f"y{j}" for j in range(ny)),
                       tuple(f"z{k}" for k in range(nz)), mass)


@pytest.fixture
def null_joint():
    px_z = np.array([[0.2, 0.5], [0.3, 0.3], [0.5, 0.2]])
    py_z = np.array([[0.4, 0.7], [0.6, 0.3]])
    return independent_joint(px_z, py_z, np.array([0.5, 0.5]))


def macm_joint(rng):
    mass = rng.random((4, 2, 3))
    mass /= mass.sum()
    return joint_from({(x, y, z): float(mass[i, j, k])
                       for i, x in enumerate(("a", "b", "c", "d"))
                       for j, y in enumerate((1.0, -1.0))
                       for k, z in enumerate((0, 1, 2))})


def macm_parts(joint):
    full, _ = exact_conditionals(joint)

    def mu(x, z):
        return full(np.ones(len(x)), x, z) - full(-np.ones(len(x)), x, z)

    p_xz = joint.mass.sum(axis=1)
    xs = np.array(joint.x_support, dtype=object)[:, None]
    table = {}
    for k, zv in enumerate(joint.z_support):
        zz = np.full((len(xs), 1), zv, dtype=object)
        table[zv] = float(p_xz[:, k] @ mu(xs, zz) / p_xz[:, k].sum())

    def mu_bar(z):
        return np.array([table[v] for v in np.asarray(z, dtype=object).reshape(len(z), -1)[:, 0]])

    return mu, mu_bar


def macm_r_values(mu, mu_bar, data, resamples):
    """R_i of the MACM inference, coded from the U = mu - E[mu | Z] form."""
    out = np.empty(data.n)
    for i in range(data.n):
        z = data.z[i : i + 1]
        u_i = mu(data.x[i : i + 1], z)[0] - mu_bar(z)[0]
        xs = resamples[i]
        u = mu(xs, np.repeat(z, len(xs), axis=0)) - mu_bar(z)[0]
        if data.y[i, 0] == 1:
            out[i] = np.mean(u < 0) - float(u_i < 0)
        else:
            out[i] = np.mean(u > 0) - float(u_i > 0)
    return out
