"""Model-X conditional samplers and the synthetic designs used in the experiments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .data import Dataset
from .errors import OutOfSupportError, ParameterError
from .oracle import FiniteJoint, _Indexer
from .rng import stream


@dataclass(frozen=True)
class Ar1Gaussian:
    """Zero-mean Gaussian with covariance ``rho ** |i - j|``."""

    p: int
    rho: float

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError("p must be >= 1")
        if not -1.0 < self.rho < 1.0:
            raise ParameterError("rho must lie in (-1, 1)")

    @property
    def cov(self) -> np.ndarray:
        idx = np.arange(self.p)
        return self.rho ** np.abs(idx[:, None] - idx[None, :])

    def draw(self, n: int, rng: np.random.Generator) -> np.ndarray:
        chol = np.linalg.cholesky(self.cov)
        return rng.standard_normal((n, self.p)) @ chol.T


class GaussianConditionalSampler:
    """Draws ``X_j | X_{-j}`` for an AR(1) Gaussian.

    ``z`` passed to :meth:`sample` must start with the ``p - 1`` other
    coordinates in their original order; extra trailing columns are ignored.
    """

    def __init__(self, model: Ar1Gaussian, j: int):
        if not 0 <= j < model.p:
            raise ParameterError(f"coordinate {j} out of range 0..{model.p - 1}")
        cov = model.cov
        rest = [i for i in range(model.p) if i != j]
        s_rr = cov[np.ix_(rest, rest)]
        s_jr = cov[j, rest]
        self.weights = np.linalg.solve(s_rr, s_jr) if rest else np.zeros(0)
        self.var = float(cov[j, j] - s_jr @ self.weights) if rest else float(cov[j, j])
        self.p = model.p

    def moments(self, z) -> tuple[np.ndarray, float]:
        z = np.asarray(z, dtype=float)
        return z[:, : self.p - 1] @ self.weights, self.var

    def sample(self, z, J, rng):
        mean, var = self.moments(z)
        draws = mean[:, None] + np.sqrt(var) * rng.standard_normal((mean.shape[0], J))
        return draws[:, :, None]


def gaussian_conditional_sampler(model: Ar1Gaussian, j: int) -> GaussianConditionalSampler:
    return GaussianConditionalSampler(model, j)


class FiniteJointSampler:
    """Exact ``L(X | Z)`` of a finite joint, by inverse-CDF lookup."""

    def __init__(self, joint: FiniteJoint):
        p_xz = joint.mass.sum(axis=1)
        p_z = p_xz.sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            cond = np.where(p_z > 0, p_xz / p_z, 0.0)
        self.cdf = np.cumsum(cond, axis=0).T  # (nz, nx)
        self.has_mass = p_z > 0
        self.values = np.empty(len(joint.x_support), dtype=object)
        self.values[:] = list(joint.x_support)
        self._ix = _Indexer(joint)

    def sample(self, z, J, rng):
        zi = self._ix._lookup(self._ix.z, z, "z")
        if not np.all(self.has_mass[zi]):
            raise OutOfSupportError("conditioning on a zero-probability z value")
        u = rng.random((zi.size, J))
        cdf = self.cdf[zi]
        idx = (u[:, :, None] >= cdf[:, None, :]).sum(axis=2)
        idx = np.minimum(idx, len(self.values) - 1)
        return self.values[idx][:, :, None]


class CategoricalSampler:
    """X drawn from a fixed categorical distribution, independently of Z."""

    def __init__(self, values, probs=None):
        self.values = np.empty(len(values), dtype=object)
        self.values[:] = list(values)
        probs = np.full(len(values), 1.0 / len(values)) if probs is None else np.asarray(probs, float)
        if probs.shape != (len(values),) or np.any(probs < 0) or abs(probs.sum() - 1) > 1e-12:
            raise ParameterError("probs must be a distribution over values")
        self.cdf = np.cumsum(probs)

    def sample(self, z, J, rng):
        m = np.asarray(z).shape[0]
        idx = np.searchsorted(self.cdf, rng.random((m, J)), side="right")
        return self.values[np.minimum(idx, len(self.values) - 1)][:, :, None]


def finite_joint_sampler(joint: FiniteJoint, n: int, seed: int) -> tuple[Dataset, FiniteJointSampler]:
    """``n`` i.i.d. rows from a finite joint, plus its exact conditional sampler."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    rng = stream(seed, "data")
    flat = joint.mass.ravel()
    cells = rng.choice(flat.size, size=n, p=flat / flat.sum())
    i, j, k = np.unravel_index(cells, joint.mass.shape)
    x = np.empty((n, 1), dtype=object)
    z = np.empty((n, 1), dtype=object)
    x[:, 0] = np.asarray(list(joint.x_support) + [None], dtype=object)[:-1][i]
    z[:, 0] = np.asarray(list(joint.z_support) + [None], dtype=object)[:-1][k]
    K = joint.levels
    y = np.empty((n, K), dtype=object)
    labels = [lab if isinstance(lab, tuple) else (lab,) for lab in joint.y_support]
    for row, jj in enumerate(j):
        y[row] = labels[jj]
    return Dataset(x, y, z), FiniteJointSampler(joint)


def gen_probit_data(beta, model: Ar1Gaussian, n: int, seed: int) -> Dataset:
    """``Y | X ~ Bern(Phi(X @ beta))`` with ``X`` AR(1) Gaussian.

    All of X is stored in ``x``; use :meth:`Dataset.focus` to pick a feature.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (model.p,):
        raise ParameterError(f"beta must have length {model.p}")
    rng = stream(seed, "data")
    X = model.draw(n, rng)
    y = (rng.random(n) < ndtr(X @ beta)).astype(float)
    return Dataset(X, y, None)


def gen_interaction_data(beta, k: int, model: Ar1Gaussian, n: int, seed: int) -> Dataset:
    """``Y ~ Bern(Phi(beta_k X_k Z + sum_{j != k} beta_j X_j))``, ``Z ~ Bern(0.5)``.

    The binary flag Z is the single column of ``z``; ``focus(k)`` yields the
    target design with conditioning set ``(X_{-k}, Z)``.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (model.p,):
        raise ParameterError(f"beta must have length {model.p}")
    if not 0 <= k < model.p:
        raise ParameterError(f"interacting index {k} out of range")
    rng = stream(seed, "data")
    X = model.draw(n, rng)
    flag = (rng.random(n) < 0.5).astype(float)
    eta = X @ beta - beta[k] * X[:, k] + beta[k] * X[:, k] * flag
    y = (rng.random(n) < ndtr(eta)).astype(float)
    return Dataset(X, y, flag[:, None])


class ProbitModels:
    """True ``p(y|x,z)`` and ``p(y|z)`` for the probit designs, after ``focus(j)``.

    With ``interaction=k`` the design is the interaction model with
    interacting index ``k`` and the flag as the last z column.
    """

    def __init__(self, beta, model: Ar1Gaussian, j: int, interaction: int | None = None):
        self.beta = np.asarray(beta, dtype=float)
        self.p = model.p
        self.j = j
        self.k = interaction
        self.cond = GaussianConditionalSampler(model, j)

    def _coefs(self, z):
        z = np.asarray(z, dtype=float)
        rest = z[:, : self.p - 1]
        beta_rest = np.delete(self.beta, self.j)
        b = np.full(z.shape[0], self.beta[self.j])
        if self.k is not None:
            flag = z[:, self.p - 1]
            if self.k == self.j:
                b = b * flag
            else:
                pos = self.k if self.k < self.j else self.k - 1
                beta_rest = np.broadcast_to(beta_rest, rest.shape).copy()
                beta_rest[:, pos] *= flag
        a = (rest * beta_rest).sum(axis=1)
        return a, b

    @staticmethod
    def _pick(y, p1):
        y = np.asarray(y, dtype=float)
        return np.where(y == 1.0, p1, 1.0 - p1)

    def full(self, y, x, z):
        a, b = self._coefs(z)
        return self._pick(y, ndtr(a + b * np.asarray(x, dtype=float)[:, 0]))

    def reduced(self, y, z):
        a, b = self._coefs(z)
        mean, var = self.cond.moments(z)
        return self._pick(y, ndtr((a + b * mean) / np.sqrt(1.0 + b * b * var)))


@dataclass(frozen=True)
class ConjointDesign:
    """Ideal conjoint model: respondents are independents with probability ``q``;
    partisans pick the co-partisan candidate with probability ``p``."""

    q: float
    p: float

    def __post_init__(self):
        if not (0.0 <= self.q <= 1.0 and 0.0 <= self.p <= 1.0):
            raise ParameterError("q and p must lie in [0, 1]")


PARTY_PAIRS = ("DD", "DR", "RD", "RR")
RESPONDENT_TYPES = ("I", "D", "R")


def conjoint_ideal_joint(design: ConjointDesign) -> FiniteJoint:
    """Exact joint of (party pair, choice, respondent type).

    ``x`` is the pair (candidate 0 party, candidate 1 party), ``y = 1`` means
    candidate 1 was chosen, ``z`` is the respondent type.  Partisans are split
    evenly between D and R.
    """
    q, p = design.q, design.p
    pz = {"I": q, "D": (1.0 - q) / 2, "R": (1.0 - q) / 2}
    mass = np.zeros((4, 2, 3))
    for i, pair in enumerate(PARTY_PAIRS):
        for k, resp in enumerate(RESPONDENT_TYPES):
            if resp == "I" or pair[0] == pair[1]:
                p1 = 0.5
            elif pair[1] == resp:
                p1 = p
            else:
                p1 = 1.0 - p
            w = 0.25 * pz[resp]
            mass[i, 1, k] = w * p1
            mass[i, 0, k] = w * (1.0 - p1)
    return FiniteJoint(PARTY_PAIRS, (0, 1), RESPONDENT_TYPES, mass)


def gen_conjoint_ideal(design: ConjointDesign, n: int, seed: int) -> tuple[Dataset, FiniteJoint]:
    joint = conjoint_ideal_joint(design)
    data, _ = finite_joint_sampler(joint, n, seed)
    return data, joint


@dataclass(frozen=True)
class ProbitPreset:
    beta: tuple
    rho: float
    n: int
    interaction: bool = False

    @property
    def model(self) -> Ar1Gaussian:
        return Ar1Gaussian(len(self.beta), self.rho)

    def generate(self, j: int, n: int | None, seed: int) -> Dataset:
        """Focused dataset for feature ``j`` (the interacting index, for interaction designs)."""
        n = self.n if n is None else n
        if self.interaction:
            return gen_interaction_data(self.beta, j, self.model, n, seed).focus(j)
        return gen_probit_data(self.beta, self.model, n, seed).focus(j)

    def sampler(self, j: int) -> GaussianConditionalSampler:
        return GaussianConditionalSampler(self.model, j)

    def true_models(self, j: int) -> ProbitModels:
        return ProbitModels(self.beta, self.model, j, interaction=j if self.interaction else None)


PRESETS = {
    "probit-p4": ProbitPreset((0.0, 1.0, 2.0, 3.0), 0.3, 400),
    "probit-p10": ProbitPreset((0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0), 0.3, 1000),
    "interaction-p10": ProbitPreset((0.0, 0.0, 0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0), 0.3, 200,
                                    interaction=True),
    "conjoint-ideal": ConjointDesign(q=0.27, p=1.0),
}
