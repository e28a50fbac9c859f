"""Classification functions to plug into floodgate."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .data import Dataset
from .errors import NonConvergenceError, ParameterError, TrainingError
from .floodgate import (
    Classifier,
    ConditionalSampler,
    assign_folds,
    draw_resamples,
    loss_moments,
    z_quantile,
)
from .rng import derive_seed, stream

PROB_CLIP = 1e-9
DEFAULT_C_GRID = tuple(round(0.02 * i, 2) for i in range(16))
DEFAULT_RIDGE = 1e-2


# ---------------------------------------------------------------------------
# simple classifiers


class ConstantClassifier:
    def __init__(self, value: float = 0.5):
        if not 0.0 <= value <= 1.0:
            raise ParameterError("constant score must lie in [0, 1]")
        self.value = float(value)

    def __call__(self, x, y, z):
        return np.full(len(y), self.value)


class ShrunkClassifier:
    """``0.5 + factor * (f - 0.5)``: a deliberately weakened classifier."""

    def __init__(self, f: Classifier, factor: float):
        if not 0.0 <= factor <= 1.0:
            raise ParameterError("factor must lie in [0, 1]")
        self.f, self.factor = f, float(factor)

    def __call__(self, x, y, z):
        return 0.5 + self.factor * (np.asarray(self.f(x, y, z), dtype=float) - 0.5)


def fixed_trainer(f: Classifier):
    """Trainer that ignores its training data and always returns ``f``."""

    def train(data, sampler, seed):
        return f

    return train


# ---------------------------------------------------------------------------
# logistic working models


@dataclass(frozen=True)
class FeatureMap:
    """Selects columns of a numeric design and appends pairwise products.

    ``columns=None`` keeps every column.
    """

    columns: tuple | None = None
    interactions: tuple = ()

    def transform(self, design) -> np.ndarray:
        design = np.asarray(design, dtype=float)
        if design.ndim == 1:
            design = design[:, None]
        cols = range(design.shape[1]) if self.columns is None else self.columns
        parts = [design[:, list(cols)]]
        if self.interactions:
            parts.append(np.column_stack([design[:, a] * design[:, b] for a, b in self.interactions]))
        return np.hstack(parts)


@dataclass(frozen=True)
class LogisticModel:
    coefficients: np.ndarray
    intercept: float
    feature_map: FeatureMap = FeatureMap()
    diagnostics: dict = field(default_factory=dict, compare=False)

    def linear_predictor(self, design) -> np.ndarray:
        F = self.feature_map.transform(design)
        if F.shape[1] != self.coefficients.size:
            raise ParameterError(f"feature map gives {F.shape[1]} columns, model has {self.coefficients.size}")
        return self.intercept + F @ self.coefficients

    def predict_proba(self, design) -> np.ndarray:
        """``P(label = 1)`` per row."""
        return expit(self.linear_predictor(design))


def _penalized_loglik(A, y, w, b, ridge):
    eta = A @ b
    ll = np.sum(w * (y * eta - np.logaddexp(0.0, eta)))
    return ll - 0.5 * ridge * float(b[1:] @ b[1:])


def fit_logistic(features, labels, ridge: float = 0.0, max_iter: int = 100, tol: float = 1e-8,
                 weights=None, feature_map: FeatureMap | None = None) -> LogisticModel:
    """Ridge-penalized logistic regression by iteratively reweighted least squares.

    The intercept is not penalized.  Iteration stops once the largest
    parameter step (or the largest gradient component) drops below ``tol``,
    or after ``max_iter`` steps; ``diagnostics`` records which.

    Raises
    ------
    NonConvergenceError
        If ``ridge == 0`` and the data look separable (fitted probabilities
        saturate), in which case the MLE does not exist.
    """
    fmap = feature_map or FeatureMap()
    F = fmap.transform(features) if np.asarray(features).size else np.empty((len(labels), 0))
    y = np.asarray(labels, dtype=float)
    if F.shape[0] != y.size:
        raise ParameterError("features and labels have different lengths")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ParameterError("labels must be 0/1")
    if ridge < 0:
        raise ParameterError("ridge must be non-negative")
    w = np.ones(y.size) if weights is None else np.asarray(weights, dtype=float)
    A = np.hstack([np.ones((y.size, 1)), F])
    d = A.shape[1]
    pen = np.full(d, float(ridge))
    pen[0] = 0.0
    b = np.zeros(d)
    ll = _penalized_loglik(A, y, w, b, ridge)
    converged, reason, it = False, "max_iter", 0
    for it in range(1, max_iter + 1):
        p = expit(A @ b)
        grad = A.T @ (w * (y - p)) - pen * b
        if np.max(np.abs(grad)) < tol:
            converged, reason = True, "gradient"
            break
        H = (A * (w * p * (1.0 - p))[:, None]).T @ A + np.diag(pen)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        # step halving keeps the penalized likelihood non-decreasing
        t = 1.0
        for _ in range(30):
            cand = b + t * step
            ll_new = _penalized_loglik(A, y, w, cand, ridge)
            if ll_new >= ll - 1e-12 * (1 + abs(ll)):
                break
            t *= 0.5
        b, ll = cand, ll_new
        if np.max(np.abs(t * step)) < tol:
            converged, reason = True, "step"
            break
    eta = A @ b
    if ridge == 0 and (not np.all(np.isfinite(b)) or np.max(np.abs(eta)) > 30.0):
        raise NonConvergenceError(
            "logistic MLE did not converge (data look separable); use ridge > 0"
        )
    p = expit(eta)
    grad = A.T @ (w * (y - p)) - pen * b
    diag = {"converged": converged, "reason": reason, "iterations": it,
            "max_gradient": float(np.max(np.abs(grad)))}
    return LogisticModel(b[1:].copy(), float(b[0]), fmap, diag)


class LogisticWorkingModel:
    """Binary ``p(y | design)`` from a logistic fit; ``positive`` is the label for P = 1."""

    def __init__(self, model: LogisticModel, positive=1.0, use_x: bool = True):
        self.model = model
        self.positive = positive
        self.use_x = use_x

    def _design(self, x, z):
        z = np.asarray(z, dtype=float)
        if self.use_x:
            return np.hstack([np.asarray(x, dtype=float).reshape(z.shape[0], -1), z])
        return z

    def __call__(self, y, x, z=None):
        if not self.use_x:
            x, z = None, x
        p1 = self.model.predict_proba(self._design(x, z))
        return np.where(np.asarray(y) == self.positive, p1, 1.0 - p1)


@dataclass
class WorkingModelPair:
    """``full(y, x, z) ~ p(y|x,z)`` and ``reduced(y, z) ~ p(y|z)``."""

    full: Callable
    reduced: Callable


def logistic_family(kind: str = "logistic", interact_with: int = -1):
    """Feature maps ``(full, reduced)`` for the logistic working-model families.

    ``"logistic"`` uses raw columns.  ``"logistic_int"`` adds products of the
    z column ``interact_with`` (the binary flag in the interaction design)
    with every other column.
    """
    if kind == "logistic":
        return lambda dx, dz: (FeatureMap(), FeatureMap())
    if kind == "logistic_int":
        def maps(dx, dz):
            flag = interact_with % dz
            full_flag = dx + flag
            full = FeatureMap(None, tuple((full_flag, c) for c in range(dx + dz) if c != full_flag))
            red = FeatureMap(None, tuple((flag, c) for c in range(dz) if c != flag))
            return full, red
        return maps
    raise ParameterError(f"unknown logistic family {kind!r}")


def fit_working_models(train: Dataset, kind: str = "logistic", ridge: float = DEFAULT_RIDGE,
                       positive=1.0) -> WorkingModelPair:
    """Fit logistic ``p(y|x,z)`` and ``p(y|z)`` on the rows of ``train``."""
    y = train.labels()
    target = (np.asarray(y) == positive).astype(float)
    x = np.asarray(train.x, dtype=float)
    z = np.asarray(train.z, dtype=float)
    full_map, red_map = logistic_family(kind)(x.shape[1], z.shape[1])
    full = fit_logistic(np.hstack([x, z]), target, ridge=ridge, feature_map=full_map)
    if z.shape[1]:
        reduced = fit_logistic(z, target, ridge=ridge, feature_map=red_map)
    else:
        reduced = fit_logistic(np.empty((train.n, 0)), target, ridge=ridge)
    return WorkingModelPair(LogisticWorkingModel(full, positive),
                            LogisticWorkingModel(reduced, positive, use_x=False))


# ---------------------------------------------------------------------------
# threshold classifier


def likelihood_ratio_score(models: WorkingModelPair, x, y, z) -> np.ndarray:
    """``p1 / (p1 + p2)`` with both probabilities clipped away from 0 and 1."""
    p1 = np.clip(np.asarray(models.full(y, x, z), dtype=float), PROB_CLIP, 1.0 - PROB_CLIP)
    p2 = np.clip(np.asarray(models.reduced(y, z), dtype=float), PROB_CLIP, 1.0 - PROB_CLIP)
    return p1 / (p1 + p2)


def threshold_scores(phat, c: float) -> np.ndarray:
    phat = np.asarray(phat, dtype=float)
    return np.where(phat > 0.5 + c, 1.0, np.where(phat < 0.5 - c, 0.0, 0.5))


class ThresholdClassifier:
    """1 when ``p1/(p1+p2) > 0.5 + c``, 0 below ``0.5 - c``, 0.5 in between."""

    def __init__(self, models: WorkingModelPair, c: float = 0.0):
        if not 0.0 <= c <= 0.5:
            raise ParameterError(f"c must lie in [0, 0.5], got {c}")
        self.models = models
        self.c = float(c)

    def __call__(self, x, y, z):
        return threshold_scores(likelihood_ratio_score(self.models, x, y, z), self.c)


def threshold_classifier(models: WorkingModelPair, c: float = 0.0) -> ThresholdClassifier:
    return ThresholdClassifier(models, c)


def _phat_rows(models, data: Dataset, resamples):
    y = data.labels()
    n, J = resamples.shape[:2]
    orig = likelihood_ratio_score(models, data.x, y, data.z)
    fake = likelihood_ratio_score(models, resamples.reshape(n * J, -1), np.repeat(y, J),
                                  np.repeat(data.z, J, axis=0)).reshape(n, J)
    return orig, fake


def threshold_objectives(models: WorkingModelPair, data: Dataset, resamples, c_grid, alpha,
                         n_bound: int | None = None) -> np.ndarray:
    """``1 - mean - z_alpha * sd / sqrt(n_bound)`` of each candidate ``c`` on one evaluation set.

    ``n_bound`` defaults to the evaluation-set size.
    """
    z_alpha = z_quantile(alpha)
    n_bound = data.n if n_bound is None else n_bound
    orig, fake = _phat_rows(models, data, resamples)
    out = []
    for c in c_grid:
        losses = np.abs(threshold_scores(orig, c) - 1.0) + threshold_scores(fake, c).mean(axis=1)
        m, v = loss_moments(losses)
        out.append(1.0 - m - z_alpha * math.sqrt(v) / math.sqrt(n_bound))
    return np.array(out)


def select_threshold_cv(train: Dataset, sampler: ConditionalSampler, model_trainer: Callable,
                        c_grid: Sequence[float] = DEFAULT_C_GRID, m_folds: int = 10, J: int = 100,
                        alpha: float = 0.05, seed: int = 0, n_bound: int | None = None) -> float:
    """Choose the abstention half-width ``c`` by an inner cross-validation.

    Models are fit on each inner training part and every candidate is scored
    on the held-out part with the same resamples; the candidate with the
    largest average objective wins, ties going to the smaller ``c``.

    The objective's width term divides by ``sqrt(n_bound)`` so that it is on
    the scale of the final bound; the default is ``train.n``.  Scaling by the
    inner held-out size instead over-penalizes variance and favours
    abstaining everywhere.
    """
    n_bound = train.n if n_bound is None else n_bound
    grid = sorted(float(c) for c in c_grid)
    if not grid:
        raise ParameterError("c_grid is empty")
    if any(not 0.0 <= c <= 0.5 for c in grid):
        raise ParameterError("c_grid values must lie in [0, 0.5]")
    if len(grid) == 1:
        return grid[0]
    if train.n < 2 * m_folds:
        raise TrainingError(f"{train.n} rows are too few for {m_folds} inner folds")
    inner_seed = derive_seed(seed, "inner")
    folds = assign_folds(train.n, m_folds, inner_seed)
    resamples = draw_resamples(train, sampler, J, inner_seed)
    total = np.zeros(len(grid))
    for r in range(m_folds):
        fit_idx = np.flatnonzero(folds != r)
        eval_idx = np.flatnonzero(folds == r)
        models = model_trainer(train.subset(fit_idx))
        total += threshold_objectives(models, train.subset(eval_idx), resamples[eval_idx], grid, alpha,
                                      n_bound)
    avg = total / m_folds
    best = 0
    for i in range(1, len(grid)):
        if avg[i] > avg[best]:
            best = i
    return grid[best]


class ThresholdTrainer:
    """Trainer for cross-validated floodgate building :class:`ThresholdClassifier`.

    ``c`` is a number or ``"cv"`` (nested selection over ``c_grid``).  With
    ``models`` given, those fixed working models are used instead of fitting.
    """

    def __init__(self, kind: str = "logistic", c=0.0, c_grid=DEFAULT_C_GRID,
                 m_folds: int = 10, J: int = 100, alpha: float = 0.05, ridge: float = DEFAULT_RIDGE,
                 models: WorkingModelPair | None = None):
        if c != "cv" and not 0.0 <= float(c) <= 0.5:
            raise ParameterError(f"c must be 'cv' or lie in [0, 0.5], got {c}")
        self.kind, self.c, self.c_grid = kind, c, tuple(c_grid)
        self.m_folds, self.J, self.alpha, self.ridge = m_folds, J, alpha, ridge
        self.models = models
        self.chosen_c: list[float] = []
        if models is None:
            logistic_family(kind)

    @property
    def min_train_size(self) -> int:
        return 2 * self.m_folds if self.c == "cv" else 2

    def fit_models(self, train: Dataset) -> WorkingModelPair:
        if self.models is not None:
            return self.models
        return fit_working_models(train, self.kind, self.ridge)

    def __call__(self, train: Dataset, sampler: ConditionalSampler, seed: int) -> ThresholdClassifier:
        if self.c == "cv":
            c = select_threshold_cv(train, sampler, self.fit_models, self.c_grid, self.m_folds,
                                    self.J, self.alpha, seed)
        else:
            c = float(self.c)
        self.chosen_c.append(c)
        return ThresholdClassifier(self.fit_models(train), c)


# ---------------------------------------------------------------------------
# greedy discriminator


class _OneHot:
    def __init__(self, values):
        self.categories = list(dict.fromkeys(np.asarray(values, dtype=object).tolist()))

    def __call__(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=object)
        return np.column_stack([values == c for c in self.categories[1:]]).astype(float) \
            if len(self.categories) > 1 else np.empty((values.shape[0], 0))


def _numeric_block(a, encoders=None):
    a = np.asarray(a)
    if a.shape[1] == 0:
        return np.empty((a.shape[0], 0)), []
    try:
        return a.astype(float), None
    except (TypeError, ValueError):
        if encoders is None:
            encoders = [_OneHot(a[:, c]) for c in range(a.shape[1])]
        return np.hstack([enc(a[:, c]) for c, enc in enumerate(encoders)]), encoders


class GreedyFeatures:
    """Design for discriminating originals from resamples.

    Columns: x, z, one-hot y (first level dropped) and every x-by-y and
    z-by-y product.  Categorical columns are one-hot encoded on first use.
    """

    def __init__(self):
        self.y_enc = None
        self.x_enc = None
        self.z_enc = None

    def __call__(self, x, y, z) -> np.ndarray:
        if self.y_enc is None:
            self.y_enc = _OneHot(y)
        X, enc = _numeric_block(x, self.x_enc)
        self.x_enc = self.x_enc or enc
        Z, enc = _numeric_block(z, self.z_enc)
        self.z_enc = self.z_enc or enc
        Y = self.y_enc(y)
        XZ = np.hstack([X, Z])
        inter = [XZ * Y[:, [c]] for c in range(Y.shape[1])]
        return np.hstack([XZ, Y] + inter)


def logistic_discriminator(ridge: float = DEFAULT_RIDGE):
    """Discriminator trainer: weighted logistic regression on :class:`GreedyFeatures`."""

    def train(x, y, z, target, weights):
        feats = GreedyFeatures()
        model = fit_logistic(feats(x, y, z), target, ridge=ridge, weights=weights)

        def f(x, y, z):
            return model.predict_proba(feats(x, y, z))

        return f

    return train


def constant_discriminator():
    """Discriminator trainer that ignores the features: returns the weighted mean target."""

    def train(x, y, z, target, weights):
        value = float(np.sum(weights * target) / np.sum(weights))
        return ConstantClassifier(value)

    return train


def greedy_discriminator(data: Dataset, sampler: ConditionalSampler, J: int, trainer=None,
                         seed: int = 0) -> Classifier:
    """Train ``f`` to tell original rows (target 1) from resampled rows (target 0).

    Originals carry weight ``J`` so both classes have equal total weight.
    """
    trainer = trainer or logistic_discriminator()
    rng = stream(seed, "train", 0)
    res = np.asarray(sampler.sample(data.z, J, rng))
    if res.ndim == 2:
        res = res[:, :, None]
    n = data.n
    y = data.labels()
    x_all = np.concatenate([data.x, res.reshape(n * J, -1)]).astype(data.x.dtype)
    y_all = np.concatenate([y, np.repeat(y, J)])
    z_all = np.concatenate([data.z, np.repeat(data.z, J, axis=0)])
    target = np.concatenate([np.ones(n), np.zeros(n * J)])
    weights = np.concatenate([np.full(n, float(J)), np.ones(n * J)])
    g = trainer(x_all, y_all, z_all, target, weights)

    def f(x, y, z):
        return np.clip(np.asarray(g(x, y, z), dtype=float), 0.0, 1.0)

    return f


class GreedyTrainer:
    """Cross-validated-floodgate trainer wrapping :func:`greedy_discriminator`."""

    min_train_size = 2

    def __init__(self, J: int = 10, discriminator=None):
        self.J = J
        self.discriminator = discriminator

    def __call__(self, train, sampler, seed):
        return greedy_discriminator(train, sampler, self.J, self.discriminator, seed)


# ---------------------------------------------------------------------------
# MACM-equivalent classifier


class MacmClassifier:
    """For ``y = 1``: ``1{mu(x,z) >= mu_bar(z)}``; for ``y = -1``: ``1{mu(x,z) <= mu_bar(z)}``."""

    def __init__(self, mu: Callable, mu_bar: Callable):
        self.mu, self.mu_bar = mu, mu_bar

    def __call__(self, x, y, z):
        y = np.asarray(y, dtype=float)
        if not np.all((y == 1.0) | (y == -1.0)):
            raise ParameterError("MACM classifier needs labels in {1, -1}")
        m = np.asarray(self.mu(x, z), dtype=float)
        mb = np.asarray(self.mu_bar(z), dtype=float)
        return np.where(y == 1.0, m >= mb, m <= mb).astype(float)


def macm_classifier(mu: Callable, mu_bar: Callable) -> MacmClassifier:
    return MacmClassifier(mu, mu_bar)
