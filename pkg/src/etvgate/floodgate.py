"""Floodgate lower confidence bounds for the (hierarchical) ETV.

A classifier ``f`` is any callable ``f(x, y, z) -> array`` taking ``x`` of
shape ``(m, dx)``, labels ``y`` of shape ``(m,)`` and ``z`` of shape
``(m, dz)`` and returning scores in ``[0, 1]``.  A conditional sampler is any
object with ``sample(z, J, rng) -> array of shape (m, J, dx)`` drawing
i.i.d. copies of X given each row of ``z``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Protocol, Sequence

import numpy as np
from scipy.special import ndtri

from .data import Dataset
from .errors import ParameterError, SampleSizeError, TrainingError
from .rng import derive_seed, stream

Classifier = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

CHUNK_ROWS = 4096


class ConditionalSampler(Protocol):
    def sample(self, z: np.ndarray, J: int, rng: np.random.Generator) -> np.ndarray: ...


class Trainer(Protocol):
    def __call__(self, train: Dataset, sampler: ConditionalSampler, seed: int) -> Classifier: ...


@dataclass(frozen=True)
class LcbResult:
    loss_mean: float
    loss_var: float
    lcb: float
    point_estimate: float
    alpha: float
    n: int
    J: int
    k_folds: int
    support_size: float
    z_alpha: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.support_size):
            d["support_size"] = "inf"
        return d


def z_quantile(alpha: float) -> float:
    """Upper-``alpha`` standard normal quantile, ``1 - Phi(z) = alpha``."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    return float(ndtri(1.0 - alpha))


def normalizer(support_size) -> float:
    """``1 - 1/|Y|``, or 1 for an infinite support."""
    if support_size is None or math.isinf(support_size):
        return 1.0
    if support_size < 2 or int(support_size) != support_size:
        raise ParameterError(f"support_size must be an integer >= 2 or inf, got {support_size}")
    return 1.0 - 1.0 / support_size


def _check_J(J):
    if int(J) != J or J < 1:
        raise ParameterError(f"J must be a positive integer, got {J}")


def _scores(f: Classifier, x, y, z) -> np.ndarray:
    s = np.asarray(f(x, y, z), dtype=float).reshape(-1)
    if s.shape[0] != len(y):
        raise ParameterError("classifier returned the wrong number of scores")
    if np.any(~np.isfinite(s)) or np.any(s < 0.0) or np.any(s > 1.0):
        raise ParameterError("classifier scores must lie in [0, 1]")
    return s


def sample_loss(f: Classifier, x, y, z, sampler: ConditionalSampler, J: int,
                rng: np.random.Generator) -> float:
    """Resampled classification loss of a single row.

    ``|f(x, y, z) - 1| + mean_j f(x_j, y, z)`` with ``x_j`` drawn from the
    sampler at ``z``.  Lies in ``[0, 2]``.
    """
    _check_J(J)
    x = np.asarray(x).reshape(1, -1)
    z = np.asarray(z).reshape(1, -1)
    y = np.asarray([y], dtype=object if isinstance(y, str) else None)
    res = sampler.sample(z, J, rng)
    return float(row_losses(f, Dataset(x, y, z), res)[0])


def draw_resamples(data: Dataset, sampler: ConditionalSampler, J: int, seed: int) -> np.ndarray:
    """All ``(n, J, dx)`` resamples for a dataset, from the row-indexed resample stream."""
    _check_J(J)
    res = np.asarray(sampler.sample(data.z, J, stream(seed, "resample")))
    if res.ndim == 2:
        res = res[:, :, None]
    if res.shape[:2] != (data.n, J):
        raise ParameterError(f"sampler returned shape {res.shape}, expected ({data.n}, {J}, dx)")
    return res


def row_losses(f: Classifier, data: Dataset, resamples: np.ndarray, labels=None) -> np.ndarray:
    """Per-row losses ``L_i`` given precomputed resamples.

    ``labels`` overrides ``data.labels()``; hierarchical callers pass a
    level prefix.
    """
    y = data.labels() if labels is None else np.asarray(labels)
    n, J = resamples.shape[:2]
    out = np.empty(n)
    for lo in range(0, n, CHUNK_ROWS):
        hi = min(n, lo + CHUNK_ROWS)
        m = hi - lo
        orig = _scores(f, data.x[lo:hi], y[lo:hi], data.z[lo:hi])
        xr = resamples[lo:hi].reshape(m * J, -1)
        fake = _scores(f, xr, np.repeat(y[lo:hi], J), np.repeat(data.z[lo:hi], J, axis=0))
        out[lo:hi] = np.abs(orig - 1.0) + fake.reshape(m, J).sum(axis=1) / J
    return out


def loss_moments(losses: np.ndarray) -> tuple[float, float]:
    """Mean and biased (divide-by-n) variance, with exactly rounded sums."""
    losses = np.asarray(losses, dtype=float)
    n = losses.size
    mean = math.fsum(losses) / n
    var = math.fsum(losses * losses) / n - mean * mean
    return mean, max(var, 0.0)


def _bound(mean, var, n, z_alpha, scale):
    lcb = max(0.0, (1.0 - mean - z_alpha * math.sqrt(var) / math.sqrt(n)) / scale)
    est = max(0.0, (1.0 - mean) / scale)
    return lcb, est


def lcb_from_losses(losses, alpha: float, support_size, J: int = 0, k_folds: int = 1) -> LcbResult:
    """Turn per-row losses into a floodgate bound."""
    z_alpha = z_quantile(alpha)
    scale = normalizer(support_size)
    n = len(losses)
    if n < 2:
        raise SampleSizeError(f"need at least 2 rows, got {n}")
    mean, var = loss_moments(losses)
    lcb, est = _bound(mean, var, n, z_alpha, scale)
    return LcbResult(mean, var, lcb, est, alpha, n, int(J), int(k_folds),
                     float(support_size) if support_size is not None else math.inf, z_alpha)


def floodgate_lcb(data: Dataset, sampler: ConditionalSampler, f: Classifier, J: int = 100, *,
                  support_size, alpha: float = 0.05, seed: int = 0,
                  resamples: np.ndarray | None = None) -> LcbResult:
    """Lower confidence bound for ETV with a fixed classifier ``f``.

    ``f`` must not have been trained on ``data``.  ``support_size`` is the
    size of the response support (``math.inf`` for an unbounded one).
    """
    z_quantile(alpha)
    if data.n < 2:
        raise SampleSizeError(f"need at least 2 rows, got {data.n}")
    if resamples is None:
        resamples = draw_resamples(data, sampler, J, seed)
    losses = row_losses(f, data, resamples)
    return lcb_from_losses(losses, alpha, support_size, J=J)


def assign_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Fold label per row: shuffle, then deal round-robin (sizes differ by <= 1)."""
    if int(k) != k or k < 2:
        raise ParameterError(f"k_folds must be an integer >= 2, got {k}")
    if n < k:
        raise SampleSizeError(f"cannot split {n} rows into {k} folds")
    perm = stream(seed, "folds").permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return folds


def floodgate_cv_lcb(data: Dataset, sampler: ConditionalSampler, trainer: Trainer, J: int = 100,
                     k_folds: int = 10, *, support_size, alpha: float = 0.05,
                     seed: int = 0) -> LcbResult:
    """Cross-validated floodgate: every row is used for both training and inference.

    For each fold the trainer sees the other folds; fold means and biased
    variances are averaged and combined with the full-sample ``sqrt(n)``.
    """
    z_alpha = z_quantile(alpha)
    scale = normalizer(support_size)
    folds = assign_folds(data.n, k_folds, seed)
    resamples = draw_resamples(data, sampler, J, seed)
    min_size = getattr(trainer, "min_train_size", 1)
    means, variances = [], []
    for r in range(k_folds):
        train_idx = np.flatnonzero(folds != r)
        eval_idx = np.flatnonzero(folds == r)
        if train_idx.size < min_size:
            raise TrainingError(f"{train_idx.size} training rows, trainer needs {min_size}", fold=r)
        try:
            f = trainer(data.subset(train_idx), sampler, derive_seed(seed, "train", r))
        except TrainingError as exc:
            raise TrainingError(str(exc), fold=r) from exc
        losses = row_losses(f, data.subset(eval_idx), resamples[eval_idx])
        m, v = loss_moments(losses)
        means.append(m)
        variances.append(v)
    mean = math.fsum(means) / k_folds
    var = math.fsum(variances) / k_folds
    lcb, est = _bound(mean, var, data.n, z_alpha, scale)
    return LcbResult(mean, var, lcb, est, alpha, data.n, int(J), int(k_folds),
                     float(support_size), z_alpha)


def hetv_row_losses(data: Dataset, fs: Sequence[Classifier], weights, resamples: np.ndarray) -> np.ndarray:
    """Weighted combination of per-level losses, all levels on the same resamples."""
    w = np.asarray(weights, dtype=float)
    K = data.levels
    if len(fs) != K:
        raise ParameterError(f"need one classifier per level ({K}), got {len(fs)}")
    if w.shape != (K,) or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError(f"weights must be {K} non-negative numbers")
    per_level = [row_losses(fs[k], data, resamples, labels=data.labels(k + 1)) for k in range(K)]
    out = w[0] * per_level[0]
    for k in range(1, K):
        out = out + w[k] * (per_level[k] - per_level[k - 1])
    return out


def floodgate_hetv_lcb(data: Dataset, sampler: ConditionalSampler, fs: Sequence[Classifier],
                       weights, J: int = 100, *, alpha: float = 0.05, seed: int = 0,
                       resamples: np.ndarray | None = None) -> LcbResult:
    """Lower confidence bound for the hierarchically weighted ETV.

    Classifier ``fs[k]`` scores the length-``k+1`` label prefix.  The bound
    is not divided by any support normalizer (reported as ``support_size=inf``).
    """
    z_quantile(alpha)
    if data.n < 2:
        raise SampleSizeError(f"need at least 2 rows, got {data.n}")
    if resamples is None:
        resamples = draw_resamples(data, sampler, J, seed)
    losses = hetv_row_losses(data, fs, weights, resamples)
    return lcb_from_losses(losses, alpha, math.inf, J=J)
