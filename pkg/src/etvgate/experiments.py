"""Run configurations: building problems from presets/files and running
inference, simulation and coverage experiments.  The CLI is a thin layer
over :func:`execute`.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any

import numpy as np

from . import classifiers as clf
from .data import Dataset, read_csv
from .errors import ParameterError
from .floodgate import (
    floodgate_cv_lcb,
    floodgate_hetv_lcb,
    floodgate_lcb,
    z_quantile,
)
from .oracle import FiniteJoint, etv_exact, exact_conditionals, hetv_exact, hetv_levels, oracle_classifier, read_joint
from .rng import derive_seed
from .samplers import (
    PRESETS,
    Ar1Gaussian,
    CategoricalSampler,
    ConjointDesign,
    FiniteJointSampler,
    GaussianConditionalSampler,
    ProbitPreset,
    conjoint_ideal_joint,
    finite_joint_sampler,
)
from .sensitivity import confounding_lower_bound

COMMANDS = ("infer", "infer-cv", "infer-hetv", "oracle", "simulate", "coverage")
QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


class ConfigError(ParameterError):
    """Invalid run configuration (a usage error)."""


@dataclass
class RunConfig:
    command: str
    data: str | None = None
    joint: str | None = None
    preset: str | None = None
    preset_params: dict = field(default_factory=dict)
    n: int | None = None
    feature: int | None = None
    features: list | None = None
    sampler: dict | None = None
    classifier: dict = field(default_factory=lambda: {"type": "oracle"})
    arms: list | None = None
    J: int = 100
    k_folds: int = 10
    m_inner_folds: int = 10
    alpha: float = 0.05
    support_size: Any = None
    weights: list | None = None
    seed: int = 0
    replications: int = 100
    workers: int = 1
    output: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields {sorted(unknown)}")
        if "command" not in d:
            raise ConfigError("config needs a 'command'")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output")
        d.pop("workers")
        return d

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}")
        try:
            z_quantile(self.alpha)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from None
        for name in ("J", "replications", "workers"):
            if int(getattr(self, name)) != getattr(self, name) or getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.k_folds < 2 or self.m_inner_folds < 2:
            raise ConfigError("fold counts must be >= 2")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.preset is not None and self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS)}")
        if self.data is not None and self.preset is not None:
            raise ConfigError("give either a dataset path or a preset, not both")
        if self.support_size not in (None, "inf") and (
                int(self.support_size) != self.support_size or self.support_size < 2):
            raise ConfigError("support_size must be an integer >= 2 or 'inf'")
        if self.n is not None and self.n < 2:
            raise ConfigError("n must be >= 2")
        if self.weights is not None and any(w < 0 for w in self.weights):
            raise ConfigError("weights must be non-negative")
        needs_source = self.command != "oracle"
        if needs_source and self.data is None and self.preset is None and self.joint is None:
            raise ConfigError("need a dataset path, a preset or a joint table")
        if self.command in ("oracle", "coverage", "infer-hetv") and self.joint is None and not self._conjoint():
            raise ConfigError(f"{self.command} needs a joint table or the conjoint-ideal preset")
        if self.command == "simulate" and self.preset is None:
            raise ConfigError("simulate needs a preset")
        if needs_source and self.data is None and self.preset is None and self.n is None:
            raise ConfigError("sampling from a joint needs n")
        if self.command == "infer-hetv" and self.weights is None:
            raise ConfigError("infer-hetv needs weights")
        return self

    def _conjoint(self) -> bool:
        return self.preset == "conjoint-ideal"

    @property
    def support(self):
        return math.inf if self.support_size == "inf" else self.support_size


# ---------------------------------------------------------------------------
# problem construction


@dataclass
class Problem:
    data: Dataset
    sampler: Any
    joint: FiniteJoint | None = None
    truth_models: Any = None
    support_size: float = 2


def load_joint(cfg: RunConfig) -> FiniteJoint | None:
    if cfg.joint is not None:
        return read_joint(cfg.joint)
    if cfg._conjoint():
        base = PRESETS["conjoint-ideal"]
        params = {"q": base.q, "p": base.p, **cfg.preset_params}
        return conjoint_ideal_joint(ConjointDesign(float(params["q"]), float(params["p"])))
    return None


def _preset_probit(cfg: RunConfig) -> ProbitPreset:
    pre = PRESETS[cfg.preset]
    params = dict(cfg.preset_params)
    if params:
        pre = ProbitPreset(tuple(params.get("beta", pre.beta)), float(params.get("rho", pre.rho)),
                           int(params.get("n", pre.n)), pre.interaction)
    return pre


def build_sampler(spec: dict, joint):
    kind = spec.get("type")
    if kind == "joint":
        if joint is None:
            raise ConfigError("a 'joint' sampler needs a joint table")
        return FiniteJointSampler(joint)
    if kind == "gaussian-ar1":
        return GaussianConditionalSampler(Ar1Gaussian(int(spec["p"]), float(spec["rho"])), int(spec["feature"]))
    if kind == "categorical":
        return CategoricalSampler(spec["values"], spec.get("probs"))
    raise ConfigError(f"unknown sampler type {kind!r}")


def build_problem(cfg: RunConfig, seed: int, feature: int | None = None) -> Problem:
    joint = load_joint(cfg)
    if cfg.preset is not None and not cfg._conjoint():
        pre = _preset_probit(cfg)
        j = cfg.feature if feature is None else feature
        if j is None:
            raise ConfigError("probit presets need a feature index")
        data = pre.generate(j, cfg.n, derive_seed(seed, "data"))
        return Problem(data, pre.sampler(j), None, pre.true_models(j), 2)
    if cfg.data is not None:
        data = read_csv(cfg.data)
        if cfg.sampler is None and joint is None:
            raise ConfigError("a dataset path needs a sampler spec or a joint table")
        sampler = build_sampler(cfg.sampler or {"type": "joint"}, joint)
        size = cfg.support if cfg.support_size is not None else (len(joint.y_support) if joint else None)
        if size is None:
            raise ConfigError("support_size is required for dataset inputs")
        return Problem(data, sampler, joint, None, size)
    n = cfg.n if cfg.n is not None else 1000
    data, sampler = finite_joint_sampler(joint, n, derive_seed(seed, "data"))
    size = cfg.support if cfg.support_size is not None else len(joint.y_support)
    return Problem(data, sampler, joint, None, size)


def _exact_models(problem: Problem):
    if problem.truth_models is not None:
        m = problem.truth_models
        return clf.WorkingModelPair(m.full, m.reduced)
    if problem.joint is not None:
        full, reduced = exact_conditionals(problem.joint)
        return clf.WorkingModelPair(full, reduced)
    raise ConfigError("exact working models need a preset or a joint table")


def _macm_from_joint(joint: FiniteJoint):
    if set(joint.y_support) != {1, -1} and set(joint.y_support) != {1.0, -1.0}:
        raise ConfigError("macm needs a joint with labels {1, -1}")
    full, reduced = exact_conditionals(joint)
    xs = np.empty(len(joint.x_support), dtype=object)
    xs[:] = list(joint.x_support)
    p_xz = joint.mass.sum(axis=1)

    def mu(x, z):
        return full(np.full(len(x), 1.0), x, z) - full(np.full(len(x), -1.0), x, z)

    z_index = {v: k for k, v in enumerate(joint.z_support)}

    def mu_bar(z):
        z = np.asarray(z, dtype=object).reshape(len(z), -1)[:, 0]
        out = np.empty(len(z))
        for i, zv in enumerate(z):
            k = z_index[zv]
            w = p_xz[:, k] / p_xz[:, k].sum()
            zz = np.empty((len(xs), 1), dtype=object)
            zz[:, 0] = [zv] * len(xs)
            out[i] = float(w @ mu(xs[:, None], zz))
        return out

    return clf.macm_classifier(mu, mu_bar)


def build_classifier(spec: dict, problem: Problem):
    """A fixed classifier (no training) for Algorithm 1 style inference."""
    kind = spec.get("type")
    if kind == "constant":
        return clf.ConstantClassifier(float(spec.get("value", 0.5)))
    if kind == "oracle":
        if problem.joint is not None:
            return oracle_classifier(problem.joint)
        return clf.ThresholdClassifier(_exact_models(problem), 0.0)
    if kind == "weak-oracle":
        base = build_classifier({"type": "oracle"}, problem)
        return clf.ShrunkClassifier(base, float(spec.get("factor", 0.1)))
    if kind == "threshold":
        if spec.get("family", "exact") != "exact":
            raise ConfigError("fitted working models need infer-cv")
        return clf.ThresholdClassifier(_exact_models(problem), float(spec.get("c", 0.0)))
    if kind == "macm":
        if problem.joint is None:
            raise ConfigError("macm needs a joint table")
        return _macm_from_joint(problem.joint)
    raise ConfigError(f"unknown or untrainable classifier type {kind!r}")


def build_trainer(spec: dict, problem: Problem, cfg: RunConfig):
    kind = spec.get("type")
    if kind in ("constant", "oracle", "weak-oracle", "macm"):
        return clf.fixed_trainer(build_classifier(spec, problem))
    if kind == "threshold":
        family = spec.get("family", "logistic")
        c = spec.get("c", 0.0)
        common = dict(c=c, c_grid=tuple(spec.get("c_grid", clf.DEFAULT_C_GRID)), m_folds=cfg.m_inner_folds,
                      J=int(spec.get("J", cfg.J)), alpha=cfg.alpha)
        if family == "exact":
            return clf.ThresholdTrainer(models=_exact_models(problem), **common)
        return clf.ThresholdTrainer(family, ridge=float(spec.get("ridge", clf.DEFAULT_RIDGE)), **common)
    if kind == "greedy":
        disc = clf.constant_discriminator() if spec.get("discriminator") == "constant" \
            else clf.logistic_discriminator(float(spec.get("ridge", clf.DEFAULT_RIDGE)))
        return clf.GreedyTrainer(int(spec.get("J", 10)), disc)
    raise ConfigError(f"unknown classifier type {kind!r}")


# ---------------------------------------------------------------------------
# commands


def _with_sensitivity(result, support_size) -> dict:
    d = result.to_dict()
    d["sensitivity"] = confounding_lower_bound(min(result.lcb, 1.0), support_size).to_dict()
    return d


def run_infer(cfg: RunConfig) -> dict:
    problem = build_problem(cfg, cfg.seed)
    f = build_classifier(cfg.classifier, problem)
    res = floodgate_lcb(problem.data, problem.sampler, f, cfg.J, support_size=problem.support_size,
                        alpha=cfg.alpha, seed=cfg.seed)
    return {"result": _with_sensitivity(res, problem.support_size)}


def run_infer_cv(cfg: RunConfig) -> dict:
    problem = build_problem(cfg, cfg.seed)
    trainer = build_trainer(cfg.classifier, problem, cfg)
    res = floodgate_cv_lcb(problem.data, problem.sampler, trainer, cfg.J, cfg.k_folds,
                           support_size=problem.support_size, alpha=cfg.alpha, seed=cfg.seed)
    out = {"result": _with_sensitivity(res, problem.support_size)}
    if getattr(trainer, "chosen_c", None):
        out["chosen_c"] = list(trainer.chosen_c)
    return out


def _level_classifiers(cfg: RunConfig, problem: Problem):
    K = problem.data.levels
    kind = cfg.classifier.get("type")
    if kind == "constant":
        return [clf.ConstantClassifier(float(cfg.classifier.get("value", 0.5)))] * K
    if kind == "oracle":
        return [oracle_classifier(problem.joint.coarsen(k)) for k in range(1, K + 1)]
    raise ConfigError("infer-hetv supports 'oracle' and 'constant' classifiers")


def run_infer_hetv(cfg: RunConfig) -> dict:
    problem = build_problem(cfg, cfg.seed)
    if problem.joint is None:
        raise ConfigError("infer-hetv needs a joint table")
    fs = _level_classifiers(cfg, problem)
    res = floodgate_hetv_lcb(problem.data, problem.sampler, fs, cfg.weights, cfg.J, alpha=cfg.alpha,
                             seed=cfg.seed)
    return {"result": res.to_dict(), "hetv_exact": hetv_exact(problem.joint, cfg.weights)}


def run_oracle(cfg: RunConfig) -> dict:
    joint = load_joint(cfg)
    out = {"support_size": len(joint.y_support), "levels": joint.levels}
    out["etv_exact"] = etv_exact(joint) if len(joint.y_support) >= 2 else None
    if joint.levels > 1:
        out["hetv_levels"] = [float(v) for v in hetv_levels(joint)]
    if cfg.weights is not None:
        out["hetv_exact"] = hetv_exact(joint, cfg.weights)
    if out["etv_exact"] is not None:
        out["sensitivity"] = confounding_lower_bound(out["etv_exact"], len(joint.y_support)).to_dict()
    return out


def _summary(values) -> dict:
    v = np.asarray(values, dtype=float)
    q = np.quantile(v, QUANTILES)
    return {"count": int(v.size), "mean": float(v.mean()), "sd": float(v.std()),
            "quantiles": {str(a): float(b) for a, b in zip(QUANTILES, q)}}


def _default_arms(cfg: RunConfig) -> list:
    if cfg.preset == "interaction-p10":
        return [{"type": "threshold", "family": "logistic", "c": 0.0},
                {"type": "threshold", "family": "logistic", "c": "cv"}]
    if cfg._conjoint():
        return [{"type": "oracle"}]
    return [{"type": "oracle"}, {"type": "threshold", "family": "logistic", "c": 0.0}]


def arm_name(spec: dict) -> str:
    kind = spec.get("type")
    if kind == "threshold":
        return f"{spec.get('family', 'logistic')}[c={spec.get('c', 0.0)}]"
    return kind


def _simulate_one(cfg_dict: dict, r: int) -> list:
    cfg = RunConfig.from_dict(cfg_dict)
    seed = derive_seed(cfg.seed, "replicate", r)
    if cfg._conjoint():
        features = [None]
    elif cfg.features is not None:
        features = list(cfg.features)
    elif cfg.feature is not None:
        features = [cfg.feature]
    else:
        features = list(range(len(_preset_probit(cfg).beta)))
    rows = []
    for j in features:
        problem = build_problem(cfg, seed, j)
        for spec in cfg.arms or _default_arms(cfg):
            trainer = build_trainer(spec, problem, cfg)
            res = floodgate_cv_lcb(problem.data, problem.sampler, trainer, cfg.J, cfg.k_folds,
                                   support_size=problem.support_size, alpha=cfg.alpha, seed=seed)
            row = {"replication": r, "feature": j, "arm": arm_name(spec), "lcb": res.lcb,
                   "point_estimate": res.point_estimate, "loss_mean": res.loss_mean,
                   "loss_var": res.loss_var}
            if getattr(trainer, "chosen_c", None):
                row["chosen_c"] = list(trainer.chosen_c)
            rows.append(row)
    return rows


def _coverage_one(cfg_dict: dict, r: int) -> dict:
    cfg = RunConfig.from_dict(cfg_dict)
    seed = derive_seed(cfg.seed, "replicate", r)
    problem = build_problem(cfg, seed)
    f = build_classifier(cfg.classifier, problem)
    res = floodgate_lcb(problem.data, problem.sampler, f, cfg.J, support_size=problem.support_size,
                        alpha=cfg.alpha, seed=seed)
    return {"replication": r, "lcb": res.lcb, "point_estimate": res.point_estimate}


def _replicate(fn, cfg: RunConfig) -> list:
    cfg_dict = asdict(cfg)
    if cfg.workers == 1:
        return [fn(cfg_dict, r) for r in range(cfg.replications)]
    with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
        # map preserves replication order regardless of completion order
        return list(pool.map(fn, [cfg_dict] * cfg.replications, range(cfg.replications)))


def run_simulate(cfg: RunConfig) -> dict:
    rows = [row for rep in _replicate(_simulate_one, cfg) for row in rep]
    groups: dict = {}
    for row in rows:
        groups.setdefault((row["feature"], row["arm"]), []).append(row["lcb"])
    summary = [{"feature": k[0], "arm": k[1], "lcb": _summary(v)} for k, v in groups.items()]
    out = {"replications": rows, "summary": summary}
    if cfg._conjoint():
        out["etv_exact"] = etv_exact(load_joint(cfg))
    return out


def run_coverage(cfg: RunConfig) -> dict:
    joint = load_joint(cfg)
    truth = etv_exact(joint)
    rows = _replicate(_coverage_one, cfg)
    covered = [row["lcb"] <= truth for row in rows]
    return {"etv_exact": truth, "coverage": float(np.mean(covered)), "target": 1.0 - cfg.alpha,
            "replications": rows, "lcb": _summary([row["lcb"] for row in rows]),
            "point_estimate": _summary([row["point_estimate"] for row in rows])}


RUNNERS = {
    "infer": run_infer,
    "infer-cv": run_infer_cv,
    "infer-hetv": run_infer_hetv,
    "oracle": run_oracle,
    "simulate": run_simulate,
    "coverage": run_coverage,
}


def execute(cfg: RunConfig) -> dict:
    """Validate and run a configuration; the report embeds the resolved config."""
    cfg.validate()
    report = RUNNERS[cfg.command](cfg)
    report["config"] = cfg.to_dict()
    return report
