"""Hyperparameter containers for every learner family."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

from ..core import ConfigError

MODEL_KINDS = ("cart", "random_forest", "gradient_boosting", "logistic_regression", "svm_rbf")
ALIASES = {"rf": "random_forest", "gb": "gradient_boosting", "lr": "logistic_regression",
           "svm": "svm_rbf", "tree": "cart"}


def canonical_kind(kind: str) -> str:
    kind = ALIASES.get(kind, kind)
    if kind not in MODEL_KINDS:
        raise ConfigError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    return kind


@dataclass(frozen=True)
class CartParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    impurity: str = "gini"
    max_features: str | int = "all"

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 1:
            raise ConfigError("max_depth must be ≥ 1")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be ≥ 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be ≥ 1")
        if self.impurity != "gini":
            raise ConfigError("only gini impurity is supported")
        if not (self.max_features in ("all", "sqrt") or
                (isinstance(self.max_features, int) and self.max_features >= 1)):
            raise ConfigError("max_features must be 'all', 'sqrt' or a positive int")

    def resolved_features(self, d: int) -> int:
        if self.max_features == "all":
            return d
        if self.max_features == "sqrt":
            return max(1, math.isqrt(d))
        return min(int(self.max_features), d)

    @property
    def depth_limit(self) -> int:
        return self.max_depth if self.max_depth is not None else 1 << 30


@dataclass(frozen=True)
class EnsembleParams:
    n_estimators: int = 100
    learning_rate: float = 0.1
    tree: CartParams = field(default_factory=CartParams)
    bootstrap: bool = True
    seed: int = 0
    class_weight: str | None = None

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be ≥ 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if self.class_weight not in (None, "balanced"):
            raise ConfigError("class_weight must be None or 'balanced'")


@dataclass(frozen=True)
class LinearParams:
    C: float = 1.0
    max_iterations: int = 5000
    tolerance: float = 1e-3

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError("C must be > 0")
        if self.max_iterations < 1 or not self.tolerance > 0:
            raise ConfigError("max_iterations ≥ 1 and tolerance > 0 required")


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: str = "rbf"
    gamma: float | str = "scale"
    tolerance: float = 1e-3
    max_iterations: int | None = None
    max_train_size: int = 20000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ConfigError("C must be > 0")
        if self.kernel != "rbf":
            raise ConfigError("only the rbf kernel is supported")
        if not (self.gamma == "scale" or (isinstance(self.gamma, (int, float)) and self.gamma > 0)):
            raise ConfigError("gamma must be 'scale' or > 0")


@dataclass(frozen=True)
class GridSearchSpec:
    grid: dict[str, list]
    folds: int = 5
    stratified: bool = True
    scoring: str = "accuracy"
    seed: int = 0

    def __post_init__(self):
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ConfigError("parameter grid must be non-empty on every axis")
        if self.folds < 2:
            raise ConfigError("fold count must be ≥ 2")
        if self.scoring != "accuracy":
            raise ConfigError("only accuracy scoring is supported")


# Table-5 style defaults, one flat dict per model family.
DEFAULTS: dict[str, dict[str, Any]] = {
    "cart": {"max_depth": None, "min_samples_split": 2, "min_samples_leaf": 1,
             "max_features": "all"},
    "random_forest": {"n_estimators": 100, "max_depth": 10, "min_samples_leaf": 2,
                      "min_samples_split": 5, "max_features": "sqrt", "bootstrap": True,
                      "class_weight": None},
    "gradient_boosting": {"n_estimators": 100, "learning_rate": 0.1, "max_depth": 3,
                          "min_samples_split": 2, "min_samples_leaf": 1,
                          "max_features": "all"},
    "logistic_regression": {"C": 10.0, "max_iterations": 5000, "tolerance": 1e-3},
    "svm_rbf": {"C": 10.0, "kernel": "rbf", "gamma": "scale", "tolerance": 1e-3,
                "max_train_size": 20000},
}

_TREE_KEYS = ("max_depth", "min_samples_split", "min_samples_leaf", "max_features")


def resolve(kind: str, overrides: dict | None = None) -> dict[str, Any]:
    """Merge user overrides into the defaults, rejecting unknown names."""
    kind = canonical_kind(kind)
    out = dict(DEFAULTS[kind])
    for key, value in (overrides or {}).items():
        if key not in out:
            raise ConfigError(f"unknown hyperparameter {key!r} for {kind}; "
                              f"expected one of {sorted(out)}")
        out[key] = value
    to_params(kind, out, seed=0)  # validates
    return out


def to_params(kind: str, hp: dict, seed: int):
    kind = canonical_kind(kind)
    tree_kw = {k: hp[k] for k in _TREE_KEYS if k in hp}
    if kind == "cart":
        return CartParams(**tree_kw)
    if kind == "random_forest":
        return EnsembleParams(n_estimators=int(hp["n_estimators"]), tree=CartParams(**tree_kw),
                              bootstrap=bool(hp["bootstrap"]), seed=seed,
                              class_weight=hp["class_weight"])
    if kind == "gradient_boosting":
        return EnsembleParams(n_estimators=int(hp["n_estimators"]),
                              learning_rate=float(hp["learning_rate"]),
                              tree=CartParams(**tree_kw), bootstrap=False, seed=seed)
    if kind == "logistic_regression":
        return LinearParams(C=float(hp["C"]), max_iterations=int(hp["max_iterations"]),
                            tolerance=float(hp["tolerance"]))
    return SvmParams(C=float(hp["C"]), kernel=hp["kernel"], gamma=hp["gamma"],
                     tolerance=float(hp["tolerance"]), max_train_size=int(hp["max_train_size"]),
                     seed=seed)


