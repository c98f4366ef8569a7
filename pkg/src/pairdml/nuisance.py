"""Pluggable supervised learners for the DML nuisance functions.

Three families: ridge regression (closed form, unpenalized intercept on
standardized features), random forests, and gradient boosting. Forests and
boosting are backed by scikit-learn behind this module's interface; ridge is
solved directly from the normal equations. Propensity-task predictions are
probabilities clipped to [1e-3, 1-1e-3] so treatment residuals keep finite
variance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace

import numpy as np
from sklearn.ensemble import (
    GradientBoostingClassifier,
    GradientBoostingRegressor,
    RandomForestClassifier,
    RandomForestRegressor,
)

from pairdml.numerics import DataError, DegenerateInputError, as_features

PROPENSITY_CLIP = 1e-3

KINDS = ("ridge", "random_forest", "gradient_boosting")
TASKS = ("regression", "propensity")


@dataclass(frozen=True)
class LearnerSpec:
    """Configuration of one nuisance learner.

    The default is the main-configuration forest: 50 trees, depth 8.
    """

    kind: str = "random_forest"
    trees: int = 50
    max_depth: int = 8
    learning_rate: float = 0.1
    ridge_lambda: float = 1.0
    max_features: str = "sqrt"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown learner kind {self.kind!r}; expected one of {KINDS}")
        if self.trees < 1 or self.max_depth < 1:
            raise ValueError("trees and max_depth must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be nonnegative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "LearnerSpec":
        return cls(**d)

    def with_seed(self, seed: int) -> "LearnerSpec":
        return replace(self, seed=int(seed))


PRESETS = {
    "default": LearnerSpec(),
    "rf_shallow": LearnerSpec(kind="random_forest", trees=50, max_depth=5),
    "rf_deep": LearnerSpec(kind="random_forest", trees=100, max_depth=10),
    "gbm": LearnerSpec(kind="gradient_boosting", trees=100, max_depth=3, learning_rate=0.1),
    "ridge": LearnerSpec(kind="ridge", ridge_lambda=1.0),
}


def preset(name: str, seed: int = 0) -> LearnerSpec:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {sorted(PRESETS)}")
    return PRESETS[name].with_seed(seed)


@dataclass
class FittedModel:
    spec: LearnerSpec
    task: str
    n_features: int
    # exactly one of the two backends is populated
    ridge_params: dict | None = None
    sk_model: object | None = None


def _n_split_features(d: int) -> int:
    return max(1, math.ceil(math.sqrt(d)))


def _fit_ridge(x64: np.ndarray, y: np.ndarray, lam: float) -> dict:
    means = x64.mean(axis=0)
    stds = x64.std(axis=0)
    scale = np.where(stds < 1e-12, 1.0, stds)
    xs = (x64 - means) / scale
    y_mean = float(y.mean())
    yc = y - y_mean
    d = xs.shape[1]
    gram = xs.T @ xs + lam * np.eye(d)
    beta = np.linalg.solve(gram, xs.T @ yc)
    return {"means": means, "scale": scale, "beta": beta, "intercept": y_mean}


def fit(spec: LearnerSpec, x, y, task: str) -> FittedModel:
    """Train one nuisance model. Deterministic for a fixed ``spec.seed``."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    xm = as_features(x)
    yv = np.asarray(y, dtype=np.float64).ravel()
    if xm.shape[0] != yv.shape[0]:
        raise DataError(f"fit: {xm.shape[0]} rows vs {yv.shape[0]} targets")
    if xm.shape[0] < 2:
        raise DataError("fit: need at least 2 samples")

    if task == "propensity":
        classes = np.unique(yv)
        if not np.all(np.isin(classes, (0.0, 1.0))):
            raise DataError("propensity target must be binary 0/1")
        if classes.size < 2:
            raise DegenerateInputError("propensity target has a single class")

    model = FittedModel(spec=spec, task=task, n_features=xm.shape[1])
    x64 = xm.astype(np.float64)
    rs = int(spec.seed) % (2**32)

    if spec.kind == "ridge":
        model.ridge_params = _fit_ridge(x64, yv, spec.ridge_lambda)
        return model

    if spec.kind == "random_forest":
        if task == "regression":
            sk = RandomForestRegressor(
                n_estimators=spec.trees,
                max_depth=spec.max_depth,
                max_features=_n_split_features(xm.shape[1]),
                bootstrap=True,
                random_state=rs,
                n_jobs=1,
            )
        else:
            sk = RandomForestClassifier(
                n_estimators=spec.trees,
                max_depth=spec.max_depth,
                max_features=_n_split_features(xm.shape[1]),
                bootstrap=True,
                random_state=rs,
                n_jobs=1,
            )
    else:  # gradient_boosting
        if task == "regression":
            sk = GradientBoostingRegressor(
                n_estimators=spec.trees,
                max_depth=spec.max_depth,
                learning_rate=spec.learning_rate,
                random_state=rs,
            )
        else:
            sk = GradientBoostingClassifier(
                n_estimators=spec.trees,
                max_depth=spec.max_depth,
                learning_rate=spec.learning_rate,
                random_state=rs,
            )
    sk.fit(x64, yv if task == "regression" else yv.astype(np.int64))
    model.sk_model = sk
    return model


def predict(model: FittedModel, x) -> np.ndarray:
    """Predictions as float64; propensity outputs are clipped probabilities."""
    xm = as_features(x)
    if xm.shape[1] != model.n_features:
        raise DataError(
            f"predict: input has {xm.shape[1]} columns, model trained on {model.n_features}"
        )
    x64 = xm.astype(np.float64)

    if model.ridge_params is not None:
        p = model.ridge_params
        out = ((x64 - p["means"]) / p["scale"]) @ p["beta"] + p["intercept"]
    elif model.task == "regression":
        out = model.sk_model.predict(x64)
    else:
        # binary 0/1 target was validated at fit time, so classes_ == [0, 1]
        out = model.sk_model.predict_proba(x64)[:, 1]

    out = np.asarray(out, dtype=np.float64)
    if model.task == "propensity":
        out = np.clip(out, PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP)
    return out
