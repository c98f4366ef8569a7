"""Cross-fitted double machine learning for the partially linear model.

Outcome and treatment are residualized against controls with nuisance models
trained strictly out of fold; the effect is the residual-on-residual slope
with an influence-function (heteroskedasticity-robust) standard error. Pooled
out-of-fold R^2 for both nuisances is reported as the leakage diagnostic:
a high treatment R^2 or a negative outcome R^2 flags an invalid control set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from pairdml import nuisance
from pairdml.numerics import (
    DataError,
    DegenerateInputError,
    SeededRng,
    as_features,
    normal_interval,
    normal_p_value,
    r2_score,
)


@dataclass(frozen=True)
class CrossFitPlan:
    n_folds: int
    fold_of: np.ndarray  # per-sample fold index, shape (n,)
    stratified: bool = True

    def indices(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """(train, test) index arrays for fold k."""
        test = np.flatnonzero(self.fold_of == k)
        train = np.flatnonzero(self.fold_of != k)
        return train, test


@dataclass
class DmlEstimate:
    tau_hat: float
    se: float
    ci_lo: float
    ci_hi: float
    p_value: float
    y_r2: float
    t_r2: float
    n: int
    folds: int = 0
    learner: str = ""
    seed: int = 0
    y_res: np.ndarray | None = field(default=None, repr=False)
    t_res: np.ndarray | None = field(default=None, repr=False)

    def to_record(self) -> dict:
        return {
            "tau_hat": self.tau_hat,
            "se": self.se,
            "ci": [self.ci_lo, self.ci_hi],
            "p_value": self.p_value,
            "y_r2": self.y_r2,
            "t_r2": self.t_r2,
            "n": self.n,
            "folds": self.folds,
            "learner": self.learner,
            "seed": self.seed,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_record(), **kwargs)


def _check_binary(t: np.ndarray) -> np.ndarray:
    tv = np.asarray(t, dtype=np.float64).ravel()
    if not np.all(np.isin(tv, (0.0, 1.0))):
        raise DataError("treatment vector must be binary 0/1")
    return tv


def make_folds(n: int, t, k: int, rng: SeededRng, stratified: bool = True) -> CrossFitPlan:
    """Deterministic fold assignment; stratified by treatment by default.

    Stratification shuffles each arm separately and deals round-robin, so
    every fold's treated share stays within the global share +/- 2pp.
    """
    if k < 2:
        raise ValueError("make_folds: need k >= 2")
    if k > n:
        raise ValueError(f"make_folds: k={k} exceeds n={n}")
    if n < 2 * k:
        raise ValueError(f"make_folds: need n >= 2k (n={n}, k={k})")
    tv = _check_binary(t)
    if tv.shape[0] != n:
        raise DataError("make_folds: treatment length mismatch")

    fold_of = np.empty(n, dtype=np.int64)
    if stratified:
        gen = rng.derive("folds")
        for arm in (0.0, 1.0):
            idx = np.flatnonzero(tv == arm)
            idx = idx[gen.permutation(idx.size)]
            fold_of[idx] = np.arange(idx.size) % k
    else:
        order = rng.derive("folds").permutation(n)
        fold_of[order] = np.arange(n) % k
    counts = np.bincount(fold_of, minlength=k)
    if np.any(counts == 0):
        raise DataError("make_folds: produced an empty fold")
    return CrossFitPlan(n_folds=k, fold_of=fold_of, stratified=stratified)


def crossfit_residuals(
    x, t, y, spec: nuisance.LearnerSpec, plan: CrossFitPlan
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Out-of-fold residuals for outcome and treatment.

    Every sample's predictions come from models trained on the other folds.
    Returns (y_res, t_res, y_r2, t_r2); an R^2 is NaN when its target is
    degenerate (zero variance).
    """
    xm = as_features(x)
    tv = _check_binary(t)
    yv = np.asarray(y, dtype=np.float64).ravel()
    n = xm.shape[0]
    if not (tv.shape[0] == n == yv.shape[0]):
        raise DataError("crossfit_residuals: misaligned inputs")
    if plan.fold_of.shape[0] != n:
        raise DataError("crossfit_residuals: plan does not cover the sample")

    y_hat = np.empty(n, dtype=np.float64)
    t_hat = np.empty(n, dtype=np.float64)
    for k in range(plan.n_folds):
        train, test = plan.indices(k)
        g = nuisance.fit(spec, xm[train], yv[train], task="regression")
        m = nuisance.fit(spec, xm[train], tv[train], task="propensity")
        y_hat[test] = nuisance.predict(g, xm[test])
        t_hat[test] = nuisance.predict(m, xm[test])

    def _safe_r2(actual, predicted):
        try:
            return r2_score(actual, predicted)
        except DegenerateInputError:
            return float("nan")

    return yv - y_hat, tv - t_hat, _safe_r2(yv, y_hat), _safe_r2(tv, t_hat)


def estimate_ate(y_res, t_res, keep_residuals: bool = False) -> DmlEstimate:
    """Residual-on-residual slope with the influence-function sandwich SE.

    tau = sum(t_res*y_res)/sum(t_res^2); se^2 = mean(psi^2)/(n*mean(t_res^2)^2)
    with psi_i = t_res_i*(y_res_i - tau*t_res_i). Two-sided normal p-value.
    """
    yr = np.asarray(y_res, dtype=np.float64).ravel()
    tr = np.asarray(t_res, dtype=np.float64).ravel()
    if yr.shape != tr.shape:
        raise DataError("estimate_ate: residual length mismatch")
    n = yr.shape[0]
    if n < 2:
        raise DataError("estimate_ate: need at least 2 samples")
    denom = float(np.sum(tr * tr))
    if denom <= 0.0:
        raise DegenerateInputError("estimate_ate: treatment residuals have no variation")

    tau = float(np.sum(tr * yr)) / denom
    psi = tr * (yr - tau * tr)
    mean_t2 = denom / n
    se = float(np.sqrt(np.mean(psi * psi) / n) / mean_t2)
    lo, hi = normal_interval(tau, se, 0.95)
    return DmlEstimate(
        tau_hat=tau,
        se=se,
        ci_lo=lo,
        ci_hi=hi,
        p_value=normal_p_value(tau, se),
        y_r2=float("nan"),
        t_r2=float("nan"),
        n=n,
        y_res=yr if keep_residuals else None,
        t_res=tr if keep_residuals else None,
    )


def run_dml(
    x,
    t,
    y,
    spec: nuisance.LearnerSpec | None = None,
    k: int = 5,
    seed: int = 0,
    stratified: bool = True,
    keep_residuals: bool = False,
) -> DmlEstimate:
    """Fold split -> out-of-fold residualization -> effect estimate."""
    if spec is None:
        spec = nuisance.LearnerSpec(seed=seed)
    xm = as_features(x)
    rng = SeededRng(seed)
    plan = make_folds(xm.shape[0], t, k, rng, stratified=stratified)
    y_res, t_res, y_r2, t_r2 = crossfit_residuals(xm, t, y, spec, plan)
    est = estimate_ate(y_res, t_res, keep_residuals=keep_residuals)
    est.y_r2 = y_r2
    est.t_r2 = t_r2
    est.folds = k
    est.learner = spec.kind
    est.seed = int(seed)
    return est


def naive_ols(t, y) -> DmlEstimate:
    """Difference-in-means effect with a robust (sandwich) SE.

    Equivalent to regressing y on [1, t]; implemented by centering both and
    reusing the residual estimator. No confounding control.
    """
    tv = _check_binary(t)
    yv = np.asarray(y, dtype=np.float64).ravel()
    est = estimate_ate(yv - yv.mean(), tv - tv.mean())
    est.learner = "none"
    return est
