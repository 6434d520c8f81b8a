"""Score-conformalized quantile regression (SCQR).

A regressor ``psi`` is fit with the pinball loss at level ``1 - alpha`` to
predict the nonconformity score from an input feature ``omega(x)``. Signed
residuals ``score - psi(omega)`` on a held-out calibration half are then
conformalized, and the per-input threshold is ``psi(omega(x)) + q_hat``.
Negative residuals are kept, so a threshold can come out negative (the set
is then empty, scores being nonnegative).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

from .conformal import CalibrationRecord, conformal_quantile, _check_alpha
from .errors import ConfigError, DegenerateData, DimMismatch, TauOutOfRange

KINDS = ("linear", "mlp", "zero")


def _check_tau(tau: float):
    if not (0.0 < tau < 1.0):
        raise TauOutOfRange(f"tau must lie in (0, 1), got {tau!r}")


def pinball_loss(y, yhat, tau: float):
    """``tau * (y - yhat)^+ + (1 - tau) * (yhat - y)^+``; works elementwise on arrays."""
    _check_tau(tau)
    r = np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)
    out = np.maximum(tau * r, (tau - 1.0) * r)
    return float(out) if out.ndim == 0 else out


def linear_pinball_objective(coef, intercept: float, X, y, tau: float) -> float:
    X = np.asarray(X, dtype=float)
    return float(np.mean(pinball_loss(y, X @ np.asarray(coef, dtype=float) + intercept, tau)))


def linear_pinball_subgradient(coef, intercept: float, X, y, tau: float) -> Tuple[np.ndarray, float]:
    """Subgradient of the mean pinball loss of a linear model; exact gradient away from kinks."""
    X = np.asarray(X, dtype=float)
    r = np.asarray(y, dtype=float) - (X @ np.asarray(coef, dtype=float) + intercept)
    dr = np.where(r > 0, tau, np.where(r < 0, tau - 1.0, 0.0))
    return -(dr @ X) / X.shape[0], float(-dr.mean())


@dataclass
class TrainingConfig:
    """Regressor choice and optimization settings.

    ``kind`` is ``"linear"``, ``"mlp"`` (one ReLU hidden layer) or ``"zero"``
    (``psi == 0``, which reduces SCQR to plain split conformal). Linear models
    are fit exactly by linear programming unless ``linear_method`` is
    ``"subgradient"``.
    """

    kind: str = "linear"
    linear_method: str = "lp"
    hidden_width: int = 384
    learning_rate: float = 1e-3
    batch_size: int = 32
    patience: int = 3
    min_delta: float = 1e-4
    max_epochs: int = 500
    subgradient_lr: float = 0.01
    subgradient_epochs: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"scqr kind must be one of {KINDS}, got {self.kind!r}")
        if self.linear_method not in ("lp", "subgradient"):
            raise ConfigError(f"linear_method must be 'lp' or 'subgradient', got {self.linear_method!r}")
        if self.hidden_width < 1 or self.batch_size < 1:
            raise ConfigError("hidden_width and batch_size must be positive")


@dataclass
class QuantileRegressor:
    kind: str
    tau: float
    input_dim: int
    weights: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        _check_tau(self.tau)
        self.weights = {k: np.asarray(v, dtype=float) for k, v in self.weights.items()}

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :] if self.input_dim > 1 or X.shape[0] == 0 else X[:, None]
        if X.shape[1] != self.input_dim:
            raise DimMismatch(f"regressor expects {self.input_dim} features, got {X.shape[1]}")
        w = self.weights
        if self.kind == "zero":
            return np.zeros(X.shape[0])
        if self.kind == "linear":
            return X @ w["coef"] + float(w["intercept"])
        Z = (X - w["x_mean"]) / w["x_scale"]
        H = np.maximum(Z @ w["W1"] + w["b1"], 0.0)
        return H @ w["W2"] + float(w["b2"])

    def __call__(self, feature) -> float:
        return float(self.predict(np.asarray(feature, dtype=float).reshape(1, -1))[0])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "tau": self.tau,
            "input_dim": self.input_dim,
            "weights": {k: v.tolist() for k, v in sorted(self.weights.items())},
        }


def _fit_linear_lp(X: np.ndarray, y: np.ndarray, tau: float) -> Dict[str, np.ndarray]:
    n, d = X.shape
    varying = X.max(axis=0) > X.min(axis=0)
    # variables: coef (d), intercept, u (n), v (n)
    c = np.concatenate([np.zeros(d + 1), np.full(n, tau / n), np.full(n, (1.0 - tau) / n)])
    A_eq = np.hstack([X, np.ones((n, 1)), np.eye(n), -np.eye(n)])
    bounds = [(None, None) if varying[j] else (0.0, 0.0) for j in range(d)]
    bounds += [(None, None)] + [(0.0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=y, bounds=bounds, method="highs")
    if res.status != 0:
        raise DegenerateData(f"quantile regression LP failed: {res.message}")
    return {"coef": res.x[:d].copy(), "intercept": np.array(res.x[d])}


def _fit_linear_subgradient(X: np.ndarray, y: np.ndarray, tau: float, cfg: TrainingConfig):
    """Full-batch subgradient descent from zero on standardized features; returns the best iterate."""
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    varying = scale > 0
    scale[~varying] = 1.0
    Z = (X - mean) / scale
    coef = np.zeros(X.shape[1])
    intercept = 0.0
    best = (math.inf, coef, intercept)
    for _ in range(cfg.subgradient_epochs):
        f = linear_pinball_objective(coef, intercept, Z, y, tau)
        if f < best[0]:
            best = (f, coef.copy(), intercept)
        g, gb = linear_pinball_subgradient(coef, intercept, Z, y, tau)
        coef = np.where(varying, coef - cfg.subgradient_lr * g, 0.0)
        intercept -= cfg.subgradient_lr * gb
    if linear_pinball_objective(coef, intercept, Z, y, tau) < best[0]:
        best = (0.0, coef, intercept)
    _, coef, intercept = best
    coef = coef / scale
    return {"coef": coef, "intercept": np.array(intercept - float(coef @ mean))}


def _fit_mlp(X: np.ndarray, y: np.ndarray, tau: float, cfg: TrainingConfig):
    rng = np.random.default_rng(cfg.seed)
    n, d = X.shape
    h = cfg.hidden_width
    x_mean = X.mean(axis=0)
    x_scale = X.std(axis=0)
    x_scale[x_scale == 0] = 1.0
    Z = (X - x_mean) / x_scale

    params = {
        "W1": rng.uniform(-1, 1, (d, h)) * math.sqrt(6.0 / (d + h)),
        "b1": np.zeros(h),
        "W2": rng.uniform(-1, 1, h) * math.sqrt(6.0 / (h + 1)),
        "b2": np.array(float(np.quantile(y, tau))),
    }
    m = {k: np.zeros_like(v) for k, v in params.items()}
    v = {k: np.zeros_like(p) for k, p in params.items()}
    b1, b2, eps = 0.9, 0.999, 1e-8
    step = 0

    def forward(Zb):
        pre = Zb @ params["W1"] + params["b1"]
        H = np.maximum(pre, 0.0)
        return pre, H, H @ params["W2"] + params["b2"]

    best, stale = math.inf, 0
    for _ in range(cfg.max_epochs):
        for start in range(0, n, cfg.batch_size):
            Zb, yb = Z[start:start + cfg.batch_size], y[start:start + cfg.batch_size]
            pre, H, out = forward(Zb)
            r = yb - out
            dout = -np.where(r > 0, tau, tau - 1.0) / yb.shape[0]
            grads = {"W2": H.T @ dout, "b2": np.array(dout.sum())}
            dpre = np.outer(dout, params["W2"]) * (pre > 0)
            grads["W1"] = Zb.T @ dpre
            grads["b1"] = dpre.sum(axis=0)
            step += 1
            for k in params:
                m[k] = b1 * m[k] + (1 - b1) * grads[k]
                v[k] = b2 * v[k] + (1 - b2) * grads[k] ** 2
                mhat = m[k] / (1 - b1 ** step)
                vhat = v[k] / (1 - b2 ** step)
                params[k] = params[k] - cfg.learning_rate * mhat / (np.sqrt(vhat) + eps)
        loss = float(np.mean(pinball_loss(y, forward(Z)[2], tau)))
        if loss < best - cfg.min_delta:
            best, stale = loss, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    params.update(x_mean=x_mean, x_scale=x_scale)
    return params


def fit_quantile_regressor(features, scores, tau: float, cfg: Optional[TrainingConfig] = None) -> QuantileRegressor:
    """Fit ``psi`` by minimizing the mean pinball loss at level ``tau``."""
    cfg = cfg or TrainingConfig()
    _check_tau(tau)
    X = np.asarray(features, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(scores, dtype=float).reshape(-1)
    if cfg.kind == "zero":
        return QuantileRegressor("zero", tau, X.shape[1] if X.size else 1)
    if X.shape[0] != y.shape[0]:
        raise DimMismatch(f"{X.shape[0]} feature rows for {y.shape[0]} scores")
    if y.shape[0] < 2:
        raise DegenerateData(f"need at least 2 samples to fit a quantile regressor, got {y.shape[0]}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise DegenerateData("features and scores must be finite")
    if cfg.kind == "linear":
        if cfg.linear_method == "lp":
            w = _fit_linear_lp(X, y, tau)
        else:
            w = _fit_linear_subgradient(X, y, tau, cfg)
    else:
        w = _fit_mlp(X, y, tau, cfg)
    return QuantileRegressor(cfg.kind, tau, X.shape[1], w)


@dataclass
class ScqrModel:
    regressor: QuantileRegressor
    residual_quantile: float
    alpha: float

    def threshold(self, feature) -> float:
        return scqr_threshold(self, feature)

    def to_dict(self) -> dict:
        d = self.regressor.to_dict()
        q = self.residual_quantile
        d["residual_quantile"] = q if math.isfinite(q) else "inf"
        d["alpha"] = self.alpha
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScqrModel":
        reg = QuantileRegressor(d["kind"], float(d["tau"]), int(d["input_dim"]), d.get("weights", {}))
        return cls(reg, float(d["residual_quantile"]), float(d["alpha"]))


def _matrix(records: Sequence[CalibrationRecord]) -> Tuple[np.ndarray, np.ndarray]:
    X = np.array([r.feature for r in records], dtype=float)
    if X.ndim == 1:
        X = X.reshape(len(records), -1)
    return X, np.array([r.score for r in records], dtype=float)


def split_records(records: Sequence[CalibrationRecord], seed: int) -> Tuple[List, List]:
    """Seeded shuffle, then first half for training and second half for calibration."""
    order = np.random.default_rng(seed).permutation(len(records))
    half = len(records) // 2
    return [records[i] for i in order[:half]], [records[i] for i in order[half:]]


def calibrate_scqr(train_records: Sequence[CalibrationRecord], cal_records: Sequence[CalibrationRecord],
                   alpha: float, cfg: Optional[TrainingConfig] = None) -> ScqrModel:
    """Fit ``psi`` at level ``1 - alpha`` on the training half and conformalize its residuals."""
    cfg = cfg or TrainingConfig()
    _check_alpha(alpha)
    tau = 1.0 - alpha
    if not cal_records:
        raise DegenerateData("calibration split is empty")
    Xc, yc = _matrix(cal_records)
    if cfg.kind == "zero":
        reg = QuantileRegressor("zero", tau, Xc.shape[1] if Xc.shape[1] else 1)
    else:
        if not train_records:
            raise DegenerateData("training split is empty")
        Xt, yt = _matrix(train_records)
        reg = fit_quantile_regressor(Xt, yt, tau, cfg)
    residuals = yc - reg.predict(Xc) if Xc.shape[1] else yc
    return ScqrModel(reg, conformal_quantile(residuals, alpha), alpha)


def scqr_threshold(model: ScqrModel, feature) -> float:
    """``psi(feature) + q_hat``; ``inf`` when the residual quantile is infinite."""
    if model.residual_quantile == math.inf:
        return math.inf
    return model.regressor(feature) + model.residual_quantile
