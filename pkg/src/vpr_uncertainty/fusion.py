"""Min-max score scaling and a linear SVM fitted by SGD on hinge loss + L1.

The classifier treats a query as a 2-feature point (an efficient uncertainty
score and a geometric-verification confidence) and decides whether its best
match is accepted. Labels are +1 for a correct match and -1 for an incorrect
one; ``w.x + b > 0`` means accept.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyTrainingSet, LengthMismatch, SingleClassTraining

ACCEPT = "accept"
REJECT = "reject"


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    mins: np.ndarray
    maxs: np.ndarray

    def transform(self, features) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        span = self.maxs - self.mins
        safe = np.where(span > 0, span, 1.0)
        out = (x - self.mins) / safe
        # constant training features carry no information
        return np.where(span > 0, out, 0.0)


def fit_scaler(train_scores) -> MinMaxScaler:
    """Fit per-feature min/max on training rows; no clipping is applied later."""
    x = np.asarray(train_scores, dtype=np.float64)
    if x.size == 0:
        raise EmptyTrainingSet("cannot fit a scaler on zero rows")
    if x.ndim == 1:
        x = x[:, None]
    return MinMaxScaler(x.min(axis=0), x.max(axis=0))


@dataclass(frozen=True)
class SVMConfig:
    learning_rate: float = 0.1
    l1_strength: float = 1e-4
    max_iters: int = 1000
    seed: int = 0
    tol: float | None = 1e-6
    n_iter_no_change: int = 20


@dataclass(frozen=True, eq=False)
class SVMModel:
    weights: np.ndarray
    bias: float
    config: SVMConfig = field(default_factory=SVMConfig)
    objective: float = math.nan
    n_iter: int = 0

    def decision_function(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        return x @ self.weights + self.bias


def svm_objective(weights, bias: float, features, labels, l1_strength: float) -> float:
    """Mean hinge loss plus ``l1_strength * ||w||_1`` (the bias is not penalized)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    margins = y * (x @ np.asarray(weights, dtype=np.float64) + bias)
    return float(np.maximum(0.0, 1.0 - margins).mean()
                 + l1_strength * np.abs(weights).sum())


def train_linear_svm(features, labels, config: SVMConfig = SVMConfig()) -> SVMModel:
    """Per-sample SGD on hinge loss with an L1 penalty.

    One iteration is a full pass over the data in a seeded shuffled order, with
    step size ``learning_rate / sqrt(epoch + 1)``. The returned parameters are
    those with the lowest full objective seen at the end of any epoch. Training
    stops early when that best objective has improved by less than ``tol`` over
    ``n_iter_no_change`` consecutive epochs.
    """
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] == 0:
        raise EmptyTrainingSet("no training rows")
    if x.shape[0] != y.shape[0]:
        raise LengthMismatch(f"{x.shape[0]} feature rows but {y.shape[0]} labels")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be +1 or -1")
    if np.unique(y).size < 2:
        raise SingleClassTraining("training labels contain a single class")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")

    rows = [tuple(map(float, r)) for r in x]
    ys = [float(v) for v in y]
    n_feat = x.shape[1]
    w = [0.0] * n_feat
    b = 0.0
    lam = config.l1_strength
    rng = random.Random(config.seed)
    order = list(range(len(rows)))

    best = (svm_objective(w, b, x, y, lam), list(w), b)
    stale = 0
    epochs = 0
    for epoch in range(config.max_iters):
        eta = config.learning_rate / math.sqrt(epoch + 1)
        rng.shuffle(order)
        for i in order:
            xi, yi = rows[i], ys[i]
            margin = yi * (sum(wj * xj for wj, xj in zip(w, xi)) + b)
            if margin < 1.0:
                w = [wj + eta * (yi * xj - lam * ((wj > 0) - (wj < 0)))
                     for wj, xj in zip(w, xi)]
                b += eta * yi
            elif lam:
                w = [wj - eta * lam * ((wj > 0) - (wj < 0)) for wj in w]
        epochs = epoch + 1
        obj = svm_objective(w, b, x, y, lam)
        if obj < best[0]:
            improved = best[0] - obj
            best = (obj, list(w), b)
            if config.tol is None or improved >= config.tol:
                stale = 0
                continue
        stale += 1
        if config.tol is not None and stale >= config.n_iter_no_change:
            break

    obj, w_best, b_best = best
    return SVMModel(np.array(w_best), float(b_best), config, float(obj), epochs)


def svm_decide(model: SVMModel, scaled_feature) -> str:
    """``accept`` iff the decision value is strictly positive; ties are rejected."""
    value = float(model.decision_function(scaled_feature)[0])
    return ACCEPT if value > 0.0 else REJECT


def svm_decide_batch(model: SVMModel, scaled_features) -> list[str]:
    return [ACCEPT if v > 0.0 else REJECT for v in model.decision_function(scaled_features)]


def classification_accuracy(decisions, labels) -> float:
    """Fraction of decisions agreeing with labels.

    ``decisions`` may be ``accept``/``reject`` strings or booleans; ``labels``
    are booleans (correct match) or +1/-1.
    """
    decisions = list(decisions)
    labels = list(labels)
    if len(decisions) != len(labels) or not decisions:
        raise LengthMismatch(
            f"{len(decisions)} decisions vs {len(labels)} labels (must be equal and nonzero)")
    hits = 0
    for d, l in zip(decisions, labels):
        accept = d == ACCEPT if isinstance(d, str) else bool(d)
        correct = l > 0 if not isinstance(l, (bool, np.bool_)) else bool(l)
        hits += accept == correct
    return hits / len(labels)


def save_model(path, model: SVMModel, scaler: MinMaxScaler, features: list[str] | None = None
               ) -> None:
    record = {
        "weights": [float(v) for v in model.weights],
        "bias": float(model.bias),
        "scaler_mins": [float(v) for v in scaler.mins],
        "scaler_maxs": [float(v) for v in scaler.maxs],
        "objective": float(model.objective),
        "n_iter": model.n_iter,
        "config": asdict(model.config),
        "features": features or [],
    }
    Path(path).write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path) -> tuple[SVMModel, MinMaxScaler, list[str]]:
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    model = SVMModel(np.array(record["weights"], dtype=np.float64), float(record["bias"]),
                     SVMConfig(**record.get("config", {})), float(record.get("objective", "nan")),
                     int(record.get("n_iter", 0)))
    scaler = MinMaxScaler(np.array(record["scaler_mins"], dtype=np.float64),
                          np.array(record["scaler_maxs"], dtype=np.float64))
    return model, scaler, list(record.get("features", []))
