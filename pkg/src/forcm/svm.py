"""Binary linear SVM trained by dual coordinate descent.

Solves  min_w 1/2 ||w||^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))  with the
bias folded in as an extra always-1 feature (so b is weakly regularized; an
accepted approximation). Coordinates are visited in a seeded random
permutation each epoch and the optimizer stops once the range of projected
gradients falls below ``tol``. Exact single-coordinate minimization makes the
dual objective non-decreasing epoch over epoch, which training verifies.

Models apply their stored feature scaler internally, so ``decision_value``
and ``predict`` take raw (unstandardized) feature vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DimensionMismatchError,
    ForcmError,
    InvalidArgumentError,
    NonFiniteFeatureError,
    SingleClassTrainingError,
)
from .features import FeatureScaler, FeatureTable

_MODEL_MAGIC = "forcm-svm v1"


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    max_epochs: int = 1000
    tol: float = 1e-4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.C <= 0:
            raise InvalidArgumentError("C must be > 0")
        if self.max_epochs < 1:
            raise InvalidArgumentError("max_epochs must be >= 1")
        if self.tol <= 0:
            raise InvalidArgumentError("tol must be > 0")


@dataclass(frozen=True)
class SvmModel:
    """Trained weights plus the scaler that maps raw features to model space."""

    w: np.ndarray
    b: float
    scaler: FeatureScaler
    feature_names: tuple[str, ...]
    dual_objective_history: tuple[float, ...] = field(default=(), compare=False)
    epochs_run: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(self.w, dtype=np.float64)
        if w.ndim != 1 or not np.isfinite(w).all():
            raise InvalidArgumentError("w must be a finite vector")
        if len(self.feature_names) != w.shape[0]:
            raise InvalidArgumentError("feature_names must match weight length")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "b", float(self.b))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def feature_count(self) -> int:
        return self.w.shape[0]


def train(table: FeatureTable, y: np.ndarray, params: SvmParams,
          scaler: FeatureScaler | None = None) -> SvmModel:
    """Fit the hinge-loss SVM on an already-standardized feature table.

    ``y`` holds one label in {-1, +1} per row. ``scaler`` is whatever
    standardization produced the table (identity if none); it is stored on the
    model so prediction can consume raw features.
    """
    x = table.vectors
    y = np.asarray(y, dtype=np.float64)
    n, f = x.shape
    if y.shape != (n,):
        raise DimensionMismatchError(f"need {n} labels, got {y.shape}")
    if not np.isin(y, (-1.0, 1.0)).all():
        raise InvalidArgumentError("labels must be -1 or +1")
    if not np.isfinite(x).all():
        raise NonFiniteFeatureError("feature matrix contains NaN or Inf")
    if (y > 0).all() or (y < 0).all():
        raise SingleClassTrainingError("training rows must include both classes")
    if scaler is None:
        scaler = FeatureScaler.identity(f)

    xa = np.hstack([x, np.ones((n, 1))])  # bias column
    yx = y[:, None] * xa
    qdiag = np.einsum("ij,ij->i", xa, xa)  # >= 1 thanks to the bias column
    alpha = np.zeros(n)
    w = np.zeros(f + 1)
    c = params.C

    rng = np.random.Generator(np.random.Philox(key=params.seed))
    history: list[float] = []
    epochs = 0
    for epoch in range(params.max_epochs):
        epochs = epoch + 1
        pg_max, pg_min = -np.inf, np.inf
        for i in rng.permutation(n):
            g = yx[i] @ w - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= c:
                pg = max(g, 0.0)
            else:
                pg = g
            pg_max = max(pg_max, pg)
            pg_min = min(pg_min, pg)
            if pg != 0.0:
                old = alpha[i]
                alpha[i] = min(max(old - g / qdiag[i], 0.0), c)
                delta = alpha[i] - old
                if delta != 0.0:
                    w = w + delta * yx[i]
        dual = float(alpha.sum() - 0.5 * (w @ w))
        if history and dual < history[-1] - 1e-9 * max(1.0, abs(history[-1])):
            raise ForcmError(
                f"dual objective decreased at epoch {epochs}: {history[-1]} -> {dual}"
            )
        history.append(dual)
        if pg_max - pg_min < params.tol:
            break

    return SvmModel(w[:f], float(w[f]), scaler, table.feature_names,
                    dual_objective_history=tuple(history), epochs_run=epochs)


def decision_value(model: SvmModel, x: np.ndarray) -> float:
    """Signed per-object score: w . scale(x) + b."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.feature_count,):
        raise DimensionMismatchError(
            f"expected {model.feature_count} features, got {x.shape}"
        )
    return float(model.w @ model.scaler.apply(x) + model.b)


def decision_values(model: SvmModel, x: np.ndarray) -> np.ndarray:
    """Vectorized scores for an (n, F) matrix of raw feature rows."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.feature_count:
        raise DimensionMismatchError(
            f"expected (n, {model.feature_count}) features, got {x.shape}"
        )
    return model.scaler.apply(x) @ model.w + model.b


def predict(model: SvmModel, x: np.ndarray) -> int:
    """Class in {-1, +1}; a score of exactly 0 counts as +1 (forest)."""
    return 1 if decision_value(model, x) >= 0.0 else -1


def primal_objective(model: SvmModel, x: np.ndarray, y: np.ndarray, c: float) -> float:
    """Regularized hinge objective of this model on standardized rows (for audits)."""
    margins = y * (x @ model.w + model.b)
    hinge = np.maximum(0.0, 1.0 - margins).sum()
    return float(0.5 * (model.w @ model.w + model.b * model.b) + c * hinge)


def save_model(model: SvmModel, path: str | Path) -> None:
    """Write the versioned plain-text model file (floats survive bit-exact)."""
    lines = [_MODEL_MAGIC, f"features {model.feature_count}"]
    lines += [f"  {name}" for name in model.feature_names]
    for key, vec in (("scaler_mean", model.scaler.mean),
                     ("scaler_std", model.scaler.std)):
        lines.append(key + " " + " ".join(repr(float(v)) for v in vec))
    lines.append("scaler_degenerate " + " ".join(
        "1" if d else "0" for d in model.scaler.degenerate))
    lines.append("w " + " ".join(repr(float(v)) for v in model.w))
    lines.append("b " + repr(model.b))
    Path(path).write_text("\n".join(lines) + "\n")


def load_model(path: str | Path) -> SvmModel:
    """Inverse of :func:`save_model`."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != _MODEL_MAGIC:
        raise InvalidArgumentError(f"{path}: not a {_MODEL_MAGIC!r} file")
    count = int(lines[1].split()[1])
    names = tuple(line.strip() for line in lines[2:2 + count])
    fields = {}
    for line in lines[2 + count:]:
        key, _, rest = line.partition(" ")
        fields[key] = rest.split()
    scaler = FeatureScaler(
        np.array([float(v) for v in fields["scaler_mean"]]),
        np.array([float(v) for v in fields["scaler_std"]]),
        np.array([v == "1" for v in fields["scaler_degenerate"]]),
    )
    w = np.array([float(v) for v in fields["w"]])
    return SvmModel(w, float(fields["b"][0]), scaler, names)
