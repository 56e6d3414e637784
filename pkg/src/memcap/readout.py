"""
Trained readout layer: ridge/least-squares regression and one-vs-rest logistic
classification, plus the error and accuracy metrics reported by every task.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.special import expit
from sklearn.metrics import confusion_matrix

from memcap.errors import InvalidInputError, SingularSystemError
from memcap.io import read_json, read_matrix, write_json, write_matrix

logger = logging.getLogger(__name__)

REGRESSION = "regression"
LOGISTIC_OVR = "logistic-ovr"


@dataclass(frozen=True)
class LinearReadout:
    """
    Affine map X @ weights + bias.

    For logistic-ovr readouts the features are z-scored with the training-split
    `mean`/`scale` before the map, and column j of `weights` scores `classes[j]`.
    """

    weights: np.ndarray
    bias: np.ndarray
    kind: str = REGRESSION
    classes: Optional[np.ndarray] = None
    mean: Optional[np.ndarray] = None
    scale: Optional[np.ndarray] = None
    feature_names: Optional[List[str]] = None

    def __post_init__(self):
        if self.kind not in (REGRESSION, LOGISTIC_OVR):
            raise InvalidInputError(f"unknown readout kind {self.kind!r}")
        if self.weights.ndim != 2 or self.weights.shape[1] != self.bias.shape[0]:
            raise InvalidInputError("weights must be features x outputs matching bias")

    @property
    def n_features(self) -> int:
        return self.weights.shape[0]

    def as_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "bias": self.bias.tolist(),
            "classes": None if self.classes is None else self.classes.tolist(),
            "mean": None if self.mean is None else self.mean.tolist(),
            "scale": None if self.scale is None else self.scale.tolist(),
            "feature_names": self.feature_names,
        }


@dataclass
class Metrics:
    nmse_ratio: Optional[float] = None
    nmse_variance: Optional[float] = None
    accuracy: Optional[float] = None
    confusion: Optional[np.ndarray] = None
    classes: Optional[np.ndarray] = None
    extra: Dict = field(default_factory=dict)

    def as_dict(self) -> Dict:
        out = {k: v for k, v in self.extra.items()}
        for name in ("nmse_ratio", "nmse_variance", "accuracy"):
            value = getattr(self, name)
            if value is not None:
                out[name] = float(value)
        if self.confusion is not None:
            out["confusion"] = self.confusion.tolist()
            out["classes"] = self.classes.tolist()
        return out


def _matrix(X) -> Tuple[np.ndarray, Optional[List[str]]]:
    names = getattr(X, "columns", None)
    arr = np.asarray(getattr(X, "values", X), dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError("feature matrix must be 2-D")
    return arr, None if names is None else list(names)


def _augment(X: np.ndarray) -> np.ndarray:
    return np.hstack([X, np.ones((X.shape[0], 1))])


def _penalty_mask(p: int) -> np.ndarray:
    mask = np.ones(p + 1)
    mask[-1] = 0.0
    return mask


def mse_loss(w: np.ndarray, A: np.ndarray, y: np.ndarray, ridge_lambda: float) -> float:
    """(1/n)*||A w - y||^2 + lambda*||w without bias||^2, A carrying a ones column."""
    r = A @ w - y
    reg = ridge_lambda * np.sum(_penalty_mask(A.shape[1] - 1)[:, None] * w * w)
    return float(np.sum(r * r) / A.shape[0] + reg)


def mse_gradient(
    w: np.ndarray, A: np.ndarray, y: np.ndarray, ridge_lambda: float
) -> np.ndarray:
    mask = _penalty_mask(A.shape[1] - 1)[:, None]
    return 2.0 * (A.T @ (A @ w - y)) / A.shape[0] + 2.0 * ridge_lambda * mask * w


def train_linear(
    X,
    y,
    method: str = "closed-form",
    ridge_lambda: float = 1e-6,
    lr: Optional[float] = None,
    iters: int = 20000,
) -> LinearReadout:
    """
    Fit a regression readout minimizing mean squared error plus an L2 penalty on the
    weights (the bias is not penalized).

    :param X: StateMatrix or (n, p) array
    :param y: (n,) or (n, k) targets
    :param method: "closed-form" (normal equations) or "gradient-descent"
    :param ridge_lambda: L2 penalty; 0 requires a full-rank design
    :param lr: Gradient-descent step; None uses 1/L for the loss's Lipschitz constant L
    :param iters: Gradient-descent iterations from zero-initialized weights
    """
    Xa, names = _matrix(X)
    Y = np.asarray(y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n, p = Xa.shape
    if Y.shape[0] != n:
        raise InvalidInputError(f"{n} rows but {Y.shape[0]} targets")
    if ridge_lambda < 0:
        raise InvalidInputError("ridge_lambda must be >= 0")
    A = _augment(Xa)

    if method == "closed-form":
        if ridge_lambda == 0:
            if n < p + 1 or np.linalg.matrix_rank(A) < p + 1:
                raise SingularSystemError(
                    "normal matrix is singular; set a positive ridge_lambda"
                )
            w, *_ = linalg.lstsq(A, Y)
        else:
            G = A.T @ A + n * ridge_lambda * np.diag(_penalty_mask(p))
            try:
                w = linalg.solve(G, A.T @ Y, assume_a="sym")
            except linalg.LinAlgError as exc:
                raise SingularSystemError(f"normal equations are singular: {exc}")
    elif method == "gradient-descent":
        if lr is None:
            top = linalg.eigvalsh(A.T @ A / n, subset_by_index=[p, p])[0]
            lr = 1.0 / (2.0 * (top + ridge_lambda))
        w = np.zeros((p + 1, Y.shape[1]))
        for _ in range(iters):
            w -= lr * mse_gradient(w, A, Y, ridge_lambda)
        if not np.all(np.isfinite(w)):
            raise SingularSystemError(f"gradient descent diverged with lr={lr}")
    else:
        raise InvalidInputError(f"unknown training method {method!r}")

    return LinearReadout(
        weights=w[:-1].copy(), bias=w[-1].copy(), kind=REGRESSION, feature_names=names
    )


def _standardize(readout: LinearReadout, X: np.ndarray) -> np.ndarray:
    if readout.mean is None:
        return X
    return (X - readout.mean) / readout.scale


def decision_scores(readout: LinearReadout, X) -> np.ndarray:
    """Raw affine outputs, (n, outputs); sigmoid-squashed for logistic readouts."""
    Xa, _ = _matrix(X)
    if Xa.shape[1] != readout.n_features:
        raise InvalidInputError(
            f"readout expects {readout.n_features} features, got {Xa.shape[1]}"
        )
    z = _standardize(readout, Xa) @ readout.weights + readout.bias
    if readout.kind == LOGISTIC_OVR:
        return expit(z)
    return z


def predict(readout: LinearReadout, X) -> np.ndarray:
    """
    Regression: X @ W + b (1-D for a single output).
    Logistic: label of the highest per-class score; ties go to the lowest class index.
    """
    scores = decision_scores(readout, X)
    if readout.kind == LOGISTIC_OVR:
        return readout.classes[np.argmax(scores, axis=1)]
    return scores[:, 0] if scores.shape[1] == 1 else scores


def logistic_loss(
    W: np.ndarray, b: np.ndarray, Z: np.ndarray, Y: np.ndarray, l2_lambda: float
) -> np.ndarray:
    """Per-class mean binary cross-entropy plus (lambda/2)*||w||^2, shape (classes,)."""
    z = Z @ W + b
    data = np.mean(np.logaddexp(0.0, z) - Y * z, axis=0)
    return data + 0.5 * l2_lambda * np.sum(W * W, axis=0)


def logistic_gradient(
    W: np.ndarray, b: np.ndarray, Z: np.ndarray, Y: np.ndarray, l2_lambda: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of `logistic_loss` with respect to (W, b)."""
    err = expit(Z @ W + b) - Y
    n = Z.shape[0]
    return Z.T @ err / n + l2_lambda * W, err.mean(axis=0)


def train_logistic_ovr(
    X,
    labels: Sequence,
    l2_lambda: float = 1e-4,
    lr: float = 0.1,
    iters: int = 2000,
) -> LinearReadout:
    """
    One-vs-rest logistic regression by full-batch gradient descent.

    Features are z-scored with the training statistics, which are kept in the readout.
    The L2 term is applied as a proximal shrink after each data-gradient step, which
    stays stable for any lambda.
    """
    Xa, names = _matrix(X)
    y = np.asarray(labels)
    if y.shape[0] != Xa.shape[0]:
        raise InvalidInputError(f"{Xa.shape[0]} rows but {y.shape[0]} labels")
    classes = np.unique(y)
    if classes.size < 2:
        raise InvalidInputError("logistic readout needs at least two classes")
    if l2_lambda < 0 or lr <= 0 or iters < 0:
        raise InvalidInputError("need l2_lambda >= 0, lr > 0 and iters >= 0")

    mean = Xa.mean(axis=0)
    scale = Xa.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (Xa - mean) / scale
    Y = (y[:, None] == classes[None, :]).astype(float)

    W = np.zeros((Z.shape[1], classes.size))
    b = np.zeros(classes.size)
    shrink = 1.0 + lr * l2_lambda
    for _ in range(iters):
        gW, gb = logistic_gradient(W, b, Z, Y, 0.0)
        W = (W - lr * gW) / shrink
        b = b - lr * gb
    logger.debug(
        "logistic readout: %d classes, final mean loss %.4g",
        classes.size,
        float(logistic_loss(W, b, Z, Y, l2_lambda).mean()),
    )
    return LinearReadout(
        weights=W,
        bias=b,
        kind=LOGISTIC_OVR,
        classes=classes,
        mean=mean,
        scale=scale,
        feature_names=names,
    )


def nmse_ratio(z, y) -> float:
    """sum((z - y)^2) / sum(y^2)."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape:
        raise InvalidInputError("prediction and target lengths differ")
    denom = np.sum(y * y)
    if denom == 0:
        raise InvalidInputError("nmse_ratio is undefined for an all-zero target")
    return float(np.sum((z - y) ** 2) / denom)


def nmse_variance(z, y) -> float:
    """sum((z - y)^2) / sum((y - mean(y))^2)."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != y.shape:
        raise InvalidInputError("prediction and target lengths differ")
    denom = np.sum((y - y.mean()) ** 2)
    if denom == 0:
        raise InvalidInputError("nmse_variance is undefined for a constant target")
    return float(np.sum((z - y) ** 2) / denom)


def evaluate_regression(readout: LinearReadout, X, y) -> Metrics:
    z = predict(readout, X)
    return Metrics(nmse_ratio=nmse_ratio(z, y), nmse_variance=nmse_variance(z, y))


def evaluate_classification(readout: LinearReadout, X, labels) -> Metrics:
    """Accuracy and confusion counts (rows = true class, columns = predicted)."""
    if readout.kind != LOGISTIC_OVR:
        raise InvalidInputError("classification metrics need a logistic readout")
    y = np.asarray(labels)
    unknown = np.setdiff1d(y, readout.classes)
    if unknown.size:
        raise InvalidInputError(f"labels {unknown.tolist()} were not seen in training")
    pred = predict(readout, X)
    cm = confusion_matrix(y, pred, labels=readout.classes)
    return Metrics(
        accuracy=float(np.trace(cm) / cm.sum()) if cm.sum() else 0.0,
        confusion=cm,
        classes=readout.classes,
    )


def write_readout(prefix: str, readout: LinearReadout) -> Tuple[str, str]:
    """Write `<prefix>.weights.csv` (features x outputs) and `<prefix>.json` metadata."""
    csv_path, json_path = f"{prefix}.weights.csv", f"{prefix}.json"
    write_matrix(csv_path, readout.weights.tolist())
    write_json(json_path, readout.as_dict())
    return csv_path, json_path


def read_readout(prefix: str) -> LinearReadout:
    meta = read_json(f"{prefix}.json")
    weights = read_matrix(f"{prefix}.weights.csv")
    if weights.ndim == 1:
        weights = weights[:, None]

    def arr(key):
        return None if meta.get(key) is None else np.asarray(meta[key])

    return LinearReadout(
        weights=weights,
        bias=np.asarray(meta["bias"], dtype=float),
        kind=meta["kind"],
        classes=arr("classes"),
        mean=arr("mean"),
        scale=arr("scale"),
        feature_names=meta.get("feature_names"),
    )
