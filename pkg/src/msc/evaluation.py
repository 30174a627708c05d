"""Linear classifiers and the evaluation metrics.

Features are column vectors (``F x n``).  Classifiers:

* :func:`train_svm_ova` -- one-vs-all linear SVMs fitted by minibatch
  Pegasos (step ``1/(Lambda t)``, ``Lambda = 1/(C n)``).
* :func:`train_logistic` -- multinomial logistic regression with an l2
  penalty, fitted by L-BFGS.

Metrics: accuracy, average precision / mAP, PSNR.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import ArgumentError, ShapeError
from .tensor import as_matrix

EXACT = "exact"


class Kind(str, enum.Enum):
    SVM = "svm"
    LOGISTIC = "logistic"


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray  # C x F
    bias: np.ndarray  # C
    kind: Kind
    classes: np.ndarray  # label value of each row

    def scores(self, features) -> np.ndarray:
        X = as_matrix(features, "features")
        if X.shape[0] != self.weights.shape[1]:
            raise ShapeError(f"model expects {self.weights.shape[1]} features, got {X.shape[0]}")
        return self.weights @ X + self.bias[:, None]

    def predict(self, features) -> np.ndarray:
        # argmax keeps the first maximum: ties go to the lowest class index
        return self.classes[np.argmax(self.scores(features), axis=0)]


def l2_normalize(features) -> np.ndarray:
    """Scale every column to unit l2 norm (zero columns stay zero)."""
    X = as_matrix(features, "features")
    n = np.linalg.norm(X, axis=0)
    return X / np.where(n > 0, n, 1.0)


def _prepare(features, labels):
    X = as_matrix(features, "features")
    y = np.asarray(labels).ravel()
    if y.shape[0] != X.shape[1]:
        raise ShapeError(f"{X.shape[1]} feature columns but {y.shape[0]} labels")
    if y.shape[0] < 2:
        raise ArgumentError("need at least two examples")
    classes, idx = np.unique(y, return_inverse=True)
    if classes.size < 2:
        raise ArgumentError("need at least two classes")
    return X, classes, idx


def train_svm_ova(features, labels, C: float = 1.0, epochs: int = 30, seed: int = 0,
                  batch_size: int = 16) -> LinearModel:
    """One-vs-all hinge-loss classifiers trained jointly by minibatch Pegasos.

    Each example is augmented with a constant 1 so the bias is learned (and
    lightly regularized) like any weight.  The returned weights average the
    iterates of the last half of the run, which damps the subgradient noise.
    """
    if C <= 0:
        raise ArgumentError("C must be positive")
    X, classes, idx = _prepare(features, labels)
    F, n = X.shape
    Xa = np.vstack([X, np.ones((1, n))])
    Y = -np.ones((classes.size, n))
    Y[idx, np.arange(n)] = 1.0
    lam = 1.0 / (C * n)
    W = np.zeros((classes.size, F + 1))
    avg = np.zeros_like(W)
    n_avg = 0
    rng = np.random.default_rng(seed)
    k = max(1, min(batch_size, n))
    steps_per_epoch = -(-n // k)
    total = epochs * steps_per_epoch
    t = 0
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, k):
            t += 1
            b = order[s:s + k]
            Xb, Yb = Xa[:, b], Y[:, b]
            eta = 1.0 / (lam * t)
            viol = (Yb * (W @ Xb)) < 1.0
            W *= 1.0 - eta * lam
            W += (eta / b.size) * ((Yb * viol) @ Xb.T)
            # Pegasos projection onto the ball that contains the optimum
            norm = np.linalg.norm(W, axis=1)
            W *= np.minimum(1.0, 1.0 / (np.sqrt(lam) * np.maximum(norm, 1e-300)))[:, None]
            if 2 * t > total:
                avg += W
                n_avg += 1
    avg /= max(n_avg, 1)
    return LinearModel(avg[:, :F].copy(), avg[:, F].copy(), Kind.SVM, classes)


def logistic_loss_grad(params, X, idx, n_classes, l2):
    """Mean cross-entropy plus ``l2/2 * |W|^2`` and its gradient.

    ``params`` packs ``[W.ravel(), b]`` with ``W`` of shape ``C x F``; the
    bias is not penalized.
    """
    F, n = X.shape
    W = params[: n_classes * F].reshape(n_classes, F)
    b = params[n_classes * F:]
    Z = W @ X + b[:, None]
    Z -= Z.max(axis=0)
    P = np.exp(Z)
    P /= P.sum(axis=0)
    loss = -np.mean(np.log(P[idx, np.arange(n)])) + 0.5 * l2 * float(np.sum(W * W))
    G = P
    G[idx, np.arange(n)] -= 1.0
    G /= n
    gW = G @ X.T + l2 * W
    gb = G.sum(axis=1)
    return loss, np.concatenate([gW.ravel(), gb])


def train_logistic(features, labels, l2: float = 1e-3, epochs: int = 200,
                   seed: int = 0) -> LinearModel:
    """Multinomial logistic regression; ``epochs`` caps the L-BFGS iterations.

    The fit starts from zero weights and is deterministic; ``seed`` is kept
    for interface symmetry with :func:`train_svm_ova`.
    """
    if l2 < 0:
        raise ArgumentError("l2 must be >= 0")
    X, classes, idx = _prepare(features, labels)
    F = X.shape[0]
    p = np.zeros(classes.size * (F + 1))
    if epochs > 0:
        p = minimize(logistic_loss_grad, p, args=(X, idx, classes.size, l2), jac=True,
                     method="L-BFGS-B", options={"maxiter": int(epochs)}).x
    W = p[: classes.size * F].reshape(classes.size, F)
    b = p[classes.size * F:]
    return LinearModel(W.copy(), b.copy(), Kind.LOGISTIC, classes)


def accuracy(model: LinearModel, features, labels) -> float:
    y = np.asarray(labels).ravel()
    return float(np.mean(model.predict(features) == y))


def mean_binary_accuracy(model: LinearModel, features, labels) -> float:
    """Per-class one-vs-all detection accuracy (score > 0), averaged over classes."""
    y = np.asarray(labels).ravel()
    S = model.scores(features)
    accs = [np.mean((S[c] > 0) == (y == cls)) for c, cls in enumerate(model.classes)]
    return float(np.mean(accs))


@dataclass(frozen=True)
class RankedList:
    """Items sorted by non-increasing score; ties keep their input order."""

    scores: np.ndarray
    positive: np.ndarray

    @classmethod
    def from_scores(cls, scores, positive) -> "RankedList":
        s = np.asarray(scores, dtype=np.float64).ravel()
        p = np.asarray(positive, dtype=bool).ravel()
        if s.shape != p.shape:
            raise ShapeError("scores and labels differ in length")
        order = np.argsort(-s, kind="stable")
        return cls(s[order], p[order])


def average_precision(r: RankedList) -> float:
    """Mean of precision@k over the ranks k holding a positive item."""
    P = int(r.positive.sum())
    if P == 0:
        raise ArgumentError("average precision is undefined without positives")
    hits = np.cumsum(r.positive)
    ranks = np.arange(1, r.positive.size + 1)
    return float(np.sum((hits / ranks)[r.positive]) / P)


def mean_average_precision(lists) -> float:
    return float(np.mean([average_precision(r) for r in lists]))


def model_map(model: LinearModel, features, labels) -> float:
    """mAP of the per-class score rankings produced by ``model``."""
    y = np.asarray(labels).ravel()
    S = model.scores(features)
    lists = [RankedList.from_scores(S[c], y == cls) for c, cls in enumerate(model.classes)
             if np.any(y == cls)]
    return mean_average_precision(lists)


def psnr(clean, estimate, peak: float = 1.0):
    """``10 log10(peak^2 / MSE)`` in dB, or :data:`EXACT` when MSE is zero."""
    a = np.asarray(clean, dtype=np.float64)
    b = np.asarray(estimate, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")
    if peak <= 0:
        raise ArgumentError("peak must be positive")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return EXACT
    return float(10.0 * np.log10(peak * peak / mse))


def kfold_indices(n: int, folds: int, seed: int):
    """Seeded split of ``range(n)`` into ``folds`` (train, test) index pairs."""
    if not 2 <= folds <= n:
        raise ArgumentError(f"need 2 <= folds <= n, got folds={folds}, n={n}")
    perm = np.random.default_rng(seed).permutation(n)
    parts = np.array_split(perm, folds)
    for i in range(folds):
        test = np.sort(parts[i])
        train = np.sort(np.concatenate(parts[:i] + parts[i + 1:]))
        yield train, test


def select_svm_c(features, labels, grid=(0.1, 1.0, 10.0, 100.0), folds: int = 5,
                 seed: int = 0, **svm_kw) -> float:
    """Pick C by k-fold cross-validated accuracy; ties go to the smaller C."""
    X = as_matrix(features, "features")
    y = np.asarray(labels).ravel()
    best, best_c = -1.0, None
    for C in sorted(grid):
        accs = []
        for tr, te in kfold_indices(y.size, folds, seed):
            m = train_svm_ova(X[:, tr], y[tr], C=C, seed=seed, **svm_kw)
            accs.append(accuracy(m, X[:, te], y[te]))
        if np.mean(accs) > best:
            best, best_c = float(np.mean(accs)), C
    return best_c
