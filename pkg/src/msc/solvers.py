"""Sparse encoders for a fixed dictionary.

Two regularizers are supported on the objective ``||x - D y||^2 + lam * psi(y)``:

* ``L0(S)``: orthogonal matching pursuit with at most ``S`` atoms.
* ``L1(lam)``: the LASSO, solved by cyclic coordinate descent on the Gram
  matrix, warm-started from a regularization-path solve so that CD mostly
  just certifies convergence.  There is no 1/2 in front of the quadratic
  term, so the scalar
  soft threshold is ``lam / 2`` and the all-zero solution is optimal exactly
  when ``lam >= 2 * max|D' x|``.

Heavy lifting happens in :mod:`msc.kernels`.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from . import kernels
from .dictionary import Dictionary
from .errors import ArgumentError, ConvergenceError, NumericalError, ShapeError
from .tensor import as_matrix, as_vector, gram

DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 1000


@dataclass(frozen=True)
class L0:
    sparsity: int

    def __post_init__(self):
        if int(self.sparsity) < 1:
            raise ArgumentError("L0 sparsity must be a positive integer")

    def to_dict(self):
        return {"kind": "L0", "sparsity": int(self.sparsity)}


@dataclass(frozen=True)
class L1:
    lam: float

    def __post_init__(self):
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ArgumentError(f"L1 lambda must be finite and > 0, got {self.lam!r}")

    def to_dict(self):
        return {"kind": "L1", "lambda": float(self.lam)}


Regularizer = Union[L0, L1]


@dataclass(frozen=True)
class SolverConfig:
    regularizer: Regularizer
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.max_iter < 1:
            raise ArgumentError("max_iter must be positive")
        if not self.tol >= 0:
            raise ArgumentError("tol must be >= 0")

    def to_dict(self):
        return {**self.regularizer.to_dict(), "max_iter": self.max_iter, "tol": self.tol}

    @classmethod
    def from_dict(cls, d):
        if d["kind"] == "L0":
            reg = L0(int(d["sparsity"]))
        elif d["kind"] == "L1":
            reg = L1(float(d["lambda"]))
        else:
            raise ArgumentError(f"unknown regularizer {d['kind']!r}")
        return cls(reg, int(d.get("max_iter", DEFAULT_MAX_ITER)),
                   float(d.get("tol", DEFAULT_TOL)))

    def with_lambda(self, lam) -> "SolverConfig":
        return SolverConfig(L1(lam), self.max_iter, self.tol)


def lasso(lam, max_iter=DEFAULT_MAX_ITER, tol=DEFAULT_TOL) -> SolverConfig:
    return SolverConfig(L1(lam), max_iter, tol)


def omp_config(sparsity, tol=DEFAULT_TOL) -> SolverConfig:
    return SolverConfig(L0(sparsity), DEFAULT_MAX_ITER, tol)


@dataclass(frozen=True, eq=False)
class SparseCode:
    """Nonzero entries of a code over ``dict_size`` atoms.

    ``indices`` are strictly increasing; ``values`` never contain zeros.
    """

    dict_size: int
    indices: np.ndarray
    values: np.ndarray
    regularizer: Regularizer

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ShapeError("indices and values must be 1-D and equally long")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.dict_size):
            raise ArgumentError("indices must be strictly increasing within [0, dict_size)")
        if np.any(val == 0.0):
            raise ArgumentError("stored coefficients must be nonzero")
        if isinstance(self.regularizer, L0) and idx.size > self.regularizer.sparsity:
            raise ArgumentError("L0 code exceeds its sparsity budget")
        idx.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_dense(cls, y, regularizer) -> "SparseCode":
        y = np.asarray(y, dtype=np.float64)
        (idx,) = np.nonzero(y)
        return cls(y.shape[0], idx, y[idx], regularizer)

    @property
    def entries(self) -> list[tuple[int, float]]:
        return [(int(i), float(v)) for i, v in zip(self.indices, self.values)]

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def dense(self) -> np.ndarray:
        y = np.zeros(self.dict_size)
        y[self.indices] = self.values
        return y

    def __eq__(self, other):
        if not isinstance(other, SparseCode):
            return NotImplemented
        return (self.dict_size == other.dict_size
                and self.regularizer == other.regularizer
                and np.array_equal(self.indices, other.indices)
                and np.array_equal(self.values, other.values))

    def __repr__(self):
        return f"SparseCode(K={self.dict_size}, entries={self.entries}, {self.regularizer})"


def _atoms_gram(d):
    if isinstance(d, Dictionary):
        return d.atoms, d.gram
    atoms = as_matrix(d, "dictionary")
    return atoms, np.ascontiguousarray(gram(atoms))


def lasso_objective(x, D, y, lam) -> float:
    r = x - D @ y
    return float(r @ r + lam * np.abs(y).sum())


def kkt_violation(x, D, y, lam) -> float:
    """Largest violation of the LASSO optimality conditions at ``y``."""
    grad = 2.0 * (D.T @ (D @ y - x))
    viol = np.where(y != 0, np.abs(grad + lam * np.sign(y)), np.abs(grad) - lam)
    return max(float(viol.max()), 0.0)


def _kkt_gram(G, c, y, lam):
    grad = 2.0 * (G @ y - c)
    viol = np.where(y != 0, np.abs(grad + lam * np.sign(y)), np.abs(grad) - lam)
    return max(float(viol.max()), 0.0)


def _check_x(x, D):
    x = as_vector(x, "x")
    if x.shape[0] != D.shape[0]:
        raise ShapeError(f"signal length {x.shape[0]} != atom dimension {D.shape[0]}")
    return x


def omp_encode(x, d, cfg: SolverConfig) -> SparseCode:
    if not isinstance(cfg.regularizer, L0):
        raise ArgumentError("omp_encode needs an L0 solver config")
    D, G = _atoms_gram(d)
    x = _check_x(x, D)
    S = cfg.regularizer.sparsity
    if S > D.shape[1]:
        raise ArgumentError(f"sparsity {S} exceeds dictionary size {D.shape[1]}")
    support, coef, _, status = kernels.omp(D, G, x, S, cfg.tol)
    if status:
        raise NumericalError(f"OMP support system singular at iteration {status - 1}")
    order = np.argsort(support)
    keep = coef[order] != 0.0
    return SparseCode(D.shape[1], support[order][keep], coef[order][keep], cfg.regularizer)


def omp_trace(x, d, cfg: SolverConfig) -> tuple[np.ndarray, np.ndarray]:
    """Selection order and residual norm after each OMP iteration."""
    D, G = _atoms_gram(d)
    x = _check_x(x, D)
    support, _, norms, status = kernels.omp(D, G, x, cfg.regularizer.sparsity, cfg.tol)
    if status:
        raise NumericalError(f"OMP support system singular at iteration {status - 1}")
    return support, norms


def lasso_encode(x, d, cfg: SolverConfig) -> SparseCode:
    if not isinstance(cfg.regularizer, L1):
        raise ArgumentError("lasso_encode needs an L1 solver config")
    D, G = _atoms_gram(d)
    x = _check_x(x, D)
    Y = _lasso_dense(x[:, None], D, G, cfg)
    return SparseCode.from_dense(Y[:, 0], cfg.regularizer)


def _lasso_dense(X, D, G, cfg):
    # Path following gives an (almost) exact warm start; coordinate descent
    # then certifies it under the configured update/KKT tolerance.
    lam = cfg.regularizer.lam
    # per-column products: a matrix product may round differently from the
    # single-column one, and batch results must equal one-at-a-time encoding
    Dt = np.ascontiguousarray(D.T)
    C = np.empty((D.shape[1], X.shape[1]))
    for j in range(X.shape[1]):
        C[:, j] = Dt @ np.ascontiguousarray(X[:, j])
    Y = np.zeros((D.shape[1], X.shape[1]))
    kernels.lasso_path_batch(G, C, lam, Y)
    sweeps, kkt = kernels.lasso_cd_batch(G, C, lam, Y, cfg.max_iter, cfg.tol)
    bad = np.flatnonzero(kkt >= cfg.tol)
    if bad.size:
        j = int(bad[0])
        raise ConvergenceError(
            f"column {j}: coordinate descent did not converge in {cfg.max_iter} "
            f"sweeps (KKT violation {kkt[j]:.3g})", kkt_violation=float(kkt[j]),
            iterations=int(sweeps[j]))
    return Y


def encode_dense(xs, d, cfg: SolverConfig) -> np.ndarray:
    """Encode every column of ``xs``; returns the dense ``K x n`` code matrix."""
    D, G = _atoms_gram(d)
    X = as_matrix(xs, "xs")
    if X.shape[0] != D.shape[0]:
        raise ShapeError(f"signal length {X.shape[0]} != atom dimension {D.shape[0]}")
    if X.shape[1] < 1:
        raise ArgumentError("need at least one column")
    if isinstance(cfg.regularizer, L1):
        return _lasso_dense(X, D, G, cfg)
    S = cfg.regularizer.sparsity
    if S > D.shape[1]:
        raise ArgumentError(f"sparsity {S} exceeds dictionary size {D.shape[1]}")
    Y = np.zeros((D.shape[1], X.shape[1]))
    for j in range(X.shape[1]):
        support, coef, _, status = kernels.omp(D, G, np.ascontiguousarray(X[:, j]), S, cfg.tol)
        if status:
            raise NumericalError(
                f"column {j}: OMP support system singular at iteration {status - 1}")
        Y[support, j] = coef
    return Y


def batch_encode(xs, d, cfg: SolverConfig) -> list[SparseCode]:
    Y = encode_dense(xs, d, cfg)
    return [SparseCode.from_dense(Y[:, j], cfg.regularizer) for j in range(Y.shape[1])]


def encode(x, d, cfg: SolverConfig) -> SparseCode:
    """Dispatch on the regularizer kind."""
    if isinstance(cfg.regularizer, L0):
        return omp_encode(x, d, cfg)
    return lasso_encode(x, d, cfg)
